"""Controllable sequence-to-sequence synthesis toolkit.

Desk-scale encoder/decoder with structure-preserving augmented attention,
utterance-level prosody control (pace, pitch span), and the vocoder-support
DSP chain (mu-law, emphasis noise shaping, AGC, mel features).
"""

__version__ = "0.1.0"
