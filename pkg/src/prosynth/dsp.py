"""Vocoder-support signal processing.

Covers the conditioning/training chain around a neural waveform generator:
256-level mu-law companding, first-order emphasis noise shaping, a
look-ahead limiter keeping de-emphasised audio 16-bit safe, silence-anchored
training-segment selection, mel-spectrogram extraction, nearest-frame
upsampling, and an autocorrelation pitch tracker for prosody statistics.

All functions are pure and reentrant; batch them per utterance as you like.
"""

from __future__ import annotations

import wave
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window, lfilter

from .errors import DataError

DEFAULT_RATE = 22050
DEFAULT_EMPHASIS = 0.85  # first-order noise-shaping coefficient
PCM16_LIMIT = 1.0 - 2.0 ** -15  # largest magnitude a 16-bit sample can carry
MULAW_LEVELS = 256
MEL_LOG_FLOOR = 1e-5


@dataclass
class AudioBuffer:
    """Mono audio: float samples nominally in [-1, 1] plus a sample rate."""

    samples: np.ndarray
    rate: int = DEFAULT_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.rate <= 0:
            raise ValueError(f"AudioBuffer: rate must be positive, got {self.rate}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("AudioBuffer: non-finite samples")


@dataclass
class MelConfig:
    """Framing and filter-bank layout for mel feature extraction."""

    hop: int = 256
    window: int = 1024
    channels: int = 80
    rate: int = DEFAULT_RATE

    def __post_init__(self):
        if self.hop > self.window:
            raise ValueError(f"MelConfig: hop {self.hop} exceeds window {self.window}")
        if self.channels < 1:
            raise ValueError("MelConfig: need at least one mel channel")


# -- mu-law companding -------------------------------------------------------------


def mulaw_encode(x):
    """Compand to 256 uniform levels: mid-rise quantiser in the companded
    domain, code 128 for 0, 255 for +1, 0 for -1. Inputs beyond [-1, 1] are
    clipped with a warning."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("mulaw_encode: non-finite input")
    if np.any(np.abs(x) > 1.0):
        warnings.warn("mulaw_encode: input exceeds [-1, 1], clipping", stacklevel=2)
        x = np.clip(x, -1.0, 1.0)
    mu = MULAW_LEVELS - 1.0
    y = np.sign(x) * np.log1p(mu * np.abs(x)) / np.log(MULAW_LEVELS)
    code = np.floor((y + 1.0) / 2.0 * MULAW_LEVELS)
    return np.clip(code, 0, MULAW_LEVELS - 1).astype(np.int64)


def mulaw_decode(code):
    """Expand a code back to the centre of its companded bin."""
    code = np.asarray(code)
    if np.any(code < 0) or np.any(code > MULAW_LEVELS - 1):
        raise ValueError("mulaw_decode: code outside [0, 255]")
    mu = MULAW_LEVELS - 1.0
    y = (code + 0.5) / MULAW_LEVELS * 2.0 - 1.0
    return np.sign(y) * (np.power(MULAW_LEVELS, np.abs(y)) - 1.0) / mu


def mulaw_max_roundtrip_error():
    """Analytic worst-case |x - decode(encode(x))| over [-1, 1]: the largest
    one-sided distance from any bin edge to that bin's decode point."""
    codes = np.arange(MULAW_LEVELS)
    mu = MULAW_LEVELS - 1.0

    def expand(y):
        return np.sign(y) * (np.power(MULAW_LEVELS, np.abs(y)) - 1.0) / mu

    lo = expand(codes / MULAW_LEVELS * 2.0 - 1.0)
    hi = expand(np.minimum((codes + 1.0) / MULAW_LEVELS * 2.0 - 1.0, 1.0))
    centre = mulaw_decode(codes)
    return float(np.max(np.maximum(hi - centre, centre - lo)))


# -- emphasis noise shaping ----------------------------------------------------------


def preemphasis(x, coeff=DEFAULT_EMPHASIS):
    """y[n] = x[n] - coeff * x[n-1] with zero initial state."""
    if not 0.0 <= coeff < 1.0:
        raise ValueError(f"preemphasis: coeff must be in [0, 1), got {coeff}")
    x = np.asarray(x, dtype=np.float64)
    return lfilter([1.0, -coeff], [1.0], x)


def deemphasis(x, coeff=DEFAULT_EMPHASIS):
    """Exact inverse of preemphasis: y[n] = x[n] + coeff * y[n-1]."""
    if not 0.0 <= coeff < 1.0:
        raise ValueError(f"deemphasis: coeff must be in [0, 1), got {coeff}")
    x = np.asarray(x, dtype=np.float64)
    return lfilter([1.0], [1.0, -coeff], x)


# -- look-ahead gain limiting ---------------------------------------------------------


def agc_limit(x, lookahead=1024, block=512):
    """Limit a signal into the 16-bit-safe range with a smooth gain curve.

    Per-block required gain is computed over the block extended `lookahead`
    samples forward, eroded with the previous block (so the curve dips before
    a peak arrives), then raised-cosine interpolated between block
    boundaries. In-range input passes through with unity gain.

    Returns (limited samples, per-sample gain).
    """
    if lookahead < 0:
        raise ValueError("agc_limit: lookahead must be >= 0")
    if block < 1:
        raise ValueError("agc_limit: block must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    gain = np.ones(n)
    if n == 0 or np.max(np.abs(x)) <= PCM16_LIMIT:
        return x.copy(), gain
    n_blocks = (n + block - 1) // block
    required = np.ones(n_blocks)
    for b in range(n_blocks):
        peak = np.max(np.abs(x[b * block:(b + 1) * block + lookahead]))
        if peak > PCM16_LIMIT:
            required[b] = PCM16_LIMIT / peak
    # boundary control points: erode so every sample's gain stays at or
    # below its own block's required gain
    bounds = np.empty(n_blocks + 1)
    bounds[0] = required[0]
    bounds[-1] = required[-1]
    bounds[1:-1] = np.minimum(required[:-1], required[1:])
    for b in range(n_blocks):
        lo = b * block
        hi = min(lo + block, n)
        u = (np.arange(lo, hi) - lo) / block
        ramp = 0.5 * (1.0 - np.cos(np.pi * u))
        gain[lo:hi] = bounds[b] + (bounds[b + 1] - bounds[b]) * ramp
    return x * gain, gain


# -- silence analysis -----------------------------------------------------------------


def frame_rms(x, frame):
    """Root-mean-square per non-overlapping frame (final partial included)."""
    x = np.asarray(x, dtype=np.float64)
    if frame <= 0:
        raise ValueError("frame_rms: frame must be positive")
    out = []
    for start in range(0, x.size, frame):
        seg = x[start:start + frame]
        out.append(float(np.sqrt(np.mean(seg * seg))))
    return np.asarray(out)


def detect_silence(x, rate=DEFAULT_RATE, frame=256, rel_db=40.0, min_run_s=0.05):
    """Find silent sample ranges by short-time energy.

    A frame is silent when its RMS falls more than rel_db below the
    utterance's 0.95-quantile frame RMS. Adjacent silent frames merge;
    runs shorter than min_run_s are dropped. Returns [(start, end), ...).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return []
    rms = frame_rms(x, frame)
    threshold = max(float(np.quantile(rms, 0.95)) * 10.0 ** (-rel_db / 20.0), 1e-12)
    silent = rms < threshold
    min_run = int(min_run_s * rate)
    regions = []
    start = None
    for i, s in enumerate(np.append(silent, False)):
        if s and start is None:
            start = i
        elif not s and start is not None:
            lo, hi = start * frame, min(i * frame, x.size)
            if hi - lo >= min_run:
                regions.append((lo, hi))
            start = None
    return regions


def select_training_segments(x, seg_len, rate=DEFAULT_RATE, frame=256, rel_db=40.0,
                             min_run_s=0.05, stride=256):
    """Offsets of training segments that begin inside silent regions.

    Every offset lies in a detected silent region and leaves room for a full
    segment. Returns an empty list (with a warning) when nothing is silent.
    """
    x = np.asarray(x, dtype=np.float64)
    if seg_len > x.size:
        raise ValueError(f"select_training_segments: segment {seg_len} exceeds audio {x.size}")
    regions = detect_silence(x, rate=rate, frame=frame, rel_db=rel_db, min_run_s=min_run_s)
    if not regions:
        warnings.warn("select_training_segments: no silent regions found", stacklevel=2)
        return []
    last_valid = x.size - seg_len
    offsets = []
    for lo, hi in regions:
        for off in range(lo, hi, stride):
            if off <= last_valid:
                offsets.append(off)
    return offsets


# -- mel features ----------------------------------------------------------------------


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg):
    """Triangular filters on the HTK mel scale from 0 Hz to Nyquist.

    Returns (channels, window // 2 + 1) weights.
    """
    n_bins = cfg.window // 2 + 1
    freqs = np.arange(n_bins) * cfg.rate / cfg.window
    points = mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(cfg.rate / 2.0), cfg.channels + 2))
    fb = np.zeros((cfg.channels, n_bins))
    for m in range(cfg.channels):
        lower, centre, upper = points[m], points[m + 1], points[m + 2]
        up = (freqs - lower) / (centre - lower)
        down = (upper - freqs) / (upper - centre)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def frame_count(n_samples, cfg):
    """Non-centred framing: floor((len - window) / hop) + 1."""
    if n_samples < cfg.window:
        return 0
    return (n_samples - cfg.window) // cfg.hop + 1


def melspectrogram(x, cfg=None):
    """Log-compressed mel magnitudes, (frames, channels).

    Hann-windowed magnitude spectrum per non-centred frame through the
    triangular bank, natural log with floor 1e-5.
    """
    cfg = cfg or MelConfig()
    x = np.asarray(x, dtype=np.float64)
    frames = frame_count(x.size, cfg)
    if frames == 0:
        raise ValueError(f"melspectrogram: audio ({x.size} samples) shorter than window {cfg.window}")
    win = get_window("hann", cfg.window, fftbins=True)
    fb = mel_filterbank(cfg)
    out = np.empty((frames, cfg.channels))
    for t in range(frames):
        seg = x[t * cfg.hop:t * cfg.hop + cfg.window]
        mag = np.abs(np.fft.rfft(seg * win))
        out[t] = fb @ mag
    return np.log(np.maximum(out, MEL_LOG_FLOOR))


def upsample_nearest(mel, hop):
    """Repeat each frame hop times; output length is frames * hop exactly."""
    if hop <= 0:
        raise ValueError("upsample_nearest: hop must be positive")
    return np.repeat(np.asarray(mel), hop, axis=0)


# -- pitch tracking ----------------------------------------------------------------------


def estimate_pitch(x, rate=DEFAULT_RATE, fmin=50.0, fmax=500.0, window=1024, hop=256,
                   voicing_threshold=0.5):
    """Frame-wise log-pitch via the normalised autocorrelation peak.

    A frame is voiced when acf[lag]/acf[0] peaks above voicing_threshold
    inside the lag range for [fmin, fmax]. The biased estimator's taper
    keeps the argmax on the fundamental rather than its multiples. Returns
    (log_pitch, voiced mask); log_pitch is 0 on unvoiced frames.
    """
    x = np.asarray(x, dtype=np.float64)
    frames = frame_count(x.size, MelConfig(hop=hop, window=window, rate=rate))
    log_pitch = np.zeros(frames)
    voiced = np.zeros(frames, dtype=bool)
    lag_min = max(1, int(rate / fmax))
    lag_max = min(window - 1, int(np.ceil(rate / fmin)))
    if lag_max <= lag_min:
        raise ValueError("estimate_pitch: lag range is empty for this window")
    for t in range(frames):
        seg = x[t * hop:t * hop + window]
        seg = seg - seg.mean()
        energy = float(seg @ seg)
        if energy < 1e-10:
            continue
        spec = np.fft.rfft(seg, 2 * window)
        acf = np.fft.irfft(spec * np.conj(spec))[:window].real
        lags = np.arange(lag_min, lag_max + 1)
        rho = acf[lags] / acf[0]
        k = int(np.argmax(rho))
        if rho[k] > voicing_threshold:
            voiced[t] = True
            log_pitch[t] = np.log(rate / lags[k])
    return log_pitch, voiced


# -- WAV I/O -------------------------------------------------------------------------------


def save_wav(path, samples, rate=DEFAULT_RATE):
    """Write mono 16-bit little-endian PCM."""
    samples = np.asarray(samples, dtype=np.float64)
    pcm = np.rint(np.clip(samples, -1.0, 1.0) * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(pcm.tobytes())


def load_wav(path, expect_rate=None):
    """Read mono 16-bit PCM into an AudioBuffer, scaled to [-1, 1]."""
    try:
        with wave.open(str(path), "rb") as fh:
            if fh.getnchannels() != 1:
                raise DataError(f"{path}: expected mono, got {fh.getnchannels()} channels")
            if fh.getsampwidth() != 2:
                raise DataError(f"{path}: expected 16-bit PCM, got {fh.getsampwidth() * 8}-bit")
            rate = fh.getframerate()
            raw = fh.readframes(fh.getnframes())
    except wave.Error as exc:
        raise DataError(f"{path}: malformed WAV ({exc})") from exc
    if expect_rate is not None and rate != expect_rate:
        raise DataError(f"{path}: sample rate {rate} does not match configured {expect_rate}")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32767.0
    return AudioBuffer(samples, rate)
