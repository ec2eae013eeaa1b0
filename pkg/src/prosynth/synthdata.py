"""Deterministic synthetic corpus with known prosody ground truth.

Each utterance is a symbol sequence (phones with stress, word breaks,
leading/trailing silence, an utterance-level phrase type) rendered to a
frame matrix: one distinct template per symbol, expanded by its duration,
with the last channel carrying a smooth pitch-like contour. Pace factors
scale all non-silence durations multiplicatively and depend partly on the
phrase type (so a predictor can recover them from symbols alone), while the
pitch variance factor is drawn independently, keeping the two control
components measurably disentangled.

Generation is reproducible: every utterance draws from its own stream
seeded by (corpus seed, utterance index), so parallel generation cannot
reorder randomness.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import fileio
from .errors import ConfigError, DataError

PHRASE_TYPES = ("affirmative", "interrogative", "exclamatory", "other")
# pace multiplier per phrase type: questions run slower, exclamations faster
PACE_BY_PHRASE = (1.0, 1.25, 0.8, 1.0)
STRESS_LEVELS = 3
REF_DURATION = 7.5  # frames; realized pace factor = mean duration / this


@dataclass
class CorpusConfig:
    alphabet_size: int = 12
    utterance_count: int = 200
    validation_count: int = 20
    min_words: int = 2
    max_words: int = 4
    min_word_len: int = 2
    max_word_len: int = 4
    feature_width: int = 8
    base_duration_min: int = 3
    base_duration_max: int = 12
    silence_duration: int = 6
    pace_sigma: float = 0.1
    pitch_span_base: float = 0.35
    pitch_sigma: float = 0.45
    speaker_pace_scale: float = 1.0
    speaker_pitch_scale: float = 1.0
    seed: int = 1234
    duration_table: list | None = None  # per-symbol base frames; drawn if None

    def __post_init__(self):
        if self.alphabet_size < 1:
            raise ConfigError("alphabet_size must be at least 1")
        if self.utterance_count < 1:
            raise ConfigError("utterance_count must be at least 1")
        if not 0 <= self.validation_count < self.utterance_count:
            raise ConfigError("validation_count must be in [0, utterance_count)")
        if self.feature_width < 2:
            raise ConfigError("feature_width must leave room for the pitch channel")
        if not 1 <= self.base_duration_min <= self.base_duration_max:
            raise ConfigError("base duration range is invalid")

    @property
    def word_break_id(self):
        return self.alphabet_size

    @property
    def silence_id(self):
        return self.alphabet_size + 1

    @property
    def vocab_size(self):
        return self.alphabet_size + 2

    @property
    def pitch_channel(self):
        return self.feature_width - 1


@dataclass
class SymbolSequence:
    """Per-position symbolic input: phone id, 3-way stress, 4-way phrase
    type, and flags for word-break and silence symbols."""

    ids: np.ndarray
    stress: np.ndarray
    phrase: np.ndarray
    word_break: np.ndarray
    silence: np.ndarray

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.stress = np.asarray(self.stress, dtype=np.int64)
        self.phrase = np.asarray(self.phrase, dtype=np.int64)
        self.word_break = np.asarray(self.word_break, dtype=bool)
        self.silence = np.asarray(self.silence, dtype=bool)
        if self.ids.size == 0:
            raise ValueError("SymbolSequence: empty sequence")

    def __len__(self):
        return int(self.ids.size)


@dataclass
class SyntheticUtterance:
    utt_id: str
    symbols: SymbolSequence
    durations: np.ndarray
    pace_factor: float
    pitch_variance: float
    pitch_contour: np.ndarray
    features: np.ndarray
    split: str = "train"

    @property
    def frame_alignment(self):
        """Ground-truth symbol index per frame, for attention scoring."""
        return np.repeat(np.arange(len(self.symbols)), self.durations)


@dataclass
class Corpus:
    config: CorpusConfig
    duration_table: np.ndarray
    templates: np.ndarray
    utterances: list = field(default_factory=list)

    def split(self, name):
        return [u for u in self.utterances if u.split == name]


# -- generation ------------------------------------------------------------------


def _corpus_tables(cfg):
    rng = np.random.default_rng((cfg.seed, 0x7AB1E5))
    if cfg.duration_table is not None:
        table = np.asarray(cfg.duration_table, dtype=np.int64)
        if table.size != cfg.vocab_size:
            raise ConfigError(f"duration_table must have {cfg.vocab_size} entries, got {table.size}")
    else:
        table = rng.integers(cfg.base_duration_min, cfg.base_duration_max + 1, size=cfg.vocab_size)
        table[cfg.word_break_id] = cfg.base_duration_min
        table[cfg.silence_id] = cfg.silence_duration
    templates = rng.uniform(0.1, 0.9, size=(cfg.vocab_size, cfg.feature_width - 1))
    templates[cfg.word_break_id] = rng.uniform(0.02, 0.08, size=cfg.feature_width - 1)
    templates[cfg.silence_id] = 0.02
    return table, templates


def _scaled_durations(table, ids, silence, pace_factor, silence_duration):
    """Non-silence durations scale multiplicatively; silences stay fixed."""
    base = table[ids].astype(np.float64)
    scaled = np.maximum(1, np.floor(base * pace_factor + 0.5)).astype(np.int64)
    scaled[silence] = silence_duration
    return scaled


def _pitch_wander(rng, total_frames):
    """Piecewise-smooth zero-mean contour with O(1) span."""
    t = np.arange(total_frames)
    p1 = rng.uniform(40.0, 80.0)
    p2 = rng.uniform(15.0, 30.0)
    ph1, ph2 = rng.uniform(0, 2 * np.pi, size=2)
    return 0.5 * np.sin(2 * np.pi * t / p1 + ph1) + 0.3 * np.sin(2 * np.pi * t / p2 + ph2)


def _build_symbols(cfg, rng):
    words = rng.integers(cfg.min_words, cfg.max_words + 1)
    phrase = int(rng.integers(0, len(PHRASE_TYPES)))
    ids, stress, brk, sil = [cfg.silence_id], [0], [False], [True]
    for w in range(words):
        if w > 0:
            ids.append(cfg.word_break_id)
            stress.append(0)
            brk.append(True)
            sil.append(False)
        for _ in range(rng.integers(cfg.min_word_len, cfg.max_word_len + 1)):
            ids.append(int(rng.integers(0, cfg.alphabet_size)))
            stress.append(int(rng.integers(0, STRESS_LEVELS)))
            brk.append(False)
            sil.append(False)
    ids.append(cfg.silence_id)
    stress.append(0)
    brk.append(False)
    sil.append(True)
    return SymbolSequence(ids, stress, np.full(len(ids), phrase), brk, sil), phrase


def render_targets(symbols, durations, pitch_contour, templates):
    """Expand per-symbol templates by duration into a frame matrix; the last
    channel is the pitch contour. An in-symbol sine envelope makes position
    within a long symbol visible to the decoder."""
    total = int(np.sum(durations))
    width = templates.shape[1] + 1
    feats = np.zeros((total, width))
    row = 0
    for sid, dur in zip(symbols.ids, durations):
        env = 0.75 + 0.25 * np.sin(np.pi * (np.arange(dur) + 0.5) / dur)
        feats[row:row + dur, :-1] = env[:, None] * templates[sid]
        row += dur
    feats[:, -1] = pitch_contour
    return feats


def generate_utterance(cfg, index, table, templates, split="train"):
    rng = np.random.default_rng((cfg.seed, index))
    symbols, phrase = _build_symbols(cfg, rng)
    drawn_pace = PACE_BY_PHRASE[phrase] * np.exp(rng.normal(0.0, cfg.pace_sigma)) * cfg.speaker_pace_scale
    durations = _scaled_durations(table, symbols.ids, symbols.silence, drawn_pace, cfg.silence_duration)
    # record the realised factor so measured pace is exactly monotone in it
    realized = float(np.mean(durations[~symbols.silence]) / REF_DURATION)
    pitch_variance = float(cfg.pitch_span_base * np.exp(rng.normal(0.0, cfg.pitch_sigma)) * cfg.speaker_pitch_scale)
    total = int(np.sum(durations))
    contour = 0.5 + pitch_variance * _pitch_wander(rng, total)
    feats = render_targets(symbols, durations, contour, templates)
    return SyntheticUtterance(
        utt_id=f"utt_{index:04d}",
        symbols=symbols,
        durations=durations,
        pace_factor=realized,
        pitch_variance=pitch_variance,
        pitch_contour=contour,
        features=feats,
        split=split,
    )


def generate_corpus(cfg):
    """Build the full corpus; the last validation_count utterances are the
    validation split."""
    table, templates = _corpus_tables(cfg)
    utterances = []
    first_val = cfg.utterance_count - cfg.validation_count
    for i in range(cfg.utterance_count):
        split = "val" if i >= first_val else "train"
        utterances.append(generate_utterance(cfg, i, table, templates, split))
    return Corpus(cfg, table, templates, utterances)


# -- symbol-string round trip --------------------------------------------------------


def symbols_to_string(symbols):
    """Compact token form: 'p<id>:<stress>' for phones, 'wb', 'sil'."""
    toks = []
    for i in range(len(symbols)):
        if symbols.silence[i]:
            toks.append("sil")
        elif symbols.word_break[i]:
            toks.append("wb")
        else:
            toks.append(f"p{symbols.ids[i]}:{symbols.stress[i]}")
    return " ".join(toks)


def symbols_from_string(text, cfg, phrase=0):
    """Parse the compact token form back into a SymbolSequence."""
    ids, stress, brk, sil = [], [], [], []
    for tok in text.split():
        if tok == "sil":
            ids.append(cfg.silence_id)
            stress.append(0)
            brk.append(False)
            sil.append(True)
        elif tok == "wb":
            ids.append(cfg.word_break_id)
            stress.append(0)
            brk.append(True)
            sil.append(False)
        elif tok.startswith("p"):
            body = tok[1:]
            pid, _, st = body.partition(":")
            pid = int(pid)
            if not 0 <= pid < cfg.alphabet_size:
                raise DataError(f"symbol id {pid} outside alphabet of {cfg.alphabet_size}")
            ids.append(pid)
            stress.append(int(st) if st else 0)
            brk.append(False)
            sil.append(False)
        else:
            raise DataError(f"unknown symbol token {tok!r}")
    if not ids:
        raise DataError("empty symbol string")
    return SymbolSequence(ids, stress, np.full(len(ids), phrase), brk, sil)


# -- disk format -----------------------------------------------------------------------


def save_corpus(corpus, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "feats").mkdir(exist_ok=True)
    meta = {
        "version": 1,
        "config": asdict(corpus.config),
        "duration_table": corpus.duration_table.tolist(),
    }
    with open(out / "corpus_meta.json", "w", encoding="ascii", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    fileio.save_matrix(out / "templates.bin", corpus.templates)
    with open(out / "utterances.jsonl", "w", encoding="ascii", newline="\n") as fh:
        for u in corpus.utterances:
            record = {
                "id": u.utt_id,
                "symbols": symbols_to_string(u.symbols),
                "phrase": int(u.symbols.phrase[0]),
                "durations": u.durations.tolist(),
                "pace_factor": u.pace_factor,
                "pitch_variance": u.pitch_variance,
                "split": u.split,
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    for u in corpus.utterances:
        fileio.save_matrix(out / "feats" / f"{u.utt_id}.bin", u.features)


def load_corpus(corpus_dir):
    root = Path(corpus_dir)
    meta_path = root / "corpus_meta.json"
    if not meta_path.exists():
        raise DataError(f"{corpus_dir}: not a corpus directory (missing corpus_meta.json)")
    with open(meta_path, "r", encoding="ascii") as fh:
        meta = json.load(fh)
    if meta.get("version") != 1:
        raise DataError(f"{corpus_dir}: unsupported corpus version {meta.get('version')}")
    cfg_dict = meta["config"]
    cfg = CorpusConfig(**cfg_dict)
    table = np.asarray(meta["duration_table"], dtype=np.int64)
    templates = fileio.load_matrix(root / "templates.bin")
    utterances = []
    with open(root / "utterances.jsonl", "r", encoding="ascii") as fh:
        for line in fh:
            rec = json.loads(line)
            symbols = symbols_from_string(rec["symbols"], cfg, phrase=rec["phrase"])
            feats = fileio.load_matrix(root / "feats" / f"{rec['id']}.bin")
            utterances.append(SyntheticUtterance(
                utt_id=rec["id"],
                symbols=symbols,
                durations=np.asarray(rec["durations"], dtype=np.int64),
                pace_factor=rec["pace_factor"],
                pitch_variance=rec["pitch_variance"],
                pitch_contour=feats[:, -1].copy(),
                features=feats,
                split=rec["split"],
            ))
    return Corpus(cfg, table, templates, utterances)
