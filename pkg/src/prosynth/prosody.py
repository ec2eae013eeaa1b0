"""Utterance-level prosody observations and their prediction.

Two interpretable components per utterance:
  pace       -- natural log of the mean phoneme duration in seconds,
                silences excluded;
  pitch_span -- 0.95-quantile minus 0.05-quantile of log-pitch over voiced
                frames.
Both are normalised per speaker so that median +/- 3 std maps to [-1, 1].
A small stacked-recurrent predictor regresses the normalised pair from the
encoder output sequence, so synthesis can run without measured prosody and
accept deliberate component-wise offsets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

MIN_VOICED_FRAMES = 20
MIN_STATS_UTTERANCES = 10
EFFICIENT_SPAN_STDS = 3.0


class TooFewVoicedFrames(ValueError):
    """Quantiles would be meaningless; skip this utterance for statistics."""


@dataclass
class ProsodyInfo:
    pace: float
    pitch_span: float

    def as_array(self):
        return np.array([self.pace, self.pitch_span])


@dataclass
class NormalizedProsody:
    pace: float
    pitch_span: float

    def as_array(self):
        return np.array([self.pace, self.pitch_span])


@dataclass
class SpeakerStats:
    """Per-component median and population std over a speaker's utterances."""

    pace_median: float
    pace_std: float
    span_median: float
    span_std: float

    def __post_init__(self):
        if self.pace_std <= 0 or self.span_std <= 0:
            raise ValueError("SpeakerStats: std must be positive (degenerate corpus)")


# -- extraction -----------------------------------------------------------------


def compute_pace(durations, silence_flags, frame_period):
    """ln(mean non-silence phoneme duration in seconds)."""
    if frame_period <= 0:
        raise ValueError("compute_pace: frame_period must be positive")
    durations = np.asarray(durations, dtype=np.float64)
    silence = np.asarray(silence_flags, dtype=bool)
    if durations.shape != silence.shape:
        raise ValueError("compute_pace: durations and silence flags differ in length")
    voiced = durations[~silence]
    if voiced.size == 0:
        raise ValueError("compute_pace: utterance contains only silence")
    return float(np.log(voiced.mean() * frame_period))


def compute_pitch_span(log_pitch, voiced, min_voiced=MIN_VOICED_FRAMES):
    """Empirical q0.95 - q0.05 of log-pitch over voiced frames.

    Uses the linear-interpolation quantile estimator. Raises
    TooFewVoicedFrames below min_voiced frames.
    """
    log_pitch = np.asarray(log_pitch, dtype=np.float64)
    voiced = np.asarray(voiced, dtype=bool)
    vals = log_pitch[voiced]
    if vals.size < min_voiced:
        raise TooFewVoicedFrames(f"{vals.size} voiced frames, need {min_voiced}")
    return float(np.quantile(vals, 0.95) - np.quantile(vals, 0.05))


# -- per-speaker normalisation -----------------------------------------------------


def fit_speaker_stats(infos, min_count=MIN_STATS_UTTERANCES):
    """Component-wise median and population standard deviation."""
    if len(infos) < min_count:
        raise ValueError(f"fit_speaker_stats: need >= {min_count} utterances, got {len(infos)}")
    paces = np.array([p.pace for p in infos])
    spans = np.array([p.pitch_span for p in infos])
    pace_std = float(np.std(paces))
    span_std = float(np.std(spans))
    if pace_std == 0.0 or span_std == 0.0:
        raise ValueError("fit_speaker_stats: zero variance (degenerate corpus)")
    return SpeakerStats(float(np.median(paces)), pace_std, float(np.median(spans)), span_std)


def normalize(info, stats):
    """Map the efficient span (median +/- 3 std) onto [-1, 1]; values outside
    pass through un-clamped."""
    return NormalizedProsody(
        (info.pace - stats.pace_median) / (EFFICIENT_SPAN_STDS * stats.pace_std),
        (info.pitch_span - stats.span_median) / (EFFICIENT_SPAN_STDS * stats.span_std),
    )


def denormalize(norm, stats):
    return ProsodyInfo(
        stats.pace_median + EFFICIENT_SPAN_STDS * stats.pace_std * norm.pace,
        stats.span_median + EFFICIENT_SPAN_STDS * stats.span_std * norm.pitch_span,
    )


def apply_offset(norm, offset):
    """Shift each component by a deliberate offset in [-1, 1]; the sum is
    intentionally not clamped."""
    dp, ds = float(offset[0]), float(offset[1])
    for v in (dp, ds):
        if not -1.0 <= v <= 1.0:
            raise ValueError(f"apply_offset: offset {v} outside [-1, 1]")
    return NormalizedProsody(norm.pace + dp, norm.pitch_span + ds)


# -- embedding and conditioning ------------------------------------------------------


def embed(norm, weight):
    """tanh(W @ p): unbiased 2x2 projection into (-1, 1)^2."""
    weight = np.asarray(weight, dtype=np.float64)
    if weight.shape != (2, 2):
        raise ValueError(f"embed: weight must be 2x2, got {weight.shape}")
    vec = norm.as_array() if hasattr(norm, "as_array") else np.asarray(norm, dtype=np.float64)
    return np.tanh(weight @ vec)


def condition_encoder(encoder_outputs, embedding):
    """Append the same 2 embedding values to every encoder output vector."""
    seq = np.asarray(encoder_outputs, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[0] == 0:
        raise ValueError(f"condition_encoder: expected non-empty (T, D) sequence, got {seq.shape}")
    emb = np.asarray(embedding, dtype=np.float64).reshape(2)
    return np.concatenate([seq, np.tile(emb, (seq.shape[0], 1))], axis=1)


# -- the prediction module --------------------------------------------------------------


@dataclass
class PredictorConfig:
    width: int = 32
    layers: int = 3
    epochs: int = 60
    learning_rate: float = 0.03
    momentum: float = 0.9
    batch_size: int = 16
    seed: int = 0


class ProsodyPredictor:
    """Stacked recurrent network over encoder outputs, linear head of size 2.

    The final recurrent state feeds the output layer. Frozen predictors are
    read-only and therefore thread-safe.
    """

    def __init__(self, input_dim, width=32, layers=3, seed=0):
        self.input_dim = input_dim
        self.width = width
        self.layers = layers
        rng = np.random.default_rng(seed)
        self.params = {}
        for l in range(layers):
            in_dim = input_dim if l == 0 else width
            self.params[f"lstm{l}.wx"] = ad.parameter(ad.glorot(rng, in_dim, 4 * width), name=f"lstm{l}.wx")
            self.params[f"lstm{l}.wh"] = ad.parameter(ad.glorot(rng, width, 4 * width), name=f"lstm{l}.wh")
            bias = np.zeros(4 * width)
            bias[width:2 * width] = 1.0  # forget-gate bias
            self.params[f"lstm{l}.b"] = ad.parameter(bias, name=f"lstm{l}.b")
        self.params["out.w"] = ad.parameter(ad.glorot(rng, width, 2), name="out.w")
        self.params["out.b"] = ad.parameter(np.zeros(2), name="out.b")

    def forward(self, sequence):
        """Graph-building forward pass; returns a (2,) Tensor."""
        seq = np.asarray(sequence, dtype=np.float64)
        if seq.ndim != 2 or seq.shape[0] == 0:
            raise ValueError(f"predictor: expected non-empty (T, D) sequence, got {seq.shape}")
        if seq.shape[1] != self.input_dim:
            raise ValueError(f"predictor: input dim {seq.shape[1]}, expected {self.input_dim}")
        h = [ad.Tensor(np.zeros(self.width)) for _ in range(self.layers)]
        c = [ad.Tensor(np.zeros(self.width)) for _ in range(self.layers)]
        for t in range(seq.shape[0]):
            x = ad.Tensor(seq[t])
            for l in range(self.layers):
                h[l], c[l] = ad.lstm_step(
                    x, h[l], c[l],
                    self.params[f"lstm{l}.wx"], self.params[f"lstm{l}.wh"], self.params[f"lstm{l}.b"],
                )
                x = h[l]
        return ad.add(ad.matmul(x, self.params["out.w"]), self.params["out.b"])

    def predict(self, sequence):
        """Deterministic (2,) prediction as NormalizedProsody."""
        out = self.forward(sequence).data
        return NormalizedProsody(float(out[0]), float(out[1]))

    def state_tensors(self):
        return {k: p.data for k, p in self.params.items()}

    def load_state_tensors(self, table):
        for k, p in self.params.items():
            p.data = np.asarray(table[k], dtype=np.float64)


def train_predictor(dataset, config=None, log=None):
    """Fit a ProsodyPredictor by MSE on (encoder outputs, normalised prosody).

    The dataset must come from a frozen main model, with encoder outputs
    taken before prosody concatenation. Returns (predictor, per-epoch
    training MSE list).
    """
    config = config or PredictorConfig()
    if not dataset:
        raise ValueError("train_predictor: empty dataset")
    input_dim = np.asarray(dataset[0][0]).shape[1]
    predictor = ProsodyPredictor(input_dim, width=config.width, layers=config.layers, seed=config.seed)
    opt = ad.SGD(predictor.params, lr=config.learning_rate, momentum=config.momentum)
    history = []
    for epoch in range(config.epochs):
        order = np.random.default_rng((config.seed, epoch)).permutation(len(dataset))
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            opt.zero_grad()
            losses = []
            for i in batch:
                seq, target = dataset[i]
                out = predictor.forward(seq)
                diff = ad.add(out, ad.Tensor(-np.asarray(target, dtype=np.float64)))
                losses.append(ad.mean_(ad.mul(diff, diff)))
            total = losses[0]
            for extra in losses[1:]:
                total = ad.add(total, extra)
            ad.mul(total, 1.0 / len(batch)).backward()
            opt.step()
        mse = evaluate_predictor(predictor, dataset)
        history.append(mse)
        if log is not None:
            log(epoch, mse)
    return predictor, history


def evaluate_predictor(predictor, dataset):
    """Mean squared error over a dataset."""
    total = 0.0
    for seq, target in dataset:
        out = predictor.forward(seq).data
        diff = out - np.asarray(target, dtype=np.float64)
        total += float(np.mean(diff * diff))
    return total / len(dataset)


# -- table export -----------------------------------------------------------------------


PROSODY_CSV_HEADER = "utt_id,pace,pitch_span,norm_pace,norm_pitch_span,status"
STATS_FORMAT_VERSION = 1


def write_prosody_table(path, rows):
    """rows: (utt_id, pace, pitch_span, norm_pace, norm_pitch_span, status);
    numeric fields may be None for flagged utterances."""

    def fmt(x):
        return "" if x is None else repr(float(x))

    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(PROSODY_CSV_HEADER + "\n")
        for utt_id, pace, span, npace, nspan, status in rows:
            fh.write(f"{utt_id},{fmt(pace)},{fmt(span)},{fmt(npace)},{fmt(nspan)},{status}\n")


def read_prosody_table(path):
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != PROSODY_CSV_HEADER:
            raise ValueError(f"{path}: unexpected prosody table header {header!r}")
        for line in fh:
            utt_id, pace, span, npace, nspan, status = line.rstrip("\n").split(",")
            num = lambda s: None if s == "" else float(s)
            rows.append((utt_id, num(pace), num(span), num(npace), num(nspan), status))
    return rows


def save_speaker_stats(path, stats):
    payload = {
        "version": STATS_FORMAT_VERSION,
        "pace": {"median": stats.pace_median, "std": stats.pace_std},
        "pitch_span": {"median": stats.span_median, "std": stats.span_std},
    }
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_speaker_stats(path):
    with open(path, "r", encoding="ascii") as fh:
        payload = json.load(fh)
    if payload.get("version") != STATS_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported speaker stats version {payload.get('version')}")
    return SpeakerStats(
        payload["pace"]["median"], payload["pace"]["std"],
        payload["pitch_span"]["median"], payload["pitch_span"]["std"],
    )
