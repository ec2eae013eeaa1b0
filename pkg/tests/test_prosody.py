"""Prosody extraction, normalisation, and predictor tests."""

import math

import numpy as np
import pytest

from prosynth import prosody
from prosynth.prosody import (
    NormalizedProsody,
    PredictorConfig,
    ProsodyInfo,
    TooFewVoicedFrames,
    apply_offset,
    compute_pace,
    compute_pitch_span,
    condition_encoder,
    denormalize,
    embed,
    fit_speaker_stats,
    normalize,
    train_predictor,
)

FRAME_PERIOD = 256 / 22050


# -- pace --------------------------------------------------------------------------


def test_pace_direct_arithmetic():
    got = compute_pace([5, 10, 15], [False, False, False], FRAME_PERIOD)
    assert got == pytest.approx(math.log(10 * FRAME_PERIOD), abs=1e-12)
    assert got == pytest.approx(-2.1533, abs=1e-3)


def test_pace_one_second_phoneme():
    assert compute_pace([100], [False], 0.01) == pytest.approx(0.0, abs=1e-12)


def test_pace_excludes_silence():
    with_sil = compute_pace([10, 10], [False, True], FRAME_PERIOD)
    without = compute_pace([10], [False], FRAME_PERIOD)
    assert with_sil == without


def test_pace_silence_never_changes_it():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(1, 12))
        durs = rng.integers(1, 30, size=n).tolist()
        base = compute_pace(durs, [False] * n, FRAME_PERIOD)
        extra = rng.integers(1, 100, size=3).tolist()
        padded = compute_pace(durs + extra, [False] * n + [True] * 3, FRAME_PERIOD)
        assert padded == pytest.approx(base, abs=1e-12)


def test_pace_scale_equivariance():
    durs = [4, 9, 7, 12]
    base = compute_pace(durs, [False] * 4, FRAME_PERIOD)
    scaled = compute_pace([3 * d for d in durs], [False] * 4, FRAME_PERIOD)
    assert scaled - base == pytest.approx(math.log(3), abs=1e-12)


def test_pace_rejects_all_silence():
    with pytest.raises(ValueError):
        compute_pace([5, 8], [True, True], FRAME_PERIOD)


# -- pitch span ---------------------------------------------------------------------


def test_span_constant_pitch():
    lp = np.full(50, math.log(150.0))
    assert compute_pitch_span(lp, np.ones(50, bool)) == 0.0


def test_span_uniform_grid():
    lp = np.linspace(math.log(100), math.log(200), 1000)
    got = compute_pitch_span(lp, np.ones(1000, bool))
    assert got == pytest.approx(0.9 * math.log(2), abs=1e-12)
    assert got == pytest.approx(0.623832, abs=1e-6)


def test_span_explicit_list_quantile_oracle():
    vals = np.arange(1.0, 101.0)
    got = compute_pitch_span(vals, np.ones(100, bool))
    # linear-interpolation estimator: q95 = 95.05, q05 = 5.95
    assert got == pytest.approx(95.05 - 5.95, abs=1e-9)


def test_span_ignores_unvoiced():
    lp = np.concatenate([np.full(30, 5.0), np.full(30, -100.0)])
    voiced = np.concatenate([np.ones(30, bool), np.zeros(30, bool)])
    assert compute_pitch_span(lp, voiced) == 0.0


def test_span_too_few_voiced():
    with pytest.raises(TooFewVoicedFrames):
        compute_pitch_span(np.zeros(100), np.zeros(100, bool))


def test_span_pitch_scaling_invariance():
    rng = np.random.default_rng(1)
    pitch = rng.uniform(100, 300, size=200)
    voiced = np.ones(200, bool)
    base = compute_pitch_span(np.log(pitch), voiced)
    scaled = compute_pitch_span(np.log(2.5 * pitch), voiced)
    assert scaled == pytest.approx(base, abs=1e-12)


# -- speaker stats and normalisation ----------------------------------------------------


def stats_fixture():
    values = [ProsodyInfo(p, s) for p, s in zip([-2, -1, 0, 1, 2] * 2, [1, 2, 3, 4, 5] * 2)]
    return fit_speaker_stats(values)


def test_fit_stats_median_and_std():
    s = stats_fixture()
    assert s.pace_median == 0.0
    assert s.pace_std == pytest.approx(math.sqrt(2), abs=1e-12)


def test_fit_stats_median_robust_to_outlier():
    base = [ProsodyInfo(float(p), 1.0 + 0.1 * p) for p in [-2, -1, 0, 1, 2] * 2]
    with_outlier = base + [ProsodyInfo(500.0, 0.0)]
    assert fit_speaker_stats(with_outlier).pace_median == fit_speaker_stats(base).pace_median


def test_fit_stats_rejects_identical():
    with pytest.raises(ValueError):
        fit_speaker_stats([ProsodyInfo(1.0, 2.0)] * 12)


def test_fit_stats_rejects_small_corpus():
    with pytest.raises(ValueError):
        fit_speaker_stats([ProsodyInfo(float(i), float(i)) for i in range(5)])


def test_normalize_anchor_points():
    s = stats_fixture()
    at_median = normalize(ProsodyInfo(s.pace_median, s.span_median), s)
    assert at_median.pace == 0.0 and at_median.pitch_span == 0.0
    hi = normalize(ProsodyInfo(s.pace_median + 3 * s.pace_std, s.span_median), s)
    assert hi.pace == pytest.approx(1.0, abs=1e-12)
    mid = normalize(ProsodyInfo(s.pace_median - 1.5 * s.pace_std, s.span_median), s)
    assert mid.pace == pytest.approx(-0.5, abs=1e-12)


def test_normalize_no_clamping():
    s = stats_fixture()
    out = normalize(ProsodyInfo(s.pace_median + 9 * s.pace_std, s.span_median), s)
    assert out.pace == pytest.approx(3.0, abs=1e-12)


def test_normalize_roundtrip():
    rng = np.random.default_rng(2)
    s = stats_fixture()
    for _ in range(100):
        info = ProsodyInfo(rng.normal(), abs(rng.normal()))
        back = denormalize(normalize(info, s), s)
        assert back.pace == pytest.approx(info.pace, abs=1e-12)
        assert back.pitch_span == pytest.approx(info.pitch_span, abs=1e-12)


# -- offsets ------------------------------------------------------------------------------


def test_offset_identity():
    p = NormalizedProsody(0.3, -0.2)
    out = apply_offset(p, (0.0, 0.0))
    assert (out.pace, out.pitch_span) == (0.3, -0.2)


def test_offset_reported_settings():
    # the two settings called out as per-voice bests
    out = apply_offset(NormalizedProsody(0.0, 0.0), (-0.1, 0.5))
    assert (out.pace, out.pitch_span) == (-0.1, 0.5)
    out = apply_offset(NormalizedProsody(0.2, 0.1), (0.5, 1.0))
    assert out.pace == pytest.approx(0.7)


def test_offset_rejects_out_of_range():
    with pytest.raises(ValueError):
        apply_offset(NormalizedProsody(0, 0), (1.5, 0.0))
    with pytest.raises(ValueError):
        apply_offset(NormalizedProsody(0, 0), (0.0, -1.01))


def test_offset_additivity():
    p = NormalizedProsody(0.1, -0.3)
    a, b = (0.2, -0.1), (0.3, 0.4)
    two_step = apply_offset(apply_offset(p, a), b)
    one_step = apply_offset(p, (a[0] + b[0], a[1] + b[1]))
    assert two_step.pace == pytest.approx(one_step.pace, abs=1e-15)
    assert two_step.pitch_span == pytest.approx(one_step.pitch_span, abs=1e-15)


# -- embedding and conditioning -------------------------------------------------------------


def test_embed_zero_input():
    out = embed(NormalizedProsody(0.0, 0.0), np.eye(2))
    assert np.array_equal(out, [0.0, 0.0])


def test_embed_identity_weight():
    out = embed(NormalizedProsody(0.5, -0.5), np.eye(2))
    assert np.allclose(out, [math.tanh(0.5), -math.tanh(0.5)])
    assert out[0] == pytest.approx(0.462117, abs=1e-6)


def test_embed_output_bounded():
    # realistic domain: normalised values nominally in [-1, 1] plus offsets
    rng = np.random.default_rng(3)
    for _ in range(100):
        p = NormalizedProsody(*rng.uniform(-2, 2, size=2))
        out = embed(p, rng.uniform(-2, 2, size=(2, 2)))
        assert (np.abs(out) < 1.0).all()


def test_condition_encoder_shapes():
    seq = np.ones((5, 7))
    out = condition_encoder(seq, [0.0, 0.0])
    assert out.shape == (5, 9)
    assert np.array_equal(out[:, 7:], np.zeros((5, 2)))
    out2 = condition_encoder(seq, [0.3, -0.4])
    assert (out2[:, 7] == 0.3).all() and (out2[:, 8] == -0.4).all()


# -- predictor -------------------------------------------------------------------------------


def tiny_dataset(rng, n=24, t=6, d=5):
    data = []
    for _ in range(n):
        seq = rng.normal(size=(t, d)) * 0.5
        target = np.array([seq[:, 0].mean(), seq[:, 1].mean()])
        data.append((seq, target))
    return data


def test_predictor_constant_target():
    rng = np.random.default_rng(4)
    data = [(rng.normal(size=(5, 4)) * 0.3, np.array([0.4, -0.2])) for _ in range(16)]
    cfg = PredictorConfig(width=8, layers=2, epochs=40, learning_rate=0.1, seed=1)
    predictor, history = train_predictor(data, cfg)
    assert history[-1] < 1e-3
    out = predictor.predict(data[0][0])
    assert out.pace == pytest.approx(0.4, abs=0.05)
    assert out.pitch_span == pytest.approx(-0.2, abs=0.05)


def test_predictor_output_size_and_determinism():
    rng = np.random.default_rng(5)
    data = tiny_dataset(rng)
    cfg = PredictorConfig(width=8, layers=3, epochs=3, seed=2)
    predictor, _ = train_predictor(data, cfg)
    a = predictor.forward(data[0][0]).data
    b = predictor.forward(data[0][0]).data
    assert a.shape == (2,)
    assert np.array_equal(a, b)


def test_predictor_learns_signal():
    rng = np.random.default_rng(6)
    data = tiny_dataset(rng, n=40)
    cfg = PredictorConfig(width=16, layers=2, epochs=60, learning_rate=0.05, seed=3)
    predictor, history = train_predictor(data, cfg)
    targets = np.array([t for _, t in data])
    baseline = float(np.mean((targets - targets.mean(axis=0)) ** 2))
    assert history[-1] < baseline
    assert history[-1] <= history[-2] <= history[-3]  # settled by the end


def test_predictor_rejects_empty():
    with pytest.raises(ValueError):
        train_predictor([])
    rng = np.random.default_rng(7)
    predictor, _ = train_predictor(tiny_dataset(rng, n=12), PredictorConfig(width=4, layers=1, epochs=1))
    with pytest.raises(ValueError):
        predictor.forward(np.zeros((0, 5)))


# -- exports ----------------------------------------------------------------------------------


def test_prosody_table_roundtrip(tmp_path):
    rows = [
        ("utt_0000", -2.1, 0.5, 0.1, -0.3, "ok"),
        ("utt_0001", None, None, None, None, "skipped:all-silence"),
    ]
    path = tmp_path / "prosody.csv"
    prosody.write_prosody_table(path, rows)
    back = prosody.read_prosody_table(path)
    assert back[0][0] == "utt_0000"
    assert back[0][1] == pytest.approx(-2.1)
    assert back[1][1] is None
    assert back[1][5] == "skipped:all-silence"


def test_speaker_stats_sidecar_roundtrip(tmp_path):
    s = stats_fixture()
    path = tmp_path / "stats.json"
    prosody.save_speaker_stats(path, s)
    text = path.read_text()
    assert '"version"' in text
    back = prosody.load_speaker_stats(path)
    assert back == s
