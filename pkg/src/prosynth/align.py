"""Structure-preserving alignment post-processing and diagnostics.

An alignment vector is a probability distribution over the N encoder
positions; a decode of T steps stacks them into an N x T alignment matrix.
The ops here build candidate alignments from the previous step, score how
sharp/unimodal a candidate is, and soft-select a final alignment that keeps
that structure. Everything is polymorphic over plain numpy arrays and
autodiff Tensors, so the same code runs in diagnostics and inside the
training graph.

All functions are pure; call them from as many threads as you like.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp as _np_logsumexp

from . import autodiff as ad

# Fixed scoring constants (N-independent). Read-only by convention.
LSE_SCALE = 10.0  # multiplier inside the soft-max exponent
LSE_GAIN = 0.1  # outer gain that undoes the multiplier's magnitude
SHARPNESS_BOOST = 1.67  # desensitising boost on the peakiness ratio
SCORE_THRESHOLD = 0.12  # near-zero floor: scores at or below map to 0
RENORM_FLOOR = 1e-8  # below this total mass, stage 2 falls back to d

SUM_TOL = 1e-6


def _is_tensor(x):
    return isinstance(x, ad.Tensor)


def check_alignment(v, name="alignment"):
    """Validate and return a 1-D float64 probability vector."""
    arr = v.data if _is_tensor(v) else np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name}: expected non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: non-finite entries")
    if (arr < -SUM_TOL).any():
        raise ValueError(f"{name}: negative entries")
    if abs(arr.sum() - 1.0) > SUM_TOL:
        raise ValueError(f"{name}: entries sum to {arr.sum():.8f}, expected 1")
    return arr


# -- candidate construction ------------------------------------------------------


def shift_sticky(v):
    """Shift one position toward the sequence end, mass at the last index stays.

    out[0] = 0, out[n] = v[n-1], and the final entry absorbs both v[N-2]
    and v[N-1] so the output still sums to 1 and attention can dwell on the
    last symbol near the end of an utterance.
    """
    if _is_tensor(v):
        n = v.shape[0]
        if n == 0:
            raise ValueError("shift_sticky: empty vector")
        if n == 1:
            return v
        zero = ad.Tensor(np.zeros(1))
        tail = ad.reshape(ad.sum_(v[n - 2:]), (1,))
        if n == 2:
            return ad.concat([zero, tail])
        return ad.concat([zero, v[: n - 2], tail])
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("shift_sticky: empty vector")
    if v.size == 1:
        return v.copy()
    out = np.empty_like(v)
    out[0] = 0.0
    out[1:] = v[:-1]
    out[-1] += v[-1]
    return out


def candidate_set(b_t, b_prev):
    """The three feasible alignments for this step: stay on the current
    initial alignment, keep the previous one, or advance it by one symbol."""
    n_t = b_t.shape[0] if _is_tensor(b_t) else np.asarray(b_t).shape[0]
    n_p = b_prev.shape[0] if _is_tensor(b_prev) else np.asarray(b_prev).shape[0]
    if n_t != n_p:
        raise ValueError(f"candidate_set: length mismatch {n_t} vs {n_p}")
    return b_t, b_prev, shift_sticky(b_prev)


# -- structure metric ------------------------------------------------------------


def f1(c):
    """Soft-maximum assessment of the peak height (stabilised log-sum-exp)."""
    if _is_tensor(c):
        return ad.mul(ad.logsumexp(ad.mul(c, LSE_SCALE)), LSE_GAIN)
    c = np.asarray(c, dtype=np.float64)
    return float(LSE_GAIN * _np_logsumexp(LSE_SCALE * c))


def f2(c):
    """Peak-sharpness ratio in [0, 1]: 0 for the flat vector, 1 for one-hot.

    A single-symbol alignment is maximally sharp by construction, so N=1
    returns 1.
    """
    if _is_tensor(c):
        n = c.shape[0]
        if n == 1:
            return ad.Tensor(1.0)
        sumsq = ad.sum_(ad.mul(c, c))
        raw = ad.mul(ad.add(ad.mul(sumsq, float(n)), -1.0), SHARPNESS_BOOST / (n - 1))
        return ad.clamp_max(raw, 1.0)
    c = np.asarray(c, dtype=np.float64)
    n = c.size
    if n == 1:
        return 1.0
    raw = SHARPNESS_BOOST * (n * float(c @ c) - 1.0) / (n - 1)
    return min(raw, 1.0)


def structure_metric(c):
    """Combined structure score in [0, 1]: f1*f2, zeroed at or below the
    near-zero threshold, clamped to at most 1. Differentiable wherever the
    raw product exceeds the threshold."""
    if _is_tensor(c):
        raw = ad.mul(f1(c), f2(c))
        return ad.clamp_max(ad.threshold_keep(raw, SCORE_THRESHOLD), 1.0)
    raw = f1(c) * f2(c)
    if raw <= SCORE_THRESHOLD:
        return 0.0
    return min(raw, 1.0)


# -- two-stage soft-selection ----------------------------------------------------


@dataclass
class SelectionWeights:
    """Scalar stage weights; each may be a float or a scalar Tensor from a
    sigmoid head, hence nominally in the open interval (0, 1)."""

    alpha: object
    beta: object


def _weight_value(w, name):
    val = float(w.data) if _is_tensor(w) else float(w)
    if not 0.0 <= val <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {val}")
    return val


def stage1_select(b_prev, alpha):
    """Convex mix of the previous alignment with its shifted version:
    alpha picks 'advance one symbol', (1 - alpha) picks 'stay'."""
    _weight_value(alpha, "alpha")
    shifted = shift_sticky(b_prev)
    if _is_tensor(b_prev) or _is_tensor(alpha):
        b_prev = b_prev if _is_tensor(b_prev) else ad.Tensor(np.asarray(b_prev, dtype=np.float64))
        shifted = shifted if _is_tensor(shifted) else ad.Tensor(shifted)
        one_minus = ad.add(ad.mul(alpha, -1.0), 1.0) if _is_tensor(alpha) else 1.0 - alpha
        return ad.add(ad.mul(shifted, alpha), ad.mul(b_prev, one_minus))
    b_prev = np.asarray(b_prev, dtype=np.float64)
    return alpha * shifted + (1.0 - alpha) * b_prev


def stage2_select(d, b_t, beta):
    """Structure-guided final mix of the stage-1 candidate d and the initial
    alignment b_t.

    gamma = f(b_t) * (1 - f(d)) prefers b_t only when its structure beats
    d's. The raw mix (1-gamma)*beta*d + gamma*(1-beta)*b_t is not a
    distribution on its own, so it is renormalised to unit sum; a degenerate
    total (< 1e-8) falls back to d.
    """
    _weight_value(beta, "beta")
    n_d = d.shape[0] if _is_tensor(d) else np.asarray(d).shape[0]
    n_b = b_t.shape[0] if _is_tensor(b_t) else np.asarray(b_t).shape[0]
    if n_d != n_b:
        raise ValueError(f"stage2_select: length mismatch {n_d} vs {n_b}")
    if _is_tensor(d) or _is_tensor(b_t) or _is_tensor(beta):
        d = d if _is_tensor(d) else ad.Tensor(np.asarray(d, dtype=np.float64))
        b_t = b_t if _is_tensor(b_t) else ad.Tensor(np.asarray(b_t, dtype=np.float64))
        gamma = ad.mul(structure_metric(b_t), ad.add(ad.mul(structure_metric(d), -1.0), 1.0))
        one_minus_gamma = ad.add(ad.mul(gamma, -1.0), 1.0)
        if _is_tensor(beta):
            one_minus_beta = ad.add(ad.mul(beta, -1.0), 1.0)
        else:
            one_minus_beta = 1.0 - beta
        raw = ad.add(
            ad.mul(ad.mul(d, beta), one_minus_gamma),
            ad.mul(ad.mul(b_t, one_minus_beta), gamma),
        )
        total = ad.sum_(raw)
        if float(total.data) < RENORM_FLOOR:
            return d
        return ad.div(raw, total)
    d = np.asarray(d, dtype=np.float64)
    b_t = np.asarray(b_t, dtype=np.float64)
    gamma = structure_metric(b_t) * (1.0 - structure_metric(d))
    raw = (1.0 - gamma) * beta * d + gamma * (1.0 - beta) * b_t
    total = raw.sum()
    if total < RENORM_FLOOR:
        return d.copy()
    return raw / total


def augmented_step(b_t, b_prev, weights):
    """Full post-processing of one decoder step's initial alignment.

    With no history (b_prev is None, i.e. the first step) the initial
    alignment passes through untouched.
    """
    if b_prev is None:
        return b_t
    d = stage1_select(b_prev, weights.alpha)
    return stage2_select(d, b_t, weights.beta)


# -- diagnostics -----------------------------------------------------------------


def entropy(a):
    """Shannon entropy in nats, with 0*ln(0) = 0."""
    a = a.data if _is_tensor(a) else np.asarray(a, dtype=np.float64)
    pos = a[a > 0.0]
    return float(-(pos * np.log(pos)).sum())


def mean_entropy(matrices):
    """Unweighted mean entropy over all columns of all alignment matrices."""
    values = []
    for m in matrices:
        m = np.asarray(m, dtype=np.float64)
        if m.ndim != 2:
            raise ValueError(f"mean_entropy: expected N x T matrix, got shape {m.shape}")
        for t in range(m.shape[1]):
            values.append(entropy(m[:, t]))
    if not values:
        raise ValueError("mean_entropy: no alignment columns given")
    return float(np.mean(values))


# -- exports ---------------------------------------------------------------------


def save_alignment_csv(matrix, path):
    """Write an N x T alignment matrix as CSV, one row per decoder step,
    full float precision."""
    m = np.asarray(matrix, dtype=np.float64)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for t in range(m.shape[1]):
            fh.write(",".join(repr(float(x)) for x in m[:, t]))
            fh.write("\n")


def save_alignment_pgm(matrix, path):
    """Write an N x T alignment matrix as an 8-bit binary PGM image.

    Image rows are encoder positions (height N), columns decoder steps
    (width T); pixel = round(255 * probability).
    """
    m = np.asarray(matrix, dtype=np.float64)
    n, t = m.shape
    pix = np.rint(np.clip(m, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{t} {n}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())
