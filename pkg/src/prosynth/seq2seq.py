"""Toy encoder-decoder with attention, at desk scale.

The encoder embeds the symbol sequence (phone id, stress, phrase type,
break/silence flags), runs two 1-D convolutions and a bidirectional
recurrent layer, then concatenates a 2-dim prosody embedding onto every
output vector. The autoregressive decoder eats the previous frame through a
double-feed pre-net, attends with additive content+location attention,
optionally post-processes each alignment with the structure-preserving
augmented step, and emits one spectral frame plus a stop logit per step.
A convolutional post-net refines the whole utterance residually.

Training is teacher-forced, deterministic for a fixed seed, with the
prosody conditioning forced to zero for the first few epochs. Validation
alignment entropy is logged every epoch as the convergence diagnostic.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import align
from . import autodiff as ad
from . import fileio
from .errors import ConfigError, DataError


@dataclass
class ModelConfig:
    """Every training hyperparameter, explicit. When loaded from a file all
    fields must be present; omissions are errors, not defaults."""

    seed: int = 7
    epochs: int = 30
    batch_size: int = 8
    learning_rate: float = 0.05
    momentum: float = 0.9
    grad_clip: float | None = 5.0
    prosody_zero_epochs: int = 5
    stop_pos_weight: float = 6.0
    stop_threshold: float = 0.5
    max_decode_ratio: int = 10
    double_feed: bool = True
    symbol_embedding: int = 32
    stress_embedding: int = 4
    phrase_embedding: int = 4
    encoder_conv_channels: int = 64
    encoder_conv_kernel: int = 5
    encoder_rnn_width: int = 64
    decoder_rnn_width: int = 64
    prenet_hidden: int = 64
    prenet_out: int = 32
    attention_dim: int = 64
    location_filters: int = 8
    location_kernel: int = 7
    frame_width: int = 8
    postnet_channels: int = 16
    postnet_kernel: int = 5

    @property
    def context_dim(self):
        return 2 * self.encoder_rnn_width + 2

    def save(self, path):
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_model_config(path):
    """Strict loader: every field required, unknown fields rejected."""
    with open(path, "r", encoding="ascii") as fh:
        raw = json.load(fh)
    expected = set(ModelConfig.__dataclass_fields__)
    missing = expected - set(raw)
    if missing:
        raise ConfigError(f"{path}: missing config field(s): {', '.join(sorted(missing))}")
    unknown = set(raw) - expected
    if unknown:
        raise ConfigError(f"{path}: unknown config field(s): {', '.join(sorted(unknown))}")
    return ModelConfig(**raw)


@dataclass
class DecoderTrace:
    """Everything one decode produced: pre/post-net frames, stop logits, the
    alignment matrix (N x T), and whether the length cap truncated it."""

    y: np.ndarray
    z: np.ndarray
    stop_logits: np.ndarray
    alignment: np.ndarray
    targets: np.ndarray | None = None
    truncated: bool = False

    @property
    def frame_count(self):
        return self.z.shape[0]


# -- parameters -----------------------------------------------------------------


def init_params(cfg, vocab_size):
    """Seeded Glorot init for every weight; returns name -> Tensor."""
    rng = np.random.default_rng(cfg.seed)
    p = {}

    def par(name, data):
        p[name] = ad.parameter(np.asarray(data, dtype=np.float64), name=name)

    emb_in = cfg.symbol_embedding + cfg.stress_embedding + cfg.phrase_embedding + 2
    conv_c = cfg.encoder_conv_channels
    par("enc.embed.symbol", rng.uniform(-0.5, 0.5, size=(vocab_size, cfg.symbol_embedding)))
    par("enc.embed.stress", rng.uniform(-0.5, 0.5, size=(3, cfg.stress_embedding)))
    par("enc.embed.phrase", rng.uniform(-0.5, 0.5, size=(4, cfg.phrase_embedding)))
    k = cfg.encoder_conv_kernel
    par("enc.conv1.w", ad.glorot(rng, k * emb_in, conv_c, shape=(k, emb_in, conv_c)))
    par("enc.conv1.b", np.zeros(conv_c))
    par("enc.conv2.w", ad.glorot(rng, k * conv_c, conv_c, shape=(k, conv_c, conv_c)))
    par("enc.conv2.b", np.zeros(conv_c))
    h = cfg.encoder_rnn_width
    for d in ("fwd", "bwd"):
        par(f"enc.{d}.wx", ad.glorot(rng, conv_c, 4 * h))
        par(f"enc.{d}.wh", ad.glorot(rng, h, 4 * h))
        bias = np.zeros(4 * h)
        bias[h:2 * h] = 1.0  # forget-gate bias
        par(f"enc.{d}.b", bias)

    par("prosody.embed", rng.uniform(-0.5, 0.5, size=(2, 2)))

    ctx = cfg.context_dim
    d = cfg.decoder_rnn_width
    prenet_in = 2 * cfg.frame_width if cfg.double_feed else cfg.frame_width
    par("dec.prenet1.w", ad.glorot(rng, prenet_in, cfg.prenet_hidden))
    par("dec.prenet1.b", np.zeros(cfg.prenet_hidden))
    par("dec.prenet2.w", ad.glorot(rng, cfg.prenet_hidden, cfg.prenet_out))
    par("dec.prenet2.b", np.zeros(cfg.prenet_out))
    for name, in_dim in (("lstm1", cfg.prenet_out + ctx), ("lstm2", d + ctx)):
        par(f"dec.{name}.wx", ad.glorot(rng, in_dim, 4 * d))
        par(f"dec.{name}.wh", ad.glorot(rng, d, 4 * d))
        bias = np.zeros(4 * d)
        bias[d:2 * d] = 1.0
        par(f"dec.{name}.b", bias)
    for name in ("h1", "c1", "h2", "c2"):
        par(f"dec.init.{name}", np.zeros(d))

    a = cfg.attention_dim
    par("att.query.w", ad.glorot(rng, d, a))
    par("att.memory.w", ad.glorot(rng, ctx, a))
    kl = cfg.location_kernel
    par("att.location.conv", ad.glorot(rng, kl * 2, cfg.location_filters, shape=(kl, 2, cfg.location_filters)))
    par("att.location.w", ad.glorot(rng, cfg.location_filters, a))
    par("att.v", rng.uniform(-0.1, 0.1, size=a))
    # selection heads start neutral (alpha = beta = 0.5)
    par("att.alpha.w", np.zeros(cfg.prenet_out + ctx + d))
    par("att.alpha.b", 0.0)
    par("att.beta.w", np.zeros(ctx))
    par("att.beta.b", 0.0)

    par("out.frame.w", ad.glorot(rng, d + ctx, cfg.frame_width))
    par("out.frame.b", np.zeros(cfg.frame_width))
    par("out.stop.w", ad.glorot(rng, d + ctx, 1).reshape(-1))
    par("out.stop.b", 0.0)

    kp = cfg.postnet_kernel
    par("post.conv1.w", ad.glorot(rng, kp * cfg.frame_width, cfg.postnet_channels,
                                  shape=(kp, cfg.frame_width, cfg.postnet_channels)))
    par("post.conv1.b", np.zeros(cfg.postnet_channels))
    # zero-initialised final layer: post-net starts as the identity residual
    par("post.conv2.w", np.zeros((kp, cfg.postnet_channels, cfg.frame_width)))
    par("post.conv2.b", np.zeros(cfg.frame_width))
    return p


def count_parameters(params):
    return int(sum(p.data.size for p in params.values()))


# -- encoder ---------------------------------------------------------------------


def encoder_latents(params, symbols):
    """Symbol sequence -> (N, 2H) latents, before prosody conditioning."""
    if symbols.ids.max() >= params["enc.embed.symbol"].data.shape[0]:
        raise DataError(f"symbol id {int(symbols.ids.max())} outside embedding table")
    sym = ad.index_rows(params["enc.embed.symbol"], symbols.ids)
    st = ad.index_rows(params["enc.embed.stress"], symbols.stress)
    ph = ad.index_rows(params["enc.embed.phrase"], symbols.phrase)
    flags = ad.Tensor(np.stack([symbols.word_break, symbols.silence], axis=1).astype(np.float64))
    x = ad.concat([sym, st, ph, flags], axis=1)
    x = ad.relu(ad.conv1d(x, params["enc.conv1.w"], params["enc.conv1.b"]))
    x = ad.relu(ad.conv1d(x, params["enc.conv2.w"], params["enc.conv2.b"]))
    n = len(symbols)
    width = params["enc.fwd.wh"].data.shape[0]
    outs = {}
    for d, order in (("fwd", range(n)), ("bwd", range(n - 1, -1, -1))):
        h = ad.Tensor(np.zeros(width))
        c = ad.Tensor(np.zeros(width))
        rows = [None] * n
        for t in order:
            h, c = ad.lstm_step(x[t], h, c, params[f"enc.{d}.wx"], params[f"enc.{d}.wh"], params[f"enc.{d}.b"])
            rows[t] = ad.reshape(h, (1, width))
        outs[d] = ad.concat(rows, axis=0)
    return ad.concat([outs["fwd"], outs["bwd"]], axis=1)


def prosody_embedding(params, prosody_vec):
    """tanh of the unbiased 2x2 projection; zeros map exactly to zeros."""
    vec = ad.Tensor(np.zeros(2) if prosody_vec is None else np.asarray(prosody_vec, dtype=np.float64))
    return ad.tanh(ad.matmul(params["prosody.embed"], vec))


def encode(params, symbols, prosody_vec):
    """Conditioned encoder outputs: every latent gets the same 2 embedding
    channels appended."""
    latents = encoder_latents(params, symbols)
    emb = prosody_embedding(params, prosody_vec)
    n = latents.shape[0]
    tiled = ad.matmul(ad.Tensor(np.ones((n, 1))), ad.reshape(emb, (1, 2)))
    return ad.concat([latents, tiled], axis=1)


# -- attention -------------------------------------------------------------------


def initial_attention(params, query, enc_proj, prev_align, cum_align):
    """Additive content+location attention over encoder positions.

    Location features come from a 1-D convolution over the stacked previous
    and cumulative alignment vectors.
    """
    n = prev_align.shape[0]
    if enc_proj.shape[0] != n:
        raise DataError(f"attention: {enc_proj.shape[0]} encoder rows vs {n} alignment entries")
    loc_in = ad.concat([ad.reshape(prev_align, (n, 1)), ad.reshape(cum_align, (n, 1))], axis=1)
    loc = ad.conv1d(loc_in, params["att.location.conv"])
    terms = ad.add(enc_proj, ad.matmul(loc, params["att.location.w"]))
    terms = ad.add(terms, ad.matmul(query, params["att.query.w"]))
    energies = ad.matmul(ad.tanh(terms), params["att.v"])
    return ad.softmax(energies)


# -- decoder ---------------------------------------------------------------------


def prenet_double_feed(params, prev_true, prev_pred, mode):
    """Pre-net input: [true, predicted] while training, the prediction
    duplicated at inference."""
    if mode == "train":
        if prev_true is None:
            raise ValueError("prenet_double_feed: train mode needs the true previous frame")
        first = prev_true if isinstance(prev_true, ad.Tensor) else ad.Tensor(np.asarray(prev_true, dtype=np.float64))
    elif mode == "infer":
        first = prev_pred
    else:
        raise ValueError(f"prenet_double_feed: unknown mode {mode!r}")
    if first.shape != prev_pred.shape:
        raise ValueError(f"prenet_double_feed: frame widths differ {first.shape} vs {prev_pred.shape}")
    x = ad.concat([first, prev_pred])
    h = ad.relu(ad.add(ad.matmul(x, params["dec.prenet1.w"]), params["dec.prenet1.b"]))
    return ad.relu(ad.add(ad.matmul(h, params["dec.prenet2.w"]), params["dec.prenet2.b"]))


def prenet_single_feed(params, prev):
    """Baseline pre-net without the double feed (for cost comparisons)."""
    h = ad.relu(ad.add(ad.matmul(prev, params["dec.prenet1.w"]), params["dec.prenet1.b"]))
    return ad.relu(ad.add(ad.matmul(h, params["dec.prenet2.w"]), params["dec.prenet2.b"]))


def init_decoder_state(params, cfg, n_positions):
    return {
        "h1": params["dec.init.h1"], "c1": params["dec.init.c1"],
        "h2": params["dec.init.h2"], "c2": params["dec.init.c2"],
        "x_c": ad.Tensor(np.zeros(cfg.context_dim)),
        "a_prev": None,  # no alignment history at t = 0
        "cum": ad.Tensor(np.zeros(n_positions)),
        "y_prev": ad.Tensor(np.zeros(cfg.frame_width)),
    }


def decoder_step(params, cfg, state, enc_cond, enc_proj, attention_mode, mode, prev_true=None):
    """Advance one frame: returns (y_t, stop_logit, alignment a_t, new state)."""
    if cfg.double_feed:
        s_p = prenet_double_feed(params, prev_true, state["y_prev"], mode)
    else:
        feed = state["y_prev"] if mode == "infer" else ad.Tensor(np.asarray(prev_true, dtype=np.float64))
        s_p = prenet_single_feed(params, feed)

    h1, c1 = ad.lstm_step(ad.concat([s_p, state["x_c"]]), state["h1"], state["c1"],
                          params["dec.lstm1.wx"], params["dec.lstm1.wh"], params["dec.lstm1.b"])
    n = enc_cond.shape[0]
    prev_align = state["a_prev"] if state["a_prev"] is not None else ad.Tensor(np.zeros(n))
    b_t = initial_attention(params, h1, enc_proj, prev_align, state["cum"])

    if attention_mode == "augmented" and state["a_prev"] is not None:
        head_in = ad.concat([s_p, state["x_c"], state["h2"]])
        alpha = ad.sigmoid(ad.add(ad.matmul(head_in, params["att.alpha.w"]), params["att.alpha.b"]))
        beta = ad.sigmoid(ad.add(ad.matmul(state["x_c"], params["att.beta.w"]), params["att.beta.b"]))
        a_t = align.augmented_step(b_t, state["a_prev"], align.SelectionWeights(alpha, beta))
    else:
        a_t = b_t

    x_c = ad.matmul(a_t, enc_cond)
    h2, c2 = ad.lstm_step(ad.concat([h1, x_c]), state["h2"], state["c2"],
                          params["dec.lstm2.wx"], params["dec.lstm2.wh"], params["dec.lstm2.b"])
    readout = ad.concat([h2, x_c])
    y_t = ad.add(ad.matmul(readout, params["out.frame.w"]), params["out.frame.b"])
    stop = ad.add(ad.matmul(readout, params["out.stop.w"]), params["out.stop.b"])

    new_state = {
        "h1": h1, "c1": c1, "h2": h2, "c2": c2,
        "x_c": x_c,
        "a_prev": a_t,  # the final alignment feeds both location features
        "cum": ad.add(state["cum"], a_t),
        "y_prev": y_t.detach(),  # autoregressive input, gradient stays local
    }
    return y_t, stop, a_t, new_state


def postnet(params, y):
    """Residual convolutional refinement over the whole utterance."""
    h = ad.tanh(ad.conv1d(y, params["post.conv1.w"], params["post.conv1.b"]))
    return ad.add(y, ad.conv1d(h, params["post.conv2.w"], params["post.conv2.b"]))


# -- losses ----------------------------------------------------------------------


def spectral_loss(y, z, targets):
    """0.5 MSE(y, q) + 0.25 MSE(z, q) + 0.25 MSE(delta z, delta q).

    The differential term averages over steps 1..T-1 only; a single-frame
    utterance contributes nothing there.
    """
    q_np = np.asarray(targets.data if isinstance(targets, ad.Tensor) else targets, dtype=np.float64)
    y_t = y if isinstance(y, ad.Tensor) else ad.Tensor(y)
    z_t = z if isinstance(z, ad.Tensor) else ad.Tensor(z)
    if y_t.shape != q_np.shape or z_t.shape != q_np.shape:
        raise ValueError(f"spectral_loss: shape mismatch {y_t.shape} / {z_t.shape} / {q_np.shape}")
    q = ad.Tensor(q_np)
    dy = ad.add(y_t, ad.mul(q, -1.0))
    dz = ad.add(z_t, ad.mul(q, -1.0))
    loss = ad.add(ad.mul(ad.mean_(ad.mul(dy, dy)), 0.5), ad.mul(ad.mean_(ad.mul(dz, dz)), 0.25))
    t = q_np.shape[0]
    if t > 1:
        zd = ad.add(z_t[1:], ad.mul(z_t[:-1], -1.0))
        qd = ad.Tensor(q_np[1:] - q_np[:-1])
        dd = ad.add(zd, ad.mul(qd, -1.0))
        loss = ad.add(loss, ad.mul(ad.mean_(ad.mul(dd, dd)), 0.25))
    return loss


def stop_loss(stop_logits, true_length, pos_weight=1.0):
    """Binary cross-entropy against a target that is 1 at and after the
    final true frame. pos_weight scales the positive frames' contribution."""
    logits = stop_logits if isinstance(stop_logits, ad.Tensor) else ad.Tensor(np.asarray(stop_logits, dtype=np.float64))
    t = logits.shape[0]
    targets = np.zeros(t)
    targets[true_length - 1:] = 1.0
    weights = np.where(targets > 0, pos_weight, 1.0)
    # bce(x, z) = softplus(x) - x * z, numerically stable in both tails
    bce = ad.add(ad.softplus(logits), ad.mul(ad.mul(logits, ad.Tensor(targets)), -1.0))
    return ad.mul(ad.sum_(ad.mul(bce, ad.Tensor(weights))), 1.0 / t)


# -- passes ----------------------------------------------------------------------


def teacher_forced(params, cfg, utterance, prosody_vec, attention_mode):
    """One teacher-forced pass; returns (total loss Tensor, DecoderTrace)."""
    targets = utterance.features
    t_len = targets.shape[0]
    enc_cond = encode(params, utterance.symbols, prosody_vec)
    enc_proj = ad.matmul(enc_cond, params["att.memory.w"])
    state = init_decoder_state(params, cfg, len(utterance.symbols))
    ys, stops, aligns = [], [], []
    for t in range(t_len):
        prev_true = targets[t - 1] if t > 0 else np.zeros(cfg.frame_width)
        y_t, stop, a_t, state = decoder_step(params, cfg, state, enc_cond, enc_proj,
                                             attention_mode, "train", prev_true=prev_true)
        ys.append(ad.reshape(y_t, (1, cfg.frame_width)))
        stops.append(ad.reshape(stop, (1,)))
        aligns.append(a_t.data)
    y = ad.concat(ys, axis=0)
    z = postnet(params, y)
    stop_vec = ad.concat(stops)
    loss = ad.add(spectral_loss(y, z, targets), stop_loss(stop_vec, t_len, cfg.stop_pos_weight))
    trace = DecoderTrace(
        y=y.data.copy(), z=z.data.copy(), stop_logits=stop_vec.data.copy(),
        alignment=np.stack(aligns, axis=1), targets=targets,
    )
    return loss, trace


def synthesize(params, cfg, symbols, prosody_vec, attention_mode="augmented"):
    """Autoregressive decode: stops when the stop probability clears the
    threshold, or truncates at max_decode_ratio times the input length."""
    enc_cond = encode(params, symbols, prosody_vec)
    enc_proj = ad.matmul(enc_cond, params["att.memory.w"])
    state = init_decoder_state(params, cfg, len(symbols))
    cap = cfg.max_decode_ratio * len(symbols)
    ys, stops, aligns = [], [], []
    truncated = True
    for _ in range(cap):
        y_t, stop, a_t, state = decoder_step(params, cfg, state, enc_cond, enc_proj,
                                             attention_mode, "infer")
        ys.append(ad.reshape(y_t, (1, cfg.frame_width)))
        stops.append(float(stop.data))
        aligns.append(a_t.data)
        if 1.0 / (1.0 + np.exp(-float(stop.data))) > cfg.stop_threshold:
            truncated = False
            break
    y = ad.concat(ys, axis=0)
    z = postnet(params, y)
    return DecoderTrace(
        y=y.data.copy(), z=z.data.copy(), stop_logits=np.asarray(stops),
        alignment=np.stack(aligns, axis=1), truncated=truncated,
    )


# -- training --------------------------------------------------------------------


@dataclass
class TrainResult:
    params: dict
    history: list = field(default_factory=list)
    attention_mode: str = "augmented"


def _epoch_order(seed, epoch, n):
    return np.random.default_rng((seed, 0xE90C4, epoch)).permutation(n)


def validation_metrics(params, cfg, val_utts, prosody_table, attention_mode):
    losses, matrices = [], []
    for u in val_utts:
        vec = prosody_table[u.utt_id]
        loss, trace = teacher_forced(params, cfg, u, vec, attention_mode)
        losses.append(float(loss.data))
        matrices.append(trace.alignment)
    return float(np.mean(losses)), align.mean_entropy(matrices)


def train(corpus, prosody_table, cfg, attention_mode="augmented", out_dir=None,
          resume=False, log=None):
    """Teacher-forced training over the corpus train split.

    prosody_table maps utt_id -> normalised (pace, pitch_span) pair; the
    conditioning is forced to zero for the first prosody_zero_epochs. The
    entropy log gets one entry per epoch. Checkpoints land in out_dir each
    epoch; with resume=True training continues from the last one and the
    result is bit-identical to an uninterrupted run.
    """
    train_utts = corpus.split("train")
    val_utts = corpus.split("val")
    if not train_utts:
        raise DataError("train: corpus has no training utterances")
    if corpus.config.feature_width != cfg.frame_width:
        raise ConfigError(f"frame_width {cfg.frame_width} != corpus feature width {corpus.config.feature_width}")
    missing = [u.utt_id for u in corpus.utterances if u.utt_id not in prosody_table]
    if missing:
        raise DataError(f"train: prosody table missing {len(missing)} utterances (e.g. {missing[0]})")

    params = init_params(cfg, corpus.config.vocab_size)
    opt = ad.SGD(params, lr=cfg.learning_rate, momentum=cfg.momentum, grad_clip=cfg.grad_clip)
    history = []
    start_epoch = 0
    if resume and out_dir is not None and (Path(out_dir) / "checkpoint.bin").exists():
        start_epoch, history = load_checkpoint(Path(out_dir) / "checkpoint.bin", params, opt)

    zeros = np.zeros(2)
    for epoch in range(start_epoch, cfg.epochs):
        use_prosody = epoch >= cfg.prosody_zero_epochs
        order = _epoch_order(cfg.seed, epoch, len(train_utts))
        epoch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            opt.zero_grad()
            losses = []
            for i in batch:
                u = train_utts[i]
                vec = prosody_table[u.utt_id] if use_prosody else zeros
                loss, _ = teacher_forced(params, cfg, u, vec, attention_mode)
                losses.append(loss)
            total = losses[0]
            for extra in losses[1:]:
                total = ad.add(total, extra)
            batch_loss = ad.mul(total, 1.0 / len(batch))
            batch_loss.backward()
            opt.step()
            epoch_losses.append(float(batch_loss.data))
        val_prosody = prosody_table if use_prosody else {u.utt_id: zeros for u in val_utts}
        val_loss, val_entropy = validation_metrics(params, cfg, val_utts, val_prosody, attention_mode)
        row = {
            "epoch": epoch,
            "train_loss": float(np.mean(epoch_losses)),
            "val_loss": val_loss,
            "val_entropy": val_entropy,
        }
        history.append(row)
        if log is not None:
            log(row)
        if out_dir is not None:
            save_checkpoint(Path(out_dir) / "checkpoint.bin", params, opt, epoch + 1, history)
    return TrainResult(params=params, history=history, attention_mode=attention_mode)


# -- checkpoints -----------------------------------------------------------------


def save_checkpoint(path, params, opt, next_epoch, history, extra=None):
    table = {f"model.{k}": p.data for k, p in params.items()}
    table.update(opt.state_tensors())
    table["meta.next_epoch"] = np.array([float(next_epoch)])
    table["meta.history"] = np.array([
        [row["epoch"], row["train_loss"], row["val_loss"], row["val_entropy"]]
        for row in history
    ]).reshape(len(history), 4)
    if extra:
        table.update(extra)
    fileio.save_tensor_table(path, table)


def load_checkpoint(path, params, opt=None):
    """Restore parameters (and optimiser state) in place; returns
    (next_epoch, history)."""
    table = fileio.load_tensor_table(path)
    for k, p in params.items():
        key = f"model.{k}"
        if key not in table:
            raise DataError(f"{path}: checkpoint missing tensor {key}")
        if table[key].shape != p.data.shape:
            raise DataError(f"{path}: tensor {key} has shape {table[key].shape}, expected {p.data.shape}")
        p.data = table[key]
    if opt is not None:
        opt.load_state_tensors(table)
    next_epoch = int(table["meta.next_epoch"][0]) if "meta.next_epoch" in table else 0
    history = []
    if "meta.history" in table and table["meta.history"].size:
        for row in table["meta.history"].reshape(-1, 4):
            history.append({
                "epoch": int(row[0]), "train_loss": float(row[1]),
                "val_loss": float(row[2]), "val_entropy": float(row[3]),
            })
    return next_epoch, history


def checkpoint_tensor_table(path):
    return fileio.load_tensor_table(path)
