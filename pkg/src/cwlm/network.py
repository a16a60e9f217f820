"""Stacked LSTM language model: forward pass, loss and exact truncated BPTT.

Parameters live in a flat ordered ``dict`` of numpy arrays keyed by name:

* ``word_emb`` [V, E_w] and the character tables (see :mod:`cwlm.embedding`)
* ``lstm.{l}.W_x`` [in, 4H], ``lstm.{l}.W_h`` [H, 4H], ``lstm.{l}.b`` [4H],
  gate blocks ordered input, forget, candidate, output
* ``softmax.W`` [H, V], ``softmax.b`` [V]
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .char_encoding import CWConfig
from .corpus import Batch
from .embedding import WORD_TABLE, embed, embed_backward, unique_char_tables, word_part_size
from .errors import ShapeError


@dataclass(frozen=True)
class ModelSpec:
    vocab_size: int
    char_vocab_size: int
    hidden: int
    cw: CWConfig = field(default_factory=CWConfig)
    layers: int = 2

    def __post_init__(self):
        word_part_size(self.embedding_size, self.cw)

    @property
    def embedding_size(self) -> int:
        # the embedding layer is always as wide as the hidden layers
        return self.hidden

    @property
    def word_size(self) -> int:
        return word_part_size(self.embedding_size, self.cw)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        """Name -> shape for every trainable tensor, in initialization order."""
        H, V = self.hidden, self.vocab_size
        shapes = {WORD_TABLE: (V, self.word_size)}
        for name in unique_char_tables(self.cw):
            shapes[name] = (self.char_vocab_size, self.cw.char_emb_size)
        in_dim = self.embedding_size
        for layer in range(1, self.layers + 1):
            shapes[f"lstm.{layer}.W_x"] = (in_dim, 4 * H)
            shapes[f"lstm.{layer}.W_h"] = (H, 4 * H)
            shapes[f"lstm.{layer}.b"] = (4 * H,)
            in_dim = H
        shapes["softmax.W"] = (H, V)
        shapes["softmax.b"] = (V,)
        return shapes

    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.shapes().values())


def zeros_like_params(params: dict) -> dict:
    return {k: np.zeros_like(v) for k, v in params.items()}


def zero_state(spec: ModelSpec, batch_size: int, dtype=np.float32) -> list[tuple[np.ndarray, np.ndarray]]:
    """(hidden, cell) per layer, both [batch, H]."""
    z = lambda: np.zeros((batch_size, spec.hidden), dtype=dtype)  # noqa: E731
    return [(z(), z()) for _ in range(spec.layers)]


def dropout_masks(rng: np.random.Generator, spec: ModelSpec, batch_size: int, keep_prob: float, dtype=np.float32):
    """Inverted-dropout masks for the non-recurrent connections.

    One mask for the embedding output, one per LSTM layer output; each is
    [batch, width] and is reused at every unrolled step.
    """
    widths = [spec.embedding_size] + [spec.hidden] * spec.layers
    if keep_prob >= 1.0:
        return [np.ones((batch_size, w), dtype=dtype) for w in widths]
    return [((rng.random((batch_size, w)) < keep_prob) / keep_prob).astype(dtype) for w in widths]


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _check(spec: ModelSpec, batch: Batch, state, masks):
    B, T = batch.inputs.shape
    if batch.targets is not None and batch.targets.shape != (B, T):
        raise ShapeError(f"targets {batch.targets.shape} do not match inputs {(B, T)}")
    if batch.char_inputs.shape != (B, T, spec.cw.n):
        raise ShapeError(f"char_inputs {batch.char_inputs.shape}, expected {(B, T, spec.cw.n)}")
    if len(state) != spec.layers:
        raise ShapeError(f"state has {len(state)} layers, model has {spec.layers}")
    for h, c in state:
        if h.shape != (B, spec.hidden) or c.shape != (B, spec.hidden):
            raise ShapeError(f"state shape {h.shape}/{c.shape}, expected {(B, spec.hidden)}")
    if masks is not None and len(masks) != spec.layers + 1:
        raise ShapeError(f"expected {spec.layers + 1} dropout masks, got {len(masks)}")


def _forward(params, spec: ModelSpec, batch: Batch, state, masks, keep_cache: bool):
    _check(spec, batch, state, masks)
    B, T = batch.inputs.shape
    H = spec.hidden
    x = embed(params, spec.cw, batch.inputs, batch.char_inputs)
    if masks is not None:
        x = x * masks[0][:, None, :]
    caches = []
    new_state = []
    for layer in range(spec.layers):
        W_x = params[f"lstm.{layer + 1}.W_x"]
        W_h = params[f"lstm.{layer + 1}.W_h"]
        b = params[f"lstm.{layer + 1}.b"]
        h, c = state[layer]
        xz = (x.reshape(B * T, -1) @ W_x).reshape(B, T, 4 * H) + b
        hs = np.empty((B, T, H), dtype=xz.dtype)
        if keep_cache:
            acts = np.empty((B, T, 4 * H), dtype=xz.dtype)
            cs = np.empty((B, T + 1, H), dtype=xz.dtype)
            tcs = np.empty((B, T, H), dtype=xz.dtype)
            cs[:, 0] = c
        h0 = h
        for t in range(T):
            z = xz[:, t] + h @ W_h
            i = _sigmoid(z[:, :H])
            f = _sigmoid(z[:, H : 2 * H])
            g = np.tanh(z[:, 2 * H : 3 * H])
            o = _sigmoid(z[:, 3 * H :])
            c = f * c + i * g
            tc = np.tanh(c)
            h = o * tc
            hs[:, t] = h
            if keep_cache:
                acts[:, t, :H] = i
                acts[:, t, H : 2 * H] = f
                acts[:, t, 2 * H : 3 * H] = g
                acts[:, t, 3 * H :] = o
                cs[:, t + 1] = c
                tcs[:, t] = tc
        new_state.append((h, c))
        if keep_cache:
            caches.append((x, h0, hs, acts, cs, tcs))
        x = hs
        if masks is not None:
            x = x * masks[layer + 1][:, None, :]
    logits = (x.reshape(B * T, H) @ params["softmax.W"]).reshape(B, T, -1) + params["softmax.b"]
    return logits, new_state, (caches, x)


def forward(params: dict, spec: ModelSpec, batch: Batch, state, masks=None):
    """Logits [B, T, V] and the carried state after the last step.

    ``masks=None`` is evaluation mode: no dropout and no rescaling.
    """
    logits, new_state, _ = _forward(params, spec, batch, state, masks, keep_cache=False)
    return logits, new_state


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


def target_log_probs(logits: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """log p(target) at every position, same shape as ``targets``."""
    lp = log_softmax(logits)
    return np.take_along_axis(lp, targets[..., None], axis=-1)[..., 0]


def loss(logits: np.ndarray, targets: np.ndarray) -> float:
    """Mean negative log-likelihood in nats per token."""
    return float(-target_log_probs(logits, targets).mean(dtype=np.float64))


def loss_and_grads(params: dict, spec: ModelSpec, batch: Batch, state, masks=None):
    """One forward + backward pass.

    Returns ``(mean nll, grads, new_state)``. Gradients are exact for the
    unrolled window; nothing flows back into the carried-in ``state``.
    """
    logits, new_state, (caches, top) = _forward(params, spec, batch, state, masks, keep_cache=True)
    B, T = batch.inputs.shape
    H = spec.hidden
    N = B * T
    lp = log_softmax(logits).reshape(N, -1)
    rows = np.arange(N)
    tgt = batch.targets.reshape(N)
    nll = float(-lp[rows, tgt].mean(dtype=np.float64))
    probs = np.exp(lp)

    grads = zeros_like_params(params)
    d_logits = probs
    d_logits[rows, tgt] -= 1.0
    d_logits /= N
    top_flat = top.reshape(N, H)
    grads["softmax.W"] = top_flat.T @ d_logits
    grads["softmax.b"] = d_logits.sum(axis=0)
    dx = (d_logits @ params["softmax.W"].T).reshape(B, T, H)
    if masks is not None:
        dx = dx * masks[spec.layers][:, None, :]

    for layer in reversed(range(spec.layers)):
        W_x = params[f"lstm.{layer + 1}.W_x"]
        W_h = params[f"lstm.{layer + 1}.W_h"]
        x_in, h0, hs, acts, cs, tcs = caches[layer]
        dz = np.empty_like(acts)
        dh_next = np.zeros((B, H), dtype=acts.dtype)
        dc_next = np.zeros((B, H), dtype=acts.dtype)
        W_hT = W_h.T
        for t in reversed(range(T)):
            i = acts[:, t, :H]
            f = acts[:, t, H : 2 * H]
            g = acts[:, t, 2 * H : 3 * H]
            o = acts[:, t, 3 * H :]
            tc = tcs[:, t]
            dh = dx[:, t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz[:, t, :H] = dc * g * i * (1.0 - i)
            dz[:, t, H : 2 * H] = dc * cs[:, t] * f * (1.0 - f)
            dz[:, t, 2 * H : 3 * H] = dc * i * (1.0 - g * g)
            dz[:, t, 3 * H :] = dh * tc * o * (1.0 - o)
            dc_next = dc * f
            dh_next = dz[:, t] @ W_hT
        h_prev = np.concatenate([h0[:, None, :], hs[:, :-1]], axis=1)
        dz_flat = dz.reshape(N, 4 * H)
        grads[f"lstm.{layer + 1}.W_x"] = x_in.reshape(N, -1).T @ dz_flat
        grads[f"lstm.{layer + 1}.W_h"] = h_prev.reshape(N, H).T @ dz_flat
        grads[f"lstm.{layer + 1}.b"] = dz_flat.sum(axis=0)
        dx = (dz_flat @ W_x.T).reshape(B, T, -1)
        if masks is not None:
            dx = dx * masks[layer][:, None, :]

    embed_backward(spec.cw, batch.inputs, batch.char_inputs, dx, grads)
    return nll, grads, new_state


def backward(params: dict, spec: ModelSpec, batch: Batch, state, masks=None) -> dict:
    """Gradients of :func:`loss` for ``batch`` w.r.t. every parameter tensor."""
    return loss_and_grads(params, spec, batch, state, masks)[1]


def global_norm(grads: dict) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))


def clip_global_norm(grads: dict, max_norm: float = 5.0) -> dict:
    """Rescale all tensors jointly so their combined L2 norm is at most ``max_norm``."""
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    eps = max(float(np.finfo(g.dtype).eps) for g in grads.values())
    while True:
        clipped = {k: (g * scale).astype(g.dtype, copy=False) for k, g in grads.items()}
        new_norm = global_norm(clipped)
        if new_norm <= max_norm:
            return clipped
        # rounding in low precision can land just above the threshold
        scale *= max_norm / new_norm * (1.0 - 4 * eps)
