"""Concatenated word + character embeddings and parameter counting.

The input vector of the LSTM is laid out as::

    [ word part (E_w) | char slot 1 (E_c) | ... | char slot n (E_c) ]

with ``E_w = E - n * E_c``. Lookups are row selections from tables stored
as ``[rows = vocabulary, columns = dims]``.
"""
from __future__ import annotations

import numpy as np

from .char_encoding import CWConfig
from .errors import ConfigError

WORD_TABLE = "word_emb"
SHARED_CHAR_TABLE = "char_emb"


def char_table_names(cw: CWConfig) -> list[str]:
    """Table used by each character slot (the same name repeated when shared)."""
    if cw.shared_weights:
        return [SHARED_CHAR_TABLE] * cw.n
    return [f"char_emb.{k}" for k in range(1, cw.n + 1)]


def unique_char_tables(cw: CWConfig) -> list[str]:
    return list(dict.fromkeys(char_table_names(cw)))


def word_part_size(embedding_size: int, cw: CWConfig) -> int:
    e_w = embedding_size - cw.char_width
    if e_w < 1:
        raise ConfigError(
            f"character slots take {cw.n} x {cw.char_emb_size} = {cw.char_width} "
            f">= total embedding size {embedding_size}"
        )
    return e_w


def embed_word(params: dict, word: int) -> np.ndarray:
    return params[WORD_TABLE][word]


def embed_cw(params: dict, cw: CWConfig, word: int, chars) -> np.ndarray:
    """Embedding of one token: word row followed by one row per character slot."""
    if len(chars) != cw.n:
        raise ValueError(f"expected {cw.n} character ids, got {len(chars)}")
    parts = [embed_word(params, word)]
    for name, c in zip(char_table_names(cw), chars):
        parts.append(params[name][c])
    return np.concatenate(parts)


def embed(params: dict, cw: CWConfig, inputs: np.ndarray, char_inputs: np.ndarray) -> np.ndarray:
    """Batched :func:`embed_cw`: [B, T] words and [B, T, n] chars -> [B, T, E]."""
    parts = [params[WORD_TABLE][inputs]]
    for k, name in enumerate(char_table_names(cw)):
        parts.append(params[name][char_inputs[..., k]])
    if len(parts) == 1:
        return parts[0]
    return np.concatenate(parts, axis=-1)


def embed_backward(
    cw: CWConfig,
    inputs: np.ndarray,
    char_inputs: np.ndarray,
    d_emb: np.ndarray,
    grads: dict,
) -> None:
    """Scatter-add ``d_emb`` [B, T, E] into the table gradients in ``grads``."""
    g_word = grads[WORD_TABLE]
    e_w = g_word.shape[1]
    flat = d_emb.reshape(-1, d_emb.shape[-1])
    np.add.at(g_word, inputs.reshape(-1), flat[:, :e_w])
    if cw.n:
        ec = cw.char_emb_size
        chars = char_inputs.reshape(-1, cw.n)
        for k, name in enumerate(char_table_names(cw)):
            lo = e_w + k * ec
            np.add.at(grads[name], chars[:, k], flat[:, lo : lo + ec])


def param_count(
    V: int,
    E: int,
    n: int = 0,
    E_c: int = 0,
    C: int = 0,
    shared: bool = False,
    embedding_only: bool = True,
    hidden: int | None = None,
    layers: int = 2,
) -> int:
    """Number of trainable parameters.

    With ``embedding_only`` this is the size of the input embedding tables:
    ``V*E`` for a word model, ``V*(E - n*E_c) + n*C*E_c`` with one table per
    character slot and ``V*(E - n*E_c) + C*E_c`` with a shared table.
    Otherwise the LSTM stack (``4*(in + H + 1)*H`` per layer) and the softmax
    (``(H + 1)*V``) are added; ``hidden`` defaults to ``E``.
    """
    if n > 0 and n * E_c >= E:
        raise ConfigError(f"n * E_c = {n * E_c} must be smaller than E = {E}")
    if n == 0:
        emb = V * E
    elif shared:
        emb = V * (E - n * E_c) + C * E_c
    else:
        emb = V * (E - n * E_c) + n * (C * E_c)
    if embedding_only:
        return emb
    H = E if hidden is None else hidden
    total = emb
    in_dim = E
    for _ in range(layers):
        total += 4 * (in_dim + H + 1) * H
        in_dim = H
    return total + (H + 1) * V


def iso_parameter_hidden(target: int, V: int, layers: int = 2) -> int:
    """Hidden size of a word-level model whose full parameter count is closest to ``target``."""
    best, best_gap = 1, None
    for h in range(1, 4096):
        gap = abs(param_count(V, h, embedding_only=False, layers=layers) - target)
        if best_gap is None or gap < best_gap:
            best, best_gap = h, gap
        elif gap > best_gap:
            break
    return best
