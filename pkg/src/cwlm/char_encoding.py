"""Fixed-length character id sequences for the character slots of a word."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from .corpus import CharVocab, Vocabulary

ORDERS = ("forward", "backward", "both")


@dataclass(frozen=True)
class CWConfig:
    """Character-word knobs. ``n == 0`` is the pure word-level model."""

    n: int = 0
    char_emb_size: int = 0
    order: str = "forward"
    shared_weights: bool = False
    use_oov_surfaces: bool = False
    random_control: bool = False

    def __post_init__(self):
        if self.n < 0 or self.char_emb_size < 0:
            raise ValueError("n and char_emb_size must be non-negative")
        if self.order not in ORDERS:
            raise ValueError(f"order must be one of {ORDERS}, got {self.order!r}")
        if self.order == "both" and self.n % 2:
            raise ValueError(f"order 'both' needs an even n, got {self.n}")
        if self.n > 0 and self.char_emb_size == 0:
            raise ValueError("char_emb_size must be positive when n > 0")

    @property
    def char_width(self) -> int:
        return self.n * self.char_emb_size


def char_sequence(surface: str, n: int, order: str, cv: CharVocab) -> list[int]:
    """Character ids for ``surface`` in ``n`` slots, pads at the end.

    >>> from cwlm.corpus import CharVocab
    >>> cv = CharVocab(list("acefilrtvy"))
    >>> [cv.chars[i - 2] if i > 1 else "_" for i in char_sequence("cat", 5, "backward", cv)]
    ['t', 'a', 'c', '_', '_']
    """
    if n == 0:
        return []
    if order == "forward":
        picked = surface[:n]
    elif order == "backward":
        picked = surface[::-1][:n]
    elif order == "both":
        half = n // 2
        return char_sequence(surface, half, "forward", cv) + char_sequence(surface, half, "backward", cv)
    else:
        raise ValueError(f"unknown order {order!r}")
    ids = [cv.char_id(ch) for ch in picked]
    return ids + [cv.pad_id] * (n - len(ids))


def random_char_sequence(rng: np.random.Generator, n: int, max_len: int, cv: CharVocab) -> list[int]:
    """A random 'word': length uniform on [1, max_len], characters uniform over real ids."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    if cv.n_real < 1:
        raise ValueError("character vocabulary has no real characters")
    length = int(rng.integers(1, max_len + 1))
    k = min(length, n)
    ids = rng.integers(cv.n_special, cv.size, size=k).tolist()
    return ids + [cv.pad_id] * (n - k)


def _surface_seed(surface: str) -> int:
    return int.from_bytes(hashlib.blake2b(surface.encode("utf-8"), digest_size=8).digest(), "little")


def char_surfaces(tokens: Sequence[str], vocab: Vocabulary, use_oov_surfaces: bool) -> list[str | None]:
    """Spelling to use for each token, or ``None`` when none is available.

    The specials never have one. An out-of-vocabulary token keeps its own
    spelling only when ``use_oov_surfaces`` is set.
    """
    from .corpus import EOS, UNK

    out: list[str | None] = []
    for t in tokens:
        if t == UNK or t == EOS:
            out.append(None)
        elif use_oov_surfaces or t in vocab:
            out.append(t)
        else:
            out.append(None)
    return out


def encode_surfaces(
    surfaces: Sequence[str | None],
    cw: CWConfig,
    cv: CharVocab,
    random_seed: int | None = None,
) -> np.ndarray:
    """[len(surfaces), n] char ids; ``None`` rows are all padding.

    With ``cw.random_control`` every distinct surface gets one random
    sequence derived from ``random_seed`` and the surface itself, so the
    mapping does not depend on corpus order.
    """
    if cw.random_control and random_seed is None:
        raise ValueError("random control needs a random_seed")
    index: dict[str | None, int] = {}
    codes = np.empty(len(surfaces), dtype=np.int64)
    for i, s in enumerate(surfaces):
        j = index.get(s)
        if j is None:
            j = index[s] = len(index)
        codes[i] = j
    table = np.full((len(index), cw.n), cv.pad_id, dtype=np.int32)
    if cw.n:
        for s, j in index.items():
            if s is None:
                continue
            if cw.random_control:
                rng = np.random.default_rng([random_seed, _surface_seed(s)])
                table[j] = random_char_sequence(rng, cw.n, cw.n, cv)
            else:
                table[j] = char_sequence(s, cw.n, cw.order, cv)
    return table[codes]
