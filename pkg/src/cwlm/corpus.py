"""Corpus ingestion: tokenization, vocabularies and contiguous BPTT batches."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .char_encoding import CWConfig, char_surfaces, encode_surfaces
from .errors import CorpusTooShortError, VocabularyMismatchError

UNK = "<unk>"
EOS = "<eos>"


def tokenize_lines(text: str | Iterable[str]) -> list[str]:
    """Split line-delimited text on whitespace, appending ``<eos>`` per line.

    Blank lines produce nothing, so ``""`` gives ``[]``.
    """
    lines = text.splitlines() if isinstance(text, str) else text
    tokens: list[str] = []
    for line in lines:
        words = line.split()
        if words:
            tokens.extend(words)
            tokens.append(EOS)
    return tokens


def read_tokens(path: str | Path) -> list[str]:
    with open(path, encoding="utf-8") as f:
        return tokenize_lines(f)


@dataclass
class Vocabulary:
    surface_of: list[str]
    id_of: dict[str, int] = field(init=False, repr=False)

    unk_id = 0
    eos_id = 1

    def __post_init__(self):
        if self.surface_of[:2] != [UNK, EOS]:
            raise ValueError("vocabulary must start with <unk>, <eos>")
        self.id_of = {w: i for i, w in enumerate(self.surface_of)}
        if len(self.id_of) != len(self.surface_of):
            raise ValueError("duplicate entries in vocabulary")

    @property
    def size(self) -> int:
        return len(self.surface_of)

    def __len__(self):
        return len(self.surface_of)

    def __contains__(self, token):
        return token in self.id_of

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.surface_of == other.surface_of

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        get = self.id_of.get
        return np.fromiter((get(t, self.unk_id) for t in tokens), dtype=np.int64, count=len(tokens))

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(w + "\n" for w in self.surface_of), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls(Path(path).read_text(encoding="utf-8").splitlines())


def build_vocab(tokens: Iterable[str], max_size: int) -> Vocabulary:
    """Keep the ``max_size - 2`` most frequent tokens after the two specials.

    Ties at the cutoff are broken lexicographically.
    """
    if max_size < 2:
        raise ValueError("max_size must leave room for <unk> and <eos>")
    counts = Counter(tokens)
    counts.pop(UNK, None)
    counts.pop(EOS, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary([UNK, EOS] + [w for w, _ in ranked[: max_size - 2]])


@dataclass
class CharVocab:
    """Characters of the training surfaces; id 0 is padding, id 1 unknown."""

    chars: list[str]
    id_of: dict[str, int] = field(init=False, repr=False)

    pad_id = 0
    unk_char_id = 1
    n_special = 2

    def __post_init__(self):
        self.id_of = {c: i + self.n_special for i, c in enumerate(self.chars)}

    @property
    def size(self) -> int:
        return len(self.chars) + self.n_special

    @property
    def n_real(self) -> int:
        return len(self.chars)

    def __len__(self):
        return self.size

    def __eq__(self, other):
        return isinstance(other, CharVocab) and self.chars == other.chars

    def char_id(self, ch: str) -> int:
        return self.id_of.get(ch, self.unk_char_id)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(c + "\n" for c in self.chars), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CharVocab":
        return cls(Path(path).read_text(encoding="utf-8").splitlines())


def build_char_vocab(surfaces: Iterable[str]) -> CharVocab:
    """Collect every character of the given surfaces, sorted by code point.

    The special tokens have no real spelling and are skipped.
    """
    seen: set[str] = set()
    for s in surfaces:
        if s in (UNK, EOS):
            continue
        seen.update(s)
    return CharVocab(sorted(seen))


@dataclass
class Batch:
    inputs: np.ndarray  # [batch, unroll] word ids
    char_inputs: np.ndarray  # [batch, unroll, n] char ids
    targets: np.ndarray  # [batch, unroll] word ids

    @property
    def shape(self):
        return self.inputs.shape


def num_batches(n_ids: int, batch_size: int, unroll_steps: int) -> int:
    lane = n_ids // batch_size
    return max(lane - 1, 0) // unroll_steps


def batchify(
    ids: Sequence[int] | np.ndarray,
    surfaces: Sequence[str | None],
    batch_size: int,
    unroll_steps: int,
    cw: CWConfig,
    cv: CharVocab,
    random_seed: int | None = None,
) -> list[Batch]:
    """Cut the id stream into ``batch_size`` contiguous lanes and unroll windows.

    ``surfaces`` must already be resolved with :func:`char_surfaces` (``None``
    where no spelling is usable). Lane ``b`` of batch ``k + 1`` continues
    exactly where lane ``b`` of batch ``k`` stopped; the trailing remainder
    of the stream is dropped.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if len(surfaces) != len(ids):
        raise ValueError("ids and surfaces must be aligned")
    if len(ids) < batch_size * (unroll_steps + 1):
        raise CorpusTooShortError(
            f"{len(ids)} tokens cannot fill batch_size={batch_size} x (unroll={unroll_steps} + 1)"
        )
    lane = len(ids) // batch_size
    nb = (lane - 1) // unroll_steps
    used = batch_size * lane
    words = ids[:used].reshape(batch_size, lane)
    chars = encode_surfaces(surfaces[:used], cw, cv, random_seed=random_seed)
    chars = chars.reshape(batch_size, lane, cw.n)
    batches = []
    for k in range(nb):
        s = k * unroll_steps
        e = s + unroll_steps
        batches.append(Batch(words[:, s:e], chars[:, s:e], words[:, s + 1 : e + 1]))
    return batches


@dataclass
class Split:
    """A tokenized split with its ids under a given vocabulary."""

    tokens: list[str]
    vocab: Vocabulary
    ids: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.ids = self.vocab.encode(self.tokens)

    def __len__(self):
        return len(self.tokens)

    def surfaces(self, use_oov_surfaces: bool) -> list[str | None]:
        return char_surfaces(self.tokens, self.vocab, use_oov_surfaces)

    def check_vocab(self, vocab: Vocabulary) -> None:
        if self.vocab != vocab:
            raise VocabularyMismatchError(
                f"split encoded with a {self.vocab.size}-word vocabulary, model has {vocab.size}"
            )


@dataclass
class Corpus:
    vocab: Vocabulary
    char_vocab: CharVocab
    train: Split
    valid: Split | None = None
    test: Split | None = None

    @classmethod
    def from_tokens(cls, train, valid=None, test=None, vocab_size=10_000, use_oov_surfaces=False):
        vocab = build_vocab(train, vocab_size)
        # without usable OOV spellings only in-vocabulary words contribute characters
        spelled = train if use_oov_surfaces else (t for t in train if t in vocab)
        cv = build_char_vocab(spelled)
        mk = lambda toks: None if toks is None else Split(list(toks), vocab)  # noqa: E731
        return cls(vocab, cv, mk(train), mk(valid), mk(test))

    @classmethod
    def from_files(cls, train, valid=None, test=None, vocab_size=10_000, use_oov_surfaces=False):
        rd = lambda p: None if p is None else read_tokens(p)  # noqa: E731
        return cls.from_tokens(rd(train), rd(valid), rd(test), vocab_size, use_oov_surfaces)
