"""Self-describing binary checkpoint.

Layout (all integers little-endian)::

    magic        8 bytes  b"CWLMCKPT"
    version      u32
    meta_len     u64, then meta_len bytes of UTF-8 ``key=value`` lines
    n_tensors    u32, then per tensor:
                   name_len u16, name, dtype tag u8, rank u8,
                   dims u64 * rank, offset u64 (from start of data)
    data         raw row-major little-endian tensor bytes
    crc32        u32 over everything above
"""
from __future__ import annotations

import dataclasses
import struct
import zlib
from pathlib import Path

import numpy as np

from .char_encoding import CWConfig
from .corpus import CharVocab, Vocabulary
from .errors import CheckpointVersionError, ConfigError, CorruptCheckpointError
from .model import LanguageModel
from .network import ModelSpec
from .trainer import TrainConfig, config_items

MAGIC = b"CWLMCKPT"
VERSION = 1
DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
TAGS = {v: k for k, v in DTYPES.items()}


def save_checkpoint(model: LanguageModel, config: TrainConfig, path: str | Path, extra: dict | None = None) -> None:
    spec = model.spec
    meta = config_items(spec.cw, config)
    meta.update(
        {
            "model.vocab_size": str(spec.vocab_size),
            "model.char_vocab_size": str(spec.char_vocab_size),
            "model.hidden": str(spec.hidden),
            "model.layers": str(spec.layers),
            "model.char_seed": "" if model.char_seed is None else str(model.char_seed),
            "vocab": " ".join(model.vocab.surface_of),
            "chars": "".join(model.char_vocab.chars),
        }
    )
    for k, v in (extra or {}).items():
        meta[f"extra.{k}"] = str(v)
    meta_bytes = "".join(f"{k}={v}\n" for k, v in meta.items()).encode("utf-8")

    directory = [struct.pack("<I", len(model.params))]
    blobs = []
    offset = 0
    for name, arr in model.params.items():
        dt = arr.dtype.newbyteorder("<")
        if dt not in TAGS:
            raise ValueError(f"unsupported dtype {arr.dtype} for {name}")
        raw = np.ascontiguousarray(arr, dtype=dt).tobytes()
        nb = name.encode("utf-8")
        directory.append(struct.pack("<H", len(nb)) + nb + struct.pack("<BB", TAGS[dt], arr.ndim))
        directory.append(struct.pack(f"<{arr.ndim}Q", *arr.shape) + struct.pack("<Q", offset))
        blobs.append(raw)
        offset += len(raw)

    body = b"".join(
        [MAGIC, struct.pack("<I", VERSION), struct.pack("<Q", len(meta_bytes)), meta_bytes, *directory, *blobs]
    )
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body)))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CorruptCheckpointError("checkpoint is truncated")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _coerce(cls, prefix: str, meta: dict):
    kwargs = {}
    for f in dataclasses.fields(cls):
        text = meta[f"{prefix}.{f.name}"]
        if isinstance(f.default, bool):
            kwargs[f.name] = text == "True"
        elif isinstance(f.default, int):
            kwargs[f.name] = int(text)
        elif isinstance(f.default, float):
            kwargs[f.name] = float(text)
        else:
            kwargs[f.name] = text
    return cls(**kwargs)


def load_checkpoint(path: str | Path) -> tuple[LanguageModel, TrainConfig, dict]:
    """Inverse of :func:`save_checkpoint`; returns (model, train config, raw metadata)."""
    buf = Path(path).read_bytes()
    if len(buf) < len(MAGIC) + 4 or buf[: len(MAGIC)] != MAGIC:
        raise CorruptCheckpointError(f"{path}: not a checkpoint file")
    (version,) = struct.unpack("<I", buf[len(MAGIC) : len(MAGIC) + 4])
    if version != VERSION:
        raise CheckpointVersionError(f"{path}: format version {version}, this build reads {VERSION}")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) != crc:
        raise CorruptCheckpointError(f"{path}: checksum mismatch (truncated or damaged file)")

    r = _Reader(body)
    r.take(len(MAGIC) + 4)
    (meta_len,) = r.unpack("<Q")
    meta = {}
    for line in r.take(meta_len).decode("utf-8").splitlines():
        k, _, v = line.partition("=")
        meta[k] = v
    (count,) = r.unpack("<I")
    entries = []
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        tag, rank = r.unpack("<BB")
        dims = r.unpack(f"<{rank}Q")
        (offset,) = r.unpack("<Q")
        if tag not in DTYPES:
            raise CorruptCheckpointError(f"{path}: unknown dtype tag {tag} for {name}")
        entries.append((name, DTYPES[tag], dims, offset))
    data_start = r.pos
    params = {}
    for name, dt, dims, offset in entries:
        nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
        lo = data_start + offset
        if lo + nbytes > len(body):
            raise CorruptCheckpointError(f"{path}: tensor {name} runs past end of file")
        params[name] = np.frombuffer(body, dtype=dt, count=nbytes // dt.itemsize, offset=lo).reshape(dims).copy()

    try:
        cw = _coerce(CWConfig, "cw", meta)
        config = _coerce(TrainConfig, "train", meta)
        spec = ModelSpec(
            int(meta["model.vocab_size"]), int(meta["model.char_vocab_size"]),
            int(meta["model.hidden"]), cw, int(meta["model.layers"]),
        )
        vocab = Vocabulary(meta["vocab"].split(" "))
        chars = CharVocab(list(meta["chars"]))
    except (KeyError, ValueError, ConfigError) as exc:
        raise CorruptCheckpointError(f"{path}: bad metadata ({exc})") from exc
    expected = spec.shapes()
    if {k: tuple(v.shape) for k, v in params.items()} != expected:
        raise CorruptCheckpointError(f"{path}: tensor directory does not match the model description")
    seed = meta.get("model.char_seed", "")
    model = LanguageModel(spec, params, vocab, chars, int(seed) if seed else None)
    return model, config, meta
