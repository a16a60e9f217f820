import struct

import numpy as np
import pytest

from cwlm.char_encoding import CWConfig
from cwlm.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from cwlm.corpus import Corpus
from cwlm.errors import CheckpointVersionError, CorruptCheckpointError
from cwlm.evaluation import perplexity
from cwlm.trainer import TrainConfig, build_model, train

TOKENS = ("the cat sat on the mat <eos> a dog saw the cat <eos> " * 8).split()


@pytest.fixture(scope="module")
def corpus():
    return Corpus.from_tokens(TOKENS, TOKENS[:20], vocab_size=50)


def config(**kw):
    base = dict(hidden=12, batch_size=2, unroll=4, total_epochs=1, flat_epochs=1)
    base.update(kw)
    return TrainConfig.from_preset("small", **base)


@pytest.mark.parametrize(
    "cw, dtype",
    [
        (CWConfig(), np.float32),
        (CWConfig(2, 3, "both"), np.float64),
        (CWConfig(3, 2, "backward", shared_weights=True), np.float32),
    ],
)
def test_round_trip_is_bit_exact(tmp_path, corpus, cw, dtype):
    cfg = config(seed=77)
    model = build_model(cw, cfg, corpus, dtype)
    save_checkpoint(model, cfg, tmp_path / "m.ckpt", extra={"note": "x"})
    loaded, cfg2, meta = load_checkpoint(tmp_path / "m.ckpt")
    assert cfg2 == cfg
    assert loaded.spec == model.spec
    assert loaded.vocab == model.vocab and loaded.char_vocab == model.char_vocab
    assert list(loaded.params) == list(model.params)
    for k in model.params:
        assert loaded.params[k].dtype == model.params[k].dtype
        assert loaded.params[k].tobytes() == model.params[k].tobytes()
    assert meta["extra.note"] == "x"


def test_evaluation_unchanged_after_reload(tmp_path, corpus):
    cw = CWConfig(2, 2, random_control=True)
    model, _ = train(cw, config(total_epochs=2), corpus)
    save_checkpoint(model, config(total_epochs=2), tmp_path / "m.ckpt")
    loaded, _, _ = load_checkpoint(tmp_path / "m.ckpt")
    assert loaded.char_seed == model.char_seed
    assert perplexity(loaded, corpus.valid, 4).perplexity == perplexity(model, corpus.valid, 4).perplexity


def test_truncated_file_is_rejected(tmp_path, corpus):
    p = tmp_path / "m.ckpt"
    save_checkpoint(build_model(CWConfig(), config(), corpus), config(), p)
    data = p.read_bytes()
    for cut in (len(data) // 2, len(data) - 1, 10):
        p.write_bytes(data[:cut])
        with pytest.raises(CorruptCheckpointError):
            load_checkpoint(p)


def test_flipped_byte_is_rejected(tmp_path, corpus):
    p = tmp_path / "m.ckpt"
    save_checkpoint(build_model(CWConfig(), config(), corpus), config(), p)
    data = bytearray(p.read_bytes())
    data[len(data) // 2] ^= 0xFF
    p.write_bytes(bytes(data))
    with pytest.raises(CorruptCheckpointError):
        load_checkpoint(p)


def test_version_mismatch(tmp_path, corpus):
    p = tmp_path / "m.ckpt"
    save_checkpoint(build_model(CWConfig(), config(), corpus), config(), p)
    data = bytearray(p.read_bytes())
    data[len(MAGIC) : len(MAGIC) + 4] = struct.pack("<I", 99)
    p.write_bytes(bytes(data))
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(p)


def test_not_a_checkpoint(tmp_path):
    p = tmp_path / "x.ckpt"
    p.write_bytes(b"hello world, not a model")
    with pytest.raises(CorruptCheckpointError):
        load_checkpoint(p)
