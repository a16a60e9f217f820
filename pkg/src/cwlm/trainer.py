"""Training recipe: uniform init, plain SGD with staged decay, clipping, carried state."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .char_encoding import CWConfig
from .corpus import Corpus, batchify
from .errors import ConfigError, NonFiniteLossError
from .evaluation import perplexity
from .model import LanguageModel
from .network import ModelSpec, clip_global_norm, dropout_masks, loss_and_grads, zero_state

log = logging.getLogger(__name__)

LOSS_REDUCTIONS = ("sequence", "token")

PRESETS = {
    "small": dict(hidden=200, unroll=20, keep_prob=0.75, init_range=0.1, flat_epochs=4, decay=0.5, total_epochs=13),
    "large": dict(hidden=650, unroll=35, keep_prob=0.5, init_range=0.05, flat_epochs=6, decay=0.8, total_epochs=39),
}


@dataclass(frozen=True)
class TrainConfig:
    preset: str = "small"
    hidden: int = 200
    layers: int = 2
    batch_size: int = 20
    unroll: int = 20
    keep_prob: float = 0.75
    init_range: float = 0.1
    flat_epochs: int = 4
    decay: float = 0.5
    total_epochs: int = 13
    clip: float = 5.0
    seed: int = 1234
    # "sequence": objective summed over the unrolled steps, averaged over lanes;
    # "token": averaged over every batch x unroll position
    loss_reduction: str = "sequence"

    def __post_init__(self):
        for name in ("hidden", "layers", "batch_size", "unroll", "init_range", "clip"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.flat_epochs < 0 or self.total_epochs < 0:
            raise ConfigError("epoch counts must be non-negative")
        if not 0.0 < self.keep_prob <= 1.0:
            raise ConfigError(f"keep_prob must be in (0, 1], got {self.keep_prob}")
        if not 0.0 < self.decay < 1.0:
            raise ConfigError(f"decay must be in (0, 1), got {self.decay}")
        if self.loss_reduction not in LOSS_REDUCTIONS:
            raise ConfigError(f"loss_reduction must be one of {LOSS_REDUCTIONS}, got {self.loss_reduction!r}")

    @classmethod
    def from_preset(cls, preset: str, **overrides) -> "TrainConfig":
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        return cls(preset=preset, **{**PRESETS[preset], **overrides})

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)


def derive_seed(seed: int, *path: int) -> int:
    """Deterministic sub-seed for a named stream (dropout of epoch k, ...)."""
    return int(np.random.SeedSequence([seed, *path]).generate_state(1, dtype=np.uint64)[0])


def init_params(spec: ModelSpec, init_range: float, rng: np.random.Generator, dtype=np.float32) -> dict:
    """Every tensor i.i.d. uniform on [-init_range, init_range], drawn in ``spec.shapes()`` order."""
    return {
        name: rng.uniform(-init_range, init_range, size=shape).astype(dtype)
        for name, shape in spec.shapes().items()
    }


def lr_at_epoch(i: int, config: TrainConfig) -> float:
    """1.0 for the first ``flat_epochs`` epochs, then multiplied by ``decay`` each epoch."""
    if not 1 <= i <= config.total_epochs:
        raise ValueError(f"epoch {i} outside 1..{config.total_epochs}")
    if i <= config.flat_epochs:
        return 1.0
    return config.decay ** (i - config.flat_epochs)


def sgd_step(params: dict, grads: dict, lr: float) -> dict:
    for name, g in grads.items():
        p = params[name]
        if p.shape != g.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        p -= lr * g
    return params


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_ppl: float
    valid_ppl: float
    seconds: float = field(compare=False)

    def line(self) -> str:
        return f"{self.epoch}\t{self.lr!r}\t{self.train_ppl!r}\t{self.valid_ppl!r}\t{self.seconds:.3f}"

    @classmethod
    def parse(cls, line: str) -> "EpochRecord":
        e, lr, tr, va, sec = line.rstrip("\n").split("\t")
        return cls(int(e), float(lr), float(tr), float(va), float(sec))


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def append(self, rec: EpochRecord) -> None:
        self.records.append(rec)

    def dump(self) -> str:
        return "".join(r.line() + "\n" for r in self.records)

    @classmethod
    def load(cls, path: str | Path) -> "TrainLog":
        lines = Path(path).read_text().splitlines()
        return cls([EpochRecord.parse(ln) for ln in lines if ln.strip()])


def build_model(cw: CWConfig, config: TrainConfig, corpus: Corpus, dtype=np.float32) -> LanguageModel:
    spec = ModelSpec(corpus.vocab.size, corpus.char_vocab.size, config.hidden, cw, config.layers)
    rng = np.random.default_rng(derive_seed(config.seed, 0))
    params = init_params(spec, config.init_range, rng, dtype)
    return LanguageModel(spec, params, corpus.vocab, corpus.char_vocab)


def train(
    cw: CWConfig,
    config: TrainConfig,
    corpus: Corpus,
    log_path: str | Path | None = None,
    dtype=np.float32,
) -> tuple[LanguageModel, TrainLog]:
    """Run the fixed epoch budget and return the final model and per-epoch log.

    State is reset at the start of each epoch and carried between
    consecutive batches. Validation perplexity is measured after every epoch
    in evaluation mode with the training unroll length.
    """
    model = build_model(cw, config, corpus, dtype)
    spec, params = model.spec, model.params
    train_log = TrainLog()
    if log_path is not None:
        Path(log_path).write_text("")
    surfaces = corpus.train.surfaces(cw.use_oov_surfaces)
    batches = None
    for epoch in range(1, config.total_epochs + 1):
        t0 = time.perf_counter()
        lr = lr_at_epoch(epoch, config)
        if cw.random_control:
            model.char_seed = derive_seed(config.seed, 2, epoch)
            batches = None
        if batches is None:
            batches = batchify(
                corpus.train.ids, surfaces, config.batch_size, config.unroll, cw, corpus.char_vocab,
                random_seed=model.char_seed,
            )
        drop_rng = np.random.default_rng(derive_seed(config.seed, 1, epoch))
        state = zero_state(spec, config.batch_size, dtype)
        total = 0.0
        for k, batch in enumerate(batches):
            masks = dropout_masks(drop_rng, spec, config.batch_size, config.keep_prob, dtype)
            nll, grads, state = loss_and_grads(params, spec, batch, state, masks)
            if not math.isfinite(nll):
                raise NonFiniteLossError(f"loss became {nll} at epoch {epoch}, batch {k + 1}/{len(batches)}")
            if config.loss_reduction == "sequence":
                for g in grads.values():
                    g *= config.unroll
            sgd_step(params, clip_global_norm(grads, config.clip), lr)
            total += nll
        train_ppl = math.exp(total / len(batches))
        valid_ppl = float("nan")
        if corpus.valid is not None:
            valid_ppl = perplexity(model, corpus.valid, unroll=config.unroll).perplexity
        rec = EpochRecord(epoch, lr, train_ppl, valid_ppl, time.perf_counter() - t0)
        train_log.append(rec)
        log.info("epoch %d lr %.4g train ppl %.2f valid ppl %.2f (%.1fs)", epoch, lr, train_ppl, valid_ppl, rec.seconds)
        if log_path is not None:
            with open(log_path, "a") as f:
                f.write(rec.line() + "\n")
    return model, train_log


def config_items(cw: CWConfig, config: TrainConfig) -> dict[str, str]:
    """Flat key -> text form of both configs (checkpoint metadata, resolved config files)."""
    items = {f"train.{k}": repr(v) if isinstance(v, float) else str(v) for k, v in asdict(config).items()}
    items.update({f"cw.{k}": str(v) for k, v in asdict(cw).items()})
    return items
