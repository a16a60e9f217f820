"""Perplexity, relative improvements and the OOV follow-up comparison."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .char_encoding import char_surfaces, encode_surfaces
from .corpus import Batch, Split
from .errors import VocabularyMismatchError
from .model import LanguageModel
from .network import forward, log_softmax, zero_state

TIE_EPS = 1e-12


@dataclass
class EvalReport:
    tokens: int
    mean_nll: float
    perplexity: float
    layout: str
    trace: np.ndarray | None = field(default=None, repr=False)

    def lines(self) -> list[str]:
        return [
            f"tokens = {self.tokens}",
            f"mean_nll = {self.mean_nll!r}",
            f"perplexity = {self.perplexity!r}",
            f"layout = {self.layout}",
        ]

    def summary(self) -> str:
        return json.dumps(
            {"tokens": self.tokens, "mean_nll": self.mean_nll, "perplexity": self.perplexity, "layout": self.layout}
        )


@dataclass
class OOVReport:
    occurrences: int = 0
    cw_higher: int = 0
    word_higher: int = 0
    ties: int = 0

    def lines(self) -> list[str]:
        return [f"{k} = {v}" for k, v in self.__dict__.items()]

    def summary(self) -> str:
        return json.dumps(self.__dict__)


def _tokens_and_ids(model: LanguageModel, split) -> tuple[list[str], np.ndarray]:
    if isinstance(split, Split):
        split.check_vocab(model.vocab)
        return split.tokens, split.ids
    tokens = list(split)
    return tokens, model.vocab.encode(tokens)


def target_log_probs(model: LanguageModel, split: Split | Sequence[str], unroll: int = 20) -> np.ndarray:
    """log p(token[t + 1] | tokens[:t + 1]) for every t, in float64.

    The stream is run as a single lane (batch 1) in windows of ``unroll``
    steps with the state carried across windows, so every token after the
    first is scored exactly once.
    """
    tokens, ids = _tokens_and_ids(model, split)
    spec = model.spec
    surfaces = char_surfaces(tokens, model.vocab, spec.cw.use_oov_surfaces)
    chars = encode_surfaces(surfaces, spec.cw, model.char_vocab, random_seed=model.char_seed)
    n = len(ids) - 1
    out = np.empty(max(n, 0), dtype=np.float64)
    dtype = model.params["softmax.W"].dtype
    state = zero_state(spec, 1, dtype)
    for s in range(0, n, unroll):
        e = min(s + unroll, n)
        batch = Batch(ids[None, s:e], chars[None, s:e], ids[None, s + 1 : e + 1])
        logits, state = forward(model.params, spec, batch, state)
        lp = log_softmax(logits[0].astype(np.float64))
        out[s:e] = lp[np.arange(e - s), batch.targets[0]]
    return out


def perplexity(
    model: LanguageModel, split: Split | Sequence[str], unroll: int = 20, keep_trace: bool = False
) -> EvalReport:
    """exp(mean nll) over every next-token prediction, ``<eos>`` included."""
    lp = target_log_probs(model, split, unroll)
    if len(lp) == 0:
        raise ValueError("need at least two tokens to score")
    mean_nll = -math.fsum(lp) / len(lp)
    return EvalReport(
        tokens=len(lp),
        mean_nll=mean_nll,
        perplexity=math.exp(mean_nll),
        layout=f"batch=1 unroll={unroll} carried-state",
        trace=lp if keep_trace else None,
    )


def relative_improvement(candidate_ppl: float, baseline_ppl: float) -> float:
    """Percentage by which ``candidate_ppl`` is below ``baseline_ppl``."""
    if baseline_ppl <= 0:
        raise ValueError("baseline perplexity must be positive")
    return 100.0 * (baseline_ppl - candidate_ppl) / baseline_ppl


def relative_change(candidate_ppl: float, reference_ppl: float) -> float:
    """Signed percentage change; negative means the perplexity went down."""
    return -relative_improvement(candidate_ppl, reference_ppl)


def oov_followup_analysis(
    model_a: LanguageModel, model_b: LanguageModel, split: Split | Sequence[str], unroll: int = 20
) -> OOVReport:
    """Compare both models' probability of the token right after each OOV token.

    ``cw_higher`` counts positions where ``model_a`` is more confident,
    ``word_higher`` those where ``model_b`` is; log probabilities closer than
    ``TIE_EPS`` are ties.
    """
    if model_a.vocab != model_b.vocab:
        raise VocabularyMismatchError("models were trained with different word vocabularies")
    tokens, ids = _tokens_and_ids(model_a, split)
    if len(ids) < 2:
        return OOVReport()
    oov = np.flatnonzero(ids[:-1] == model_a.vocab.unk_id)
    if len(oov) == 0:
        return OOVReport()
    diff = target_log_probs(model_a, split, unroll)[oov] - target_log_probs(model_b, split, unroll)[oov]
    ties = int(np.sum(np.abs(diff) <= TIE_EPS))
    a = int(np.sum(diff > TIE_EPS))
    return OOVReport(occurrences=len(oov), cw_higher=a, word_higher=len(oov) - a - ties, ties=ties)
