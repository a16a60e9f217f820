"""A trained or initialized language model together with its vocabularies."""
from __future__ import annotations

from dataclasses import dataclass

from .corpus import CharVocab, Vocabulary
from .network import ModelSpec


@dataclass
class LanguageModel:
    spec: ModelSpec
    params: dict
    vocab: Vocabulary
    char_vocab: CharVocab
    # seed of the random-control character table in effect (random control only)
    char_seed: int | None = None

    def copy(self) -> "LanguageModel":
        params = {k: v.copy() for k, v in self.params.items()}
        return LanguageModel(self.spec, params, self.vocab, self.char_vocab, self.char_seed)
