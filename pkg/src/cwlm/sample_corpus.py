"""PTB-style sample corpus built from CPython's own documentation.

Every CPython installation ships the Language Reference prose in
``pydoc_data.topics`` and the docstrings of its standard-library modules;
this module turns that text (reference first, then docstrings of the
top-level stdlib modules in name order) into one lowercased sentence
per line, digits collapsed to ``N``, punctuation removed and words seen
only once replaced by ``<unk>``, mirroring the Penn Treebank preparation
used for language modeling. It gives a public, offline corpus for smoke
tests and demos.
"""
from __future__ import annotations

import argparse
import ast
import re
import sysconfig
from collections import Counter
from pathlib import Path

WORD = re.compile(r"[a-z]+(?:'[a-z]+)?|[0-9]+(?:[.,][0-9]+)*")
SENTENCE_END = re.compile(r"(?<=[.!?])\s+")
SKIP_LINE = re.compile(r"^(\s{3,}|[*=\-~^]{3,}|\s*\S*\s*::=)")


def _sentences(text: str):
    prose = []
    for line in text.splitlines():
        if not line.strip() or SKIP_LINE.match(line) or "::=" in line or ">>>" in line:
            prose.append("\n")
            continue
        prose.append(line.strip())
    for para in " ".join(prose).split("\n"):
        yield from SENTENCE_END.split(para.strip())


def _tokenize(sentence: str) -> list[str]:
    out = []
    for tok in WORD.findall(sentence.lower()):
        out.append("N" if tok[0].isdigit() else tok)
    return out


def _documents():
    from pydoc_data.topics import topics

    for key in sorted(topics):
        yield topics[key]
    for path in sorted(Path(sysconfig.get_paths()["stdlib"]).glob("*.py")):
        try:
            tree = ast.parse(path.read_text(encoding="utf-8"))
        except (SyntaxError, UnicodeDecodeError):
            continue
        for node in ast.walk(tree):
            if isinstance(node, (ast.Module, ast.ClassDef, ast.FunctionDef, ast.AsyncFunctionDef)):
                doc = ast.get_docstring(node)
                if doc:
                    yield doc


def reference_sentences(min_len: int = 3, limit: int = 200_000) -> list[list[str]]:
    """Tokenized sentences, stopping once about ``limit`` tokens are collected."""
    sents = []
    total = 0
    for doc in _documents():
        for s in _sentences(doc):
            toks = _tokenize(s)
            if len(toks) >= min_len:
                sents.append(toks)
                total += len(toks) + 1
        if total >= limit:
            break
    counts = Counter(t for s in sents for t in s)
    return [[t if counts[t] > 1 else "<unk>" for t in s] for s in sents]


def make_splits(train_tokens: int = 50_000, valid_tokens: int = 5_000, test_tokens: int = 5_000):
    """Consecutive train / valid / test slices with token budgets counting ``<eos>``.

    Returns three lists of sentence strings; a budget stops at the first
    sentence that would exceed it.
    """
    sents = reference_sentences()
    splits: list[list[str]] = [[], [], []]
    budgets = [train_tokens, valid_tokens, test_tokens]
    k, used = 0, 0
    for s in sents:
        if k == 3:
            break
        if used + len(s) + 1 > budgets[k]:
            k, used = k + 1, 0
            if k == 3:
                break
        splits[k].append(" ".join(s))
        used += len(s) + 1
    return tuple(splits)


def write_sample_corpus(out_dir: str | Path, **budgets) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, lines in zip(("train", "valid", "test"), make_splits(**budgets)):
        p = out / f"{name}.txt"
        p.write_text("".join(" " + ln + " \n" for ln in lines), encoding="utf-8")
        paths[name] = p
    return paths


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", help="output directory for train/valid/test.txt")
    ap.add_argument("--train-tokens", type=int, default=50_000)
    ap.add_argument("--valid-tokens", type=int, default=5_000)
    ap.add_argument("--test-tokens", type=int, default=5_000)
    args = ap.parse_args(argv)
    paths = write_sample_corpus(
        args.out, train_tokens=args.train_tokens, valid_tokens=args.valid_tokens, test_tokens=args.test_tokens
    )
    for name, p in paths.items():
        print(f"{name}\t{p}")


if __name__ == "__main__":
    main()
