"""Command-line entry point: ``cwlm {prep,train,eval,analyze-oov,param-count,compare,grid}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .config import parse_config, resolved_text
from .corpus import Corpus, read_tokens
from .embedding import iso_parameter_hidden, param_count
from .errors import CWLMError
from .evaluation import oov_followup_analysis, perplexity, relative_improvement
from .grid import parse_grid, run_grid
from .network import ModelSpec
from .trainer import train


# flag dest -> config key
FLAG_KEYS = {
    "preset": "preset",
    "train": "train",
    "valid": "valid",
    "test": "test",
    "vocab_size": "vocab_size",
    "n_chars": "n_chars",
    "char_emb": "char_emb",
    "char_order": "char_order",
    "shared_weights": "shared_weights",
    "random_control": "random_control",
    "use_oov_surfaces": "use_oov_surfaces",
    "seed": "seed",
}


def _config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--preset", choices=["small", "large"])
    p.add_argument("--train")
    p.add_argument("--valid")
    p.add_argument("--test")
    p.add_argument("--vocab-size", type=int)
    p.add_argument("--n-chars", type=int)
    p.add_argument("--char-emb", type=int)
    p.add_argument("--char-order", choices=["forward", "backward", "both"])
    p.add_argument("--shared-weights", action="store_true", default=None)
    p.add_argument("--random-control", action="store_true", default=None)
    p.add_argument("--use-oov-surfaces", action="store_true", default=None)
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="any config key")


def _resolve(args):
    text = Path(args.config).read_text() if args.config else ""
    overrides = [f"{key}={getattr(args, dest)}" for dest, key in FLAG_KEYS.items() if getattr(args, dest) is not None]
    return parse_config(text, overrides + list(args.set))


def _load_corpus(data, cw) -> Corpus:
    if not data.train:
        raise CWLMError("no training text given (--train or 'train =' in the config)")
    return Corpus.from_files(data.train, data.valid, data.test, data.vocab_size, cw.use_oov_surfaces)


def _emit(lines, summary):
    for ln in lines:
        print(ln)
    print(summary)


def cmd_prep(args):
    _, cw, data = _resolve(args)
    corpus = _load_corpus(data, cw)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    corpus.vocab.save(out / "vocab.txt")
    corpus.char_vocab.save(out / "chars.txt")
    stats = {"vocab_size": corpus.vocab.size, "real_chars": corpus.char_vocab.n_real,
             "char_vocab_size": corpus.char_vocab.size}
    for name in ("train", "valid", "test"):
        split = getattr(corpus, name)
        if split is not None:
            stats[f"{name}_tokens"] = len(split)
            stats[f"{name}_unk"] = int((split.ids == corpus.vocab.unk_id).sum())
    _emit([f"{k} = {v}" for k, v in stats.items()], json.dumps(stats))


def cmd_train(args):
    config, cw, data = _resolve(args)
    corpus = _load_corpus(data, cw)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "model.ckpt"
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    (ckpt.parent / "config.resolved").write_text(resolved_text(config, cw, data))
    model, train_log = train(cw, config, corpus, log_path=out / "train_log.tsv")
    save_checkpoint(model, config, ckpt)
    result = {"checkpoint": str(ckpt), "params": model.spec.n_params(), "epochs": len(train_log)}
    if len(train_log):
        result["valid_ppl"] = train_log[-1].valid_ppl
    if corpus.test is not None:
        result["test_ppl"] = perplexity(model, corpus.test, config.unroll).perplexity
    _emit([f"{k} = {v}" for k, v in result.items()], json.dumps(result))


def _eval_tokens(args):
    path = args.test or args.valid
    if not path:
        raise CWLMError("give the text to score with --test or --valid")
    return read_tokens(path)


def cmd_eval(args):
    if not args.checkpoint:
        raise CWLMError("--checkpoint is required")
    model, config, _ = load_checkpoint(args.checkpoint)
    report = perplexity(model, _eval_tokens(args), unroll=args.unroll or config.unroll)
    _emit(report.lines(), report.summary())


def cmd_analyze_oov(args):
    if not (args.checkpoint and args.baseline):
        raise CWLMError("--checkpoint (character-word model) and --baseline (word model) are required")
    cw_model, config, _ = load_checkpoint(args.checkpoint)
    word_model, _, _ = load_checkpoint(args.baseline)
    report = oov_followup_analysis(cw_model, word_model, _eval_tokens(args), unroll=config.unroll)
    _emit(report.lines(), report.summary())


def cmd_param_count(args):
    config, cw, data = _resolve(args)
    V, C = data.vocab_size, args.char_vocab
    if data.train:
        corpus = _load_corpus(data, cw)
        V, C = corpus.vocab.size, corpus.char_vocab.size
    E = config.hidden
    emb = param_count(V, E, cw.n, cw.char_emb_size, C, cw.shared_weights, embedding_only=True)
    full = param_count(V, E, cw.n, cw.char_emb_size, C, cw.shared_weights, embedding_only=False,
                       layers=config.layers)
    ModelSpec(V, C, E, cw, config.layers)  # validates the configuration
    info = {"V": V, "C": C, "E": E, "embedding_params": emb, "total_params": full,
            "word_model_total_params": param_count(V, E, embedding_only=False, layers=config.layers),
            "iso_parameter_hidden": iso_parameter_hidden(full, V, config.layers)}
    _emit([f"{k} = {v}" for k, v in info.items()], json.dumps(info))


def cmd_compare(args):
    if args.candidate is not None and args.reference is not None:
        cand, base = args.candidate, args.reference
    else:
        if not (args.checkpoint and args.baseline):
            raise CWLMError("give two perplexities, or --checkpoint and --baseline with --test/--valid")
        tokens = _eval_tokens(args)
        a, ca, _ = load_checkpoint(args.checkpoint)
        b, cb, _ = load_checkpoint(args.baseline)
        cand = perplexity(a, tokens, ca.unroll).perplexity
        base = perplexity(b, tokens, cb.unroll).perplexity
    info = {"candidate_ppl": cand, "baseline_ppl": base,
            "relative_improvement_pct": relative_improvement(cand, base)}
    _emit([f"{k} = {v}" for k, v in info.items()], json.dumps(info))


def cmd_grid(args):
    config, cw, data = _resolve(args)
    grid = parse_grid(Path(args.grid).read_text() if args.grid else "", cw)
    corpus = _load_corpus(data, cw)
    out = Path(args.out or "grid")
    rows = run_grid(config, cw, corpus, grid, out, data=data, iso_hidden=args.iso_hidden, workers=args.workers)
    failed = [r["name"] for r in rows if str(r.get("status", "")).startswith("failed")]
    info = {"table": str(out / "grid.tsv"), "summary": str(out / "grid_summary.tsv"), "rows": len(rows),
            "failed": failed}
    _emit([f"{k} = {v}" for k, v in info.items()], json.dumps(info))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cwlm", description="Character-word LSTM language models")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        p = sub.add_parser(name, help=help)
        _config_flags(p)
        p.add_argument("--out", help="output directory")
        p.add_argument("--checkpoint", help="checkpoint path")
        p.set_defaults(fn=fn)
        return p

    add("prep", cmd_prep, "build and write vocabularies")
    add("train", cmd_train, "train one model")
    p = add("eval", cmd_eval, "perplexity of a checkpoint on --test (or --valid)")
    p.add_argument("--unroll", type=int)
    p = add("analyze-oov", cmd_analyze_oov, "probability after OOV words: --checkpoint vs --baseline")
    p.add_argument("--baseline", help="word-level model checkpoint")
    p = add("param-count", cmd_param_count, "parameter counts for a configuration")
    p.add_argument("--char-vocab", type=int, default=48, help="rows C of a character table when no --train is given")
    p = add("compare", cmd_compare, "relative improvement of a candidate over a baseline")
    p.add_argument("candidate", type=float, nargs="?")
    p.add_argument("reference", type=float, nargs="?")
    p.add_argument("--baseline", help="baseline checkpoint")
    p = add("grid", cmd_grid, "run an experiment grid")
    p.add_argument("--grid", help="grid file: key = v1, v2, ... (n_chars also takes lo..hi)")
    p.add_argument("--iso-hidden", type=int, help="hidden size of the iso-parameter baseline")
    p.add_argument("--workers", type=int, default=1)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.fn(args)
    except (CWLMError, OSError, ValueError) as exc:
        print(f"cwlm {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
