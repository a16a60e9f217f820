"""Experiment grid: one training run per (n, E_c, order, sharing, random) point.

Writes ``grid.tsv`` (one row per run, baselines included) and
``grid_summary.tsv`` with the mean (std) relative change of validation
perplexity of every shared-weight or random-character variant with respect
to the word-level baseline and to the matching plain character-word model.
"""
from __future__ import annotations

import csv
import itertools
import logging
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .char_encoding import ORDERS, CWConfig
from .checkpoint import save_checkpoint
from .config import DataConfig, _bool, read_entries, resolved_text
from .corpus import Corpus
from .errors import ConfigError
from .evaluation import perplexity, relative_change, relative_improvement
from .trainer import TrainConfig, train

log = logging.getLogger(__name__)

ISO_HIDDEN = {"small": 175, "large": 475}


@dataclass
class GridSpec:
    n_chars: list[int]
    char_emb: list[int]
    char_order: list[str]
    shared_weights: list[bool]
    random_control: list[bool]

    def points(self, base: CWConfig):
        for n, ec, order, shared, rnd in itertools.product(
            self.n_chars, self.char_emb, self.char_order, self.shared_weights, self.random_control
        ):
            yield dict(n=n, char_emb_size=ec, order=order, shared_weights=shared, random_control=rnd,
                       use_oov_surfaces=base.use_oov_surfaces)


def _ints(text: str) -> list[int]:
    out = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        lo, sep, hi = part.partition("..")
        out.extend(range(int(lo), int(hi) + 1) if sep else [int(part)])
    return out


def _words(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def parse_grid(text: str, base: CWConfig) -> GridSpec:
    """``key = v1, v2, ...`` lines; integer keys also accept ``lo..hi`` ranges.

    Keys left out keep the base configuration's single value.
    """
    spec = GridSpec([base.n], [base.char_emb_size], [base.order], [base.shared_weights], [base.random_control])
    parsers = {
        "n_chars": _ints,
        "char_emb": _ints,
        "char_order": _words,
        "shared_weights": lambda t: [_bool(w) for w in _words(t)],
        "random_control": lambda t: [_bool(w) for w in _words(t)],
    }
    for lineno, key, value in read_entries(text):
        if key not in parsers:
            raise ConfigError(f"unknown grid key {key!r}", lineno)
        try:
            values = parsers[key](value)
        except ValueError as exc:
            raise ConfigError(f"cannot parse {key} = {value!r}: {exc}", lineno) from None
        if key == "char_order" and any(v not in ORDERS for v in values):
            raise ConfigError(f"char_order values must be among {ORDERS}", lineno)
        setattr(spec, key, values)
    return spec


def point_name(cw: CWConfig, hidden: int) -> str:
    if cw.n == 0:
        return f"w{hidden}"
    name = f"c{cw.char_emb_size}_n{cw.n}_{cw.order}"
    if cw.shared_weights:
        name += "_shared"
    if cw.random_control:
        name += "_random"
    return name


def _run_one(job):
    name, cw, config, data, corpus, out_dir = job
    run_dir = Path(out_dir) / name
    run_dir.mkdir(parents=True, exist_ok=True)
    try:
        (run_dir / "config.resolved").write_text(resolved_text(config, cw, data))
        model, train_log = train(cw, config, corpus, log_path=run_dir / "train_log.tsv")
        save_checkpoint(model, config, run_dir / "model.ckpt")
        valid = perplexity(model, corpus.valid, config.unroll).perplexity if corpus.valid else math.nan
        test = perplexity(model, corpus.test, config.unroll).perplexity if corpus.test else math.nan
        return dict(name=name, status="ok", valid_ppl=valid, test_ppl=test, params=model.spec.n_params())
    except Exception as exc:  # a failed point must not stop the grid
        log.error("grid point %s failed:\n%s", name, traceback.format_exc())
        return dict(name=name, status=f"failed: {type(exc).__name__}: {exc}")


def _fmt(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "NA"
    return f"{x:.2f}" if isinstance(x, float) else str(x)


def run_grid(
    base_config: TrainConfig,
    base_cw: CWConfig,
    corpus: Corpus,
    grid: GridSpec,
    out_dir: str | Path,
    data: DataConfig = DataConfig(),
    iso_hidden: int | None = None,
    workers: int = 1,
) -> list[dict]:
    """Train every grid point plus the two word-level baselines; return table rows."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    H = base_config.hidden
    iso = iso_hidden if iso_hidden is not None else ISO_HIDDEN.get(base_config.preset, H)
    base_names = [f"w{H}", f"w{iso}"]

    rows: list[dict] = []
    jobs = []
    for point in grid.points(base_cw):
        key = {k: point[k] for k in ("n", "char_emb_size", "order", "shared_weights", "random_control")}
        try:
            cw = CWConfig(**point)
            if cw.n and cw.char_width >= H:
                raise ConfigError(f"{cw.n} x {cw.char_emb_size} = {cw.char_width} >= embedding size {H}")
        except (ValueError, ConfigError) as exc:
            log.warning("skipping grid point %s: %s", key, exc)
            rows.append(dict(name=f"c{point['char_emb_size']}_n{point['n']}_{point['order']}", cw=None, **key,
                             status=f"skipped: {exc}"))
            continue
        name = point_name(cw, H)
        rows.append(dict(name=name, cw=cw, **key))
        jobs.append((name, cw, base_config, data, corpus, out))

    if jobs:
        for h, name in zip((H, iso), base_names):
            if name in [j[0] for j in jobs]:
                continue
            cw = CWConfig(use_oov_surfaces=base_cw.use_oov_surfaces)
            rows.insert(0 if h == H else 1, dict(name=name, cw=cw, n=0, char_emb_size=0, order="-",
                                                 shared_weights=False, random_control=False))
            jobs.insert(0, (name, cw, replace(base_config, hidden=h), data, corpus, out))

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    by_name = {r["name"]: r for r in results}
    for row in rows:
        row.update(by_name.get(row["name"], {}))

    base = {n: by_name.get(n, {}) for n in base_names}
    for row in rows:
        for split in ("valid", "test"):
            for n in base_names:
                ref = base[n].get(f"{split}_ppl", math.nan)
                val = row.get(f"{split}_ppl", math.nan)
                row[f"{split}_rel_vs_{n}"] = (
                    relative_improvement(val, ref) if row.get("status") == "ok" and ref == ref and ref > 0 else math.nan
                )
    _write_table(out / "grid.tsv", rows, base_names)
    _write_summary(out / "grid_summary.tsv", summarize(rows, base_names[0]))
    return rows


TABLE_COLS = ["name", "n", "char_emb_size", "order", "shared_weights", "random_control", "status",
              "valid_ppl", "test_ppl", "params"]


def _write_table(path: Path, rows: list[dict], base_names: list[str]) -> None:
    cols = TABLE_COLS + [f"{s}_rel_vs_{n}" for s in ("valid", "test") for n in base_names]
    with open(path, "w", newline="") as f:
        w = csv.writer(f, delimiter="\t", lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in cols])


def summarize(rows: list[dict], baseline_name: str) -> list[dict]:
    """Mean and std over n of the relative change of validation perplexity.

    One summary line per (variant, E_c, order) group of shared-weight or
    random-character runs, compared with the baseline row and with the
    plain character-word row at the same n.
    """
    ok = [r for r in rows if r.get("status") == "ok"]
    base = next((r for r in ok if r["name"] == baseline_name), None)
    plain = {(r["n"], r["char_emb_size"], r["order"]): r
             for r in ok if r["n"] and not r["shared_weights"] and not r["random_control"]}
    groups: dict[tuple, list[dict]] = {}
    for r in ok:
        if r["n"] and (r["shared_weights"] or r["random_control"]):
            variant = "+".join(v for v, on in (("shared", r["shared_weights"]), ("random", r["random_control"])) if on)
            groups.setdefault((variant, r["char_emb_size"], r["order"]), []).append(r)
    out = []
    for (variant, ec, order), members in groups.items():
        vs_base = [relative_change(r["valid_ppl"], base["valid_ppl"]) for r in members] if base else []
        vs_cw = [relative_change(r["valid_ppl"], plain[(r["n"], ec, order)]["valid_ppl"])
                 for r in members if (r["n"], ec, order) in plain]
        out.append(dict(variant=variant, char_emb_size=ec, order=order,
                        n_values=",".join(str(r["n"]) for r in members),
                        vs_baseline=_mean_std(vs_base), vs_char_word=_mean_std(vs_cw)))
    return out


def _mean_std(xs):
    if not xs:
        return (math.nan, math.nan)
    return (float(np.mean(xs)), float(np.std(xs, ddof=1)) if len(xs) > 1 else 0.0)


def _write_summary(path: Path, summary: list[dict]) -> None:
    cols = ["variant", "char_emb_size", "order", "n_values", "vs_baseline", "vs_char_word",
            "vs_baseline_mean", "vs_baseline_std", "vs_char_word_mean", "vs_char_word_std"]
    with open(path, "w", newline="") as f:
        w = csv.writer(f, delimiter="\t", lineterminator="\n")
        w.writerow(cols)
        for s in summary:
            (bm, bs), (cm, cs) = s["vs_baseline"], s["vs_char_word"]
            w.writerow([s["variant"], s["char_emb_size"], s["order"], s["n_values"],
                        f"{_fmt(bm)} ({_fmt(bs)})", f"{_fmt(cm)} ({_fmt(cs)})",
                        _fmt(bm), _fmt(bs), _fmt(cm), _fmt(cs)])
