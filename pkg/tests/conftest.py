import os
from pathlib import Path

import numpy as np
import pytest

from cwlm.char_encoding import CWConfig
from cwlm.corpus import Batch, CharVocab
from cwlm.network import ModelSpec
from cwlm.trainer import init_params

_acceptance: dict[int, list[str]] = {}
_checks: dict[int, str] = {}


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        n = marker.args[0]
        if "check" in marker.kwargs:
            _checks[n] = marker.kwargs["check"]
        if call.excinfo is None:
            outcome = "PASS"
        elif call.excinfo.errisinstance(pytest.skip.Exception):
            outcome = "SKIP"
        else:
            outcome = "FAIL"
        _acceptance.setdefault(n, []).append(outcome)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_acceptance):
        results = _acceptance[n]
        if "FAIL" in results:
            verdict = "FAIL"
        elif all(r == "SKIP" for r in results):
            verdict = "SKIP"
        else:
            verdict = "PASS"
        detail = f" - {_checks[n]}" if n in _checks else ""
        terminalreporter.write_line(f"criterion {n}: {verdict} ({len(results)} checks: {', '.join(results)}){detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def tiny_spec(n=2, E_c=3, shared=False, V=20, C=10, H=12, order="forward"):
    return ModelSpec(V, C, H, CWConfig(n, E_c if n else 0, order, shared))


def random_batch(rng, spec, B=2, T=4):
    inputs = rng.integers(0, spec.vocab_size, size=(B, T))
    chars = rng.integers(0, spec.char_vocab_size, size=(B, T, spec.cw.n))
    targets = rng.integers(0, spec.vocab_size, size=(B, T))
    return Batch(inputs, chars, targets)


def random_params(spec, rng, r=0.5, dtype=np.float64):
    return init_params(spec, r, rng, dtype)


@pytest.fixture
def abc_chars():
    return CharVocab(list("abcdefghijklmnopqrstuvwxyz"))


@pytest.fixture(scope="session")
def sample_dir(tmp_path_factory):
    from cwlm.sample_corpus import write_sample_corpus

    d = tmp_path_factory.mktemp("sample")
    write_sample_corpus(d)
    return d


@pytest.fixture(scope="session")
def small_text_dir(tmp_path_factory):
    """About 1k training tokens of the sample corpus for quick end-to-end runs."""
    from cwlm.sample_corpus import write_sample_corpus

    d = tmp_path_factory.mktemp("small")
    write_sample_corpus(d, train_tokens=1_000, valid_tokens=300, test_tokens=300)
    return d


def ptb_dir():
    d = os.environ.get("CWLM_PTB_DIR")
    if not d or not (Path(d) / "ptb.train.txt").exists():
        pytest.skip("Penn Treebank not available (set CWLM_PTB_DIR to a directory with ptb.{train,valid,test}.txt)")
    return Path(d)
