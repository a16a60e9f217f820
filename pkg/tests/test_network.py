import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_batch, random_params, tiny_spec
from cwlm.corpus import Batch
from cwlm.errors import ShapeError
from cwlm.network import (
    ModelSpec,
    backward,
    clip_global_norm,
    dropout_masks,
    forward,
    global_norm,
    loss,
    loss_and_grads,
    softmax,
    zero_state,
)
from cwlm.trainer import init_params

F64 = np.float64


def test_zero_network_is_uniform(rng):
    spec = tiny_spec()
    params = {k: np.zeros(s) for k, s in spec.shapes().items()}
    batch = random_batch(rng, spec)
    logits, _ = forward(params, spec, batch, zero_state(spec, 2, F64))
    assert np.allclose(softmax(logits), 1.0 / spec.vocab_size, rtol=0, atol=1e-15)


def test_keep_one_matches_eval(rng):
    spec = tiny_spec()
    params = random_params(spec, rng)
    batch = random_batch(rng, spec)
    masks = dropout_masks(rng, spec, 2, 1.0, F64)
    a, _ = forward(params, spec, batch, zero_state(spec, 2, F64), masks)
    b, _ = forward(params, spec, batch, zero_state(spec, 2, F64))
    assert np.array_equal(a, b)


def _sig(z):
    return 1.0 / (1.0 + math.exp(-z))


def test_single_step_scalar_oracle(rng):
    spec = ModelSpec(vocab_size=3, char_vocab_size=2, hidden=2)
    params = init_params(spec, 0.8, rng, F64)
    h_prev = [[0.3, -0.2], [0.1, 0.4]]
    c_prev = [[-0.5, 0.25], [0.2, -0.1]]
    state = [(np.array([h]), np.array([c])) for h, c in zip(h_prev, c_prev)]
    batch = Batch(np.array([[1]]), np.zeros((1, 1, 0), dtype=np.int64), np.array([[2]]))
    logits, new_state = forward(params, spec, batch, state)

    x = params["word_emb"][1].tolist()
    for layer in range(2):
        Wx, Wh, b = (params[f"lstm.{layer + 1}.{n}"] for n in ("W_x", "W_h", "b"))
        hp, cp = h_prev[layer], c_prev[layer]
        z = [
            sum(x[a] * Wx[a, j] for a in range(2)) + sum(hp[a] * Wh[a, j] for a in range(2)) + b[j]
            for j in range(8)
        ]
        h, c = [], []
        for u in range(2):
            i, f, g, o = _sig(z[u]), _sig(z[2 + u]), math.tanh(z[4 + u]), _sig(z[6 + u])
            cu = f * cp[u] + i * g
            c.append(cu)
            h.append(o * math.tanh(cu))
        assert np.allclose(new_state[layer][1][0], c, rtol=1e-12, atol=1e-14)
        assert np.allclose(new_state[layer][0][0], h, rtol=1e-12, atol=1e-14)
        x = h
    out = [sum(x[a] * params["softmax.W"][a, v] for a in range(2)) + params["softmax.b"][v] for v in range(3)]
    assert np.allclose(logits[0, 0], out, rtol=1e-12, atol=1e-14)


def test_loss_examples():
    assert loss(np.zeros((1, 1, 4)), np.array([[3]])) == pytest.approx(math.log(4), abs=1e-12)
    big = np.array([[[0.0, 0.0, 200.0]]])
    assert loss(big, np.array([[2]])) < 1e-80
    oracle = -math.log(math.exp(3) / (math.exp(1) + math.exp(2) + math.exp(3)))
    got = loss(np.array([[[1.0, 2.0, 3.0]]]), np.array([[2]]))
    assert got == pytest.approx(oracle, abs=1e-12)
    assert round(got, 4) == 0.4076


def _fd_check(spec, params, batch, state, masks, h=1e-5):
    _, grads, _ = loss_and_grads(params, spec, batch, state, masks)

    def f():
        logits, _ = forward(params, spec, batch, state, masks)
        return loss(logits, batch.targets)

    worst_tensor, worst_elem = 0.0, 0.0
    for name, p in params.items():
        num = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = p[idx]
            p[idx] = old + h
            up = f()
            p[idx] = old - h
            down = f()
            p[idx] = old
            num[idx] = (up - down) / (2 * h)
        a = grads[name]
        denom = max(np.linalg.norm(a), np.linalg.norm(num))
        if denom > 0:
            worst_tensor = max(worst_tensor, np.linalg.norm(a - num) / denom)
        elem = np.abs(a - num) / np.maximum(np.maximum(np.abs(a), np.abs(num)), 1e-6)
        worst_elem = max(worst_elem, float(elem.max()))
    return worst_tensor, worst_elem


@pytest.mark.parametrize("shared", [False, True])
@pytest.mark.parametrize("with_masks", [False, True])
def test_gradients_match_finite_differences(rng, shared, with_masks):
    spec = tiny_spec(n=2, E_c=3, shared=shared, V=20, C=10, H=12)
    params = random_params(spec, rng, r=0.3)
    batch = random_batch(rng, spec, B=2, T=4)
    state = [(rng.normal(0, 0.3, (2, 12)), rng.normal(0, 0.3, (2, 12))) for _ in range(2)]
    masks = dropout_masks(rng, spec, 2, 0.7, F64) if with_masks else None
    worst_tensor, worst_elem = _fd_check(spec, params, batch, state, masks)
    assert worst_tensor < 1e-4
    assert worst_elem < 1e-4


def test_duplicated_batch_doubles_summed_gradient(rng):
    spec = tiny_spec()
    params = random_params(spec, rng)
    b = random_batch(rng, spec, B=1, T=4)
    doubled = Batch(
        np.concatenate([b.inputs] * 2), np.concatenate([b.char_inputs] * 2), np.concatenate([b.targets] * 2)
    )
    g1 = backward(params, spec, b, zero_state(spec, 1, F64))
    g2 = backward(params, spec, doubled, zero_state(spec, 2, F64))
    # summed loss: doubled batch has 2N tokens, the single one N
    N = b.inputs.size
    for k in g1:
        assert np.allclose(2 * N * g2[k], 2 * (N * g1[k]), rtol=1e-10, atol=1e-13)


def test_clip_examples():
    out = clip_global_norm({"a": np.array([6.0, 8.0])}, 5.0)
    assert out["a"].tolist() == [3.0, 4.0]
    g = {"a": np.array([1.0, 2.0, 2.0])}
    assert clip_global_norm(g, 5.0)["a"].tolist() == [1.0, 2.0, 2.0]
    two = {"a": np.array([3.0]), "b": np.array([4.0])}
    same = clip_global_norm(two, 5.0)
    assert same["a"].tolist() == [3.0] and same["b"].tolist() == [4.0]
    half = clip_global_norm(two, 2.5)
    assert half["a"].tolist() == [1.5] and half["b"].tolist() == [2.0]
    with pytest.raises(ValueError):
        clip_global_norm(two, 0.0)


@settings(max_examples=60)
@given(
    st.lists(st.floats(-1e4, 1e4, allow_nan=False), min_size=1, max_size=20),
    st.floats(1e-3, 50.0),
    st.sampled_from([np.float32, np.float64]),
)
def test_clip_bounds_norm_and_keeps_direction(values, max_norm, dtype):
    g = {"x": np.array(values, dtype=dtype), "y": np.array(values[::-1], dtype=dtype) * 0.5}
    out = clip_global_norm(g, max_norm)
    assert global_norm(out) <= max_norm + 1e-9
    before = np.concatenate([v.astype(F64) for v in g.values()])
    after = np.concatenate([v.astype(F64) for v in out.values()])
    if np.linalg.norm(before) > 0 and np.linalg.norm(after) > 0:
        cos = before @ after / (np.linalg.norm(before) * np.linalg.norm(after))
        assert cos > 1 - 1e-5


def test_softmax_rows_sum_to_one(rng):
    for dtype, tol in ((np.float32, 1e-6), (np.float64, 1e-12)):
        logits = (rng.normal(0, 5, size=(3, 7, 50))).astype(dtype)
        assert np.all(np.abs(softmax(logits).sum(-1, dtype=np.float64) - 1) <= tol)


def test_determinism(rng):
    spec = tiny_spec()
    batch = random_batch(rng, spec)
    runs = []
    for _ in range(2):
        r = np.random.default_rng(99)
        params = init_params(spec, 0.1, r, np.float32)
        masks = dropout_masks(r, spec, 2, 0.5, np.float32)
        nll, grads, _ = loss_and_grads(params, spec, batch, zero_state(spec, 2), masks)
        logits, _ = forward(params, spec, batch, zero_state(spec, 2), masks)
        runs.append((nll, grads, logits))
    assert runs[0][0] == runs[1][0]
    assert np.array_equal(runs[0][2], runs[1][2])
    for k in runs[0][1]:
        assert np.array_equal(runs[0][1][k], runs[1][1][k])


def test_state_continuity(rng):
    spec = tiny_spec()
    params = random_params(spec, rng)
    full = random_batch(rng, spec, B=3, T=8)
    halves = [Batch(full.inputs[:, s], full.char_inputs[:, s], full.targets[:, s]) for s in (slice(0, 4), slice(4, 8))]
    whole, state_w = forward(params, spec, full, zero_state(spec, 3, F64))
    state = zero_state(spec, 3, F64)
    parts = []
    for b in halves:
        out, state = forward(params, spec, b, state)
        parts.append(out)
    assert np.allclose(np.concatenate(parts, axis=1), whole, rtol=1e-13, atol=1e-13)
    for (h1, c1), (h2, c2) in zip(state, state_w):
        assert np.allclose(h1, h2, rtol=1e-13, atol=1e-13) and np.allclose(c1, c2, rtol=1e-13, atol=1e-13)


def test_eval_ignores_dropout_seed(rng):
    spec = tiny_spec()
    params = random_params(spec, rng)
    batch = random_batch(rng, spec)
    outs = []
    for seed in (1, 2):
        dropout_masks(np.random.default_rng(seed), spec, 2, 0.5, F64)
        outs.append(forward(params, spec, batch, zero_state(spec, 2, F64))[0])
    assert np.array_equal(outs[0], outs[1])


def test_dropout_masks_inverted_scaling():
    spec = tiny_spec(H=40)
    masks = dropout_masks(np.random.default_rng(3), spec, 500, 0.75, F64)
    assert len(masks) == 3
    for m in masks:
        assert set(np.unique(m).tolist()) <= {0.0, 1.0 / 0.75}
        assert abs(m.mean() - 1.0) < 0.02


def test_shape_errors(rng):
    spec = tiny_spec()
    params = random_params(spec, rng)
    batch = random_batch(rng, spec)
    with pytest.raises(ShapeError):
        forward(params, spec, batch, zero_state(spec, 3, F64))
    bad = Batch(batch.inputs, batch.char_inputs[..., :1], batch.targets)
    with pytest.raises(ShapeError):
        forward(params, spec, bad, zero_state(spec, 2, F64))
    with pytest.raises(ShapeError):
        forward(params, spec, batch, zero_state(spec, 2, F64), masks=[np.ones((2, 12))])
