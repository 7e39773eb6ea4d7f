import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowguide import autodiff as ad
from flowguide.nn import (
    AdamState,
    EmaState,
    NetSpec,
    adam_step,
    ema_update,
    init_velocity_params,
    onehot,
    select_conditions,
    time_embedding,
    velocity,
    velocity_forward,
    zero_condition,
)

SPEC = NetSpec(data_dim=2, cond_dim=4, width=16, hidden_layers=4, time_freqs=4)


def _setup(seed=0, batch=6):
    rng = np.random.default_rng(seed)
    params = init_velocity_params(SPEC, rng)
    x = rng.standard_normal((batch, 2))
    t = rng.uniform(size=batch)
    return params, x, t


def test_zero_final_layer_gives_zero_velocity():
    params, x, t = _setup()
    params["W4"] = np.zeros_like(params["W4"])
    params["b4"] = np.zeros_like(params["b4"])
    np.testing.assert_array_equal(velocity(params, SPEC, x, t, zero_condition(6, 4)), 0.0)


def test_zero_vs_null_condition_differ():
    params, x, t = _setup()
    null = np.tile(np.random.default_rng(1).standard_normal(4), (6, 1))
    a = velocity(params, SPEC, x, t, zero_condition(6, 4))
    b = velocity(params, SPEC, x, t, null)
    assert not np.allclose(a, b)


def test_capture_matches_truncated_network():
    params, x, t = _setup()
    cond = zero_condition(6, 4)
    _, feat = velocity_forward(params, SPEC, x, t, cond, capture_layer=2)
    h = np.concatenate([x, time_embedding(t, 4), cond], axis=1)
    for i in range(2):
        z = h @ params[f"W{i}"] + params[f"b{i}"]
        h = z / (1 + np.exp(-z))
    np.testing.assert_allclose(feat.value, h, rtol=1e-12, atol=1e-14)
    v, early = velocity_forward(params, SPEC, x, t, cond, capture_layer=2, stop_at_capture=True)
    assert v is None
    np.testing.assert_array_equal(early.value, feat.value)


@pytest.mark.parametrize("layer", [0, 4, -1])
def test_capture_layer_range(layer):
    params, x, t = _setup()
    with pytest.raises(ValueError):
        velocity_forward(params, SPEC, x, t, zero_condition(6, 4), capture_layer=layer)


def test_needs_three_layers():
    with pytest.raises(ValueError):
        NetSpec(hidden_layers=2)


def test_zero_vector_equals_zero_external_code():
    params, x, t = _setup()
    a = velocity(params, SPEC, x, t, zero_condition(6, 4))
    b = velocity(params, SPEC, x, t, select_conditions(onehot([0, 1, 2, 3], 4), np.full(6, -1)).value)
    assert a.tobytes() == b.tobytes()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_batch_equivariance(seed):
    params, x, t = _setup(seed % 1000)
    rng = np.random.default_rng(seed)
    cond = rng.standard_normal((6, 4))
    perm = rng.permutation(6)
    v = velocity(params, SPEC, x, t, cond)
    vp = velocity(params, SPEC, x[perm], t[perm], cond[perm])
    np.testing.assert_allclose(vp, v[perm], rtol=1e-12, atol=1e-14)


def test_forward_deterministic():
    params, x, t = _setup()
    c = zero_condition(6, 4)
    assert velocity(params, SPEC, x, t, c).tobytes() == velocity(params, SPEC, x, t, c).tobytes()


def test_velocity_loss_gradients_match_finite_differences():
    params, x, t = _setup(batch=8)
    target = np.random.default_rng(5).standard_normal((8, 2))
    cond = np.random.default_rng(6).standard_normal((8, 4))

    def loss(p):
        v, _ = velocity_forward(p, SPEC, x, t, cond)
        return ad.mse(v, ad.const(target))

    assert ad.grad_check(loss, params) < 1e-4


def test_select_conditions_rows():
    table = np.arange(6.0).reshape(3, 2)
    out = select_conditions(table, np.array([2, -1, 0])).value
    np.testing.assert_array_equal(out, [[4, 5], [0, 0], [0, 1]])


def test_onehot():
    np.testing.assert_array_equal(onehot([1, 0], 3), [[0, 1, 0], [1, 0, 0]])
    with pytest.raises(ValueError):
        onehot([3], 3)


def test_time_embedding_lipschitz():
    ts = np.linspace(0, 1, 201)
    e = time_embedding(ts, 16)
    steps = np.linalg.norm(np.diff(e, axis=0), axis=1) / np.diff(ts)
    # per-coordinate bound 2 pi f_max; the sin/cos pairs add at most sqrt(F)
    assert steps.max() <= 2 * np.pi * 16.0 * np.sqrt(16)


# -- Adam ----------------------------------------------------------------------

def test_adam_zero_gradient_is_fixed_point():
    p = {"w": np.array([1.0, -2.0, 3.0])}
    st_ = AdamState(lr=0.1)
    out = p
    for _ in range(5):
        out = adam_step(st_, out, {"w": np.zeros(3)})
    np.testing.assert_array_equal(out["w"], p["w"])


def test_adam_first_step_magnitude():
    st_ = AdamState(lr=1e-3)
    out = adam_step(st_, {"w": np.array(0.5)}, {"w": np.array(-3.7)})
    assert out["w"] - 0.5 == pytest.approx(1e-3, rel=1e-6)


def _reference_adam(p, grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for k, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**k)
        vhat = v / (1 - b2**k)
        p = p - lr * mhat / (np.sqrt(vhat) + eps)
    return p


def test_adam_matches_reference_two_steps():
    st_ = AdamState(lr=1e-3)
    p = {"w": np.array([0.25])}
    for _ in range(2):
        p = adam_step(st_, p, {"w": np.array([1.0])})
    assert abs(p["w"][0] - _reference_adam(0.25, [1.0, 1.0])) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=20))
def test_adam_matches_reference_sequence(grads):
    st_ = AdamState(lr=1e-2)
    p = {"w": np.array([0.0])}
    for g in grads:
        p = adam_step(st_, p, {"w": np.array([g])})
    assert abs(p["w"][0] - _reference_adam(0.0, grads, lr=1e-2)) < 1e-12
    assert st_.step == len(grads)


def test_adam_nan_names_parameter():
    with pytest.raises(FloatingPointError, match="bias"):
        adam_step(AdamState(), {"bias": np.zeros(2)}, {"bias": np.array([0.0, np.nan])})


def test_adam_skips_missing_gradients():
    st_ = AdamState()
    p = {"a": np.ones(2), "b": np.ones(2)}
    out = adam_step(st_, p, {"a": np.ones(2)})
    assert out["b"] is p["b"]
    assert "b" not in st_.counts


# -- EMA -----------------------------------------------------------------------

def test_ema_examples():
    e = ema_update(EmaState({"w": np.array([2.0])}, decay=1.0), {"w": np.array([5.0])})
    assert e.shadow["w"][0] == 2.0
    e = ema_update(EmaState({"w": np.array([2.0])}, decay=0.0), {"w": np.array([5.0])})
    assert e.shadow["w"][0] == 5.0
    e = ema_update(EmaState({"w": np.array([0.0])}, decay=0.999), {"w": np.array([1.0])})
    assert e.shadow["w"][0] == pytest.approx(0.001, abs=1e-15)


def test_ema_shape_mismatch():
    with pytest.raises(ValueError):
        ema_update(EmaState({"w": np.zeros(2)}), {"w": np.zeros(3)})
