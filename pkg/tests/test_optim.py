import numpy as np
import pytest

from stfm.optim import OptimizerState, current_lr, optimizer_step
from stfm.params import ParamSet


def test_sgd_step_on_square():
    ps = ParamSet(x=np.array([1.0]))
    st = OptimizerState(kind="sgd", lr=0.1, weight_decay=0.0)
    optimizer_step(ps, ParamSet(x=2 * ps["x"]), st)
    assert ps["x"][0] == pytest.approx(0.8, abs=1e-15)


def test_adam_first_step_is_bounded_by_lr(np_rng):
    for _ in range(50):
        ps = ParamSet(w=np_rng.standard_normal((3, 3)), b=np_rng.standard_normal(3))
        old = ps.copy()
        g = ParamSet((k, np_rng.standard_normal(v.shape) * 10 ** np_rng.uniform(-6, 6)) for k, v in ps.items())
        optimizer_step(ps, g, OptimizerState(lr=0.01, weight_decay=0.0))
        for k in ps:
            step = old[k] - ps[k]
            assert np.all(np.abs(step) <= 0.01 * (1 + 1e-6))
            assert np.all(np.sign(step) == np.sign(g[k]))


def test_weight_decay_only_on_matrices():
    ps = ParamSet(w=np.ones((2, 2)), b=np.ones(2))
    st = OptimizerState(lr=0.1, weight_decay=0.5)
    optimizer_step(ps, ps.zeros_like(), st)
    np.testing.assert_allclose(ps["w"], 0.95)
    np.testing.assert_array_equal(ps["b"], 1.0)


def test_warmup_ramp():
    st = OptimizerState(lr=1e-3, warmup_steps=10, warmup_lr=1e-6)
    assert current_lr(st) == 1e-6
    st.step = 5
    assert current_lr(st) == pytest.approx(1e-6 + (1e-3 - 1e-6) / 2)
    st.step = 10
    assert current_lr(st) == 1e-3


def test_zero_lr_freezes_parameters(np_rng):
    ps = ParamSet(w=np_rng.standard_normal((2, 3)))
    old = ps.copy()
    st = OptimizerState(lr=0.0, warmup_steps=5)
    for _ in range(8):
        optimizer_step(ps, ParamSet(w=np.ones((2, 3))), st)
    assert ps.equal(old)


@pytest.mark.parametrize("kind,lr", [("adamw", 0.05), ("sgd", 1.0)])
def test_positive_definite_quadratic(np_rng, kind, lr):
    a = np_rng.standard_normal((6, 6))
    q = a @ a.T + 0.5 * np.eye(6)
    q /= np.linalg.eigvalsh(q).max()
    x = ParamSet(x=np_rng.standard_normal(6))

    def f(v):
        return 0.5 * v @ q @ v

    f0 = f(x["x"])
    st = OptimizerState(kind=kind, lr=lr, weight_decay=0.0)
    for _ in range(200):
        optimizer_step(x, ParamSet(x=q @ x["x"]), st)
    assert f(x["x"]) <= 0.01 * f0


def test_deterministic_trajectory(np_rng):
    p0 = ParamSet(w=np_rng.standard_normal((4, 4)))
    grads = [ParamSet(w=np_rng.standard_normal((4, 4))) for _ in range(20)]
    runs = []
    for _ in range(2):
        ps, st = p0.copy(), OptimizerState(lr=1e-2, warmup_steps=3)
        for g in grads:
            optimizer_step(ps, g, st)
        runs.append(ps)
    assert runs[0].equal(runs[1])


def test_shape_mismatch_and_unknown_kind():
    with pytest.raises(ValueError):
        optimizer_step(ParamSet(w=np.ones((2, 2))), ParamSet(w=np.ones(2)), OptimizerState())
    with pytest.raises(ValueError):
        OptimizerState(kind="rmsprop")
