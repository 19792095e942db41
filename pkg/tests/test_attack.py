import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robust_transfer.attack import L2, LINF, AttackConfig, batch_attack, norm_of, pgd, project
from robust_transfer.errors import InputError
from robust_transfer.losses import CE, EUCLIDEAN
from robust_transfer.model import identity_representation, model_forward
from zoo import build, linear_model


def test_project_examples():
    assert np.allclose(project([0.5, -0.05], LINF, 0.1), [0.1, -0.05])
    assert np.allclose(project([3.0, 4.0], L2, 1.0), [0.6, 0.8])
    inside = np.array([0.01, -0.02])
    assert np.array_equal(project(inside, LINF, 0.1), inside)
    assert np.array_equal(project(inside, L2, 0.1), inside)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=8), st.sampled_from([LINF, L2]), st.floats(0, 3))
def test_project_is_feasible_and_idempotent(delta, norm, eps):
    p = project(delta, norm, eps)
    assert norm_of(p, norm) <= eps * (1 + 1e-12) + 1e-15
    assert np.allclose(project(p, norm, eps), p, rtol=1e-12, atol=1e-15)


def test_config_defaults_and_validation():
    cfg = AttackConfig()
    assert (cfg.steps, cfg.relative_step_size, cfg.random_start, cfg.restarts) == (20, 0.7, True, 1)
    assert cfg.step_size == pytest.approx(0.7 * 8 / 255)
    for bad in (dict(norm="l1"), dict(epsilon=-1.0), dict(steps=0), dict(restarts=0),
                dict(relative_step_size=0.0), dict(objective="other")):
        with pytest.raises(InputError):
            AttackConfig(**bad)


def test_zero_budget_returns_input():
    model = build("relu")
    x = np.full(20, 0.3)
    res = pgd(model, x, 1, AttackConfig(epsilon=0.0, loss=CE))
    assert np.array_equal(res.x_adv, x) and res.delta_norm == 0.0


@pytest.mark.parametrize("w, x, y", [(2.0, 1.0, 0.0), (-1.5, 0.5, 3.0), (0.7, -2.0, -1.0)])
def test_linear_scalar_closed_form(w, x, y):
    eps = 0.1
    model = linear_model([[w]])
    cfg = AttackConfig(norm=LINF, epsilon=eps, steps=1, relative_step_size=1.0, random_start=False, loss=EUCLIDEAN)
    res = pgd(model, np.array([x]), np.array([y]), cfg)
    expected_delta = eps * np.sign(w) * np.sign(w * x - y)
    assert res.delta[0] == pytest.approx(expected_delta, abs=1e-15)
    assert res.objective_value == pytest.approx(abs(w * x - y) + eps * abs(w), abs=1e-12)


def test_linear_euclid_l2_reaches_optimum():
    # identity head: max over ||delta|| <= eps of ||x + delta - y|| is ||x - y|| + eps
    rng = np.random.default_rng(0)
    model = linear_model(np.eye(5))
    for _ in range(20):
        x, y = rng.normal(size=(2, 5))
        res = pgd(model, x, y, AttackConfig(norm=L2, epsilon=0.3, loss=EUCLIDEAN))
        assert res.objective_value == pytest.approx(np.linalg.norm(x - y) + 0.3, abs=1e-6)


@pytest.mark.parametrize("norm", [LINF, L2])
@pytest.mark.parametrize("objective", ["loss", "rep"])
def test_feasibility_and_warm_start_monotonicity(norm, objective):
    rng = np.random.default_rng(1)
    model = build("relu", seed=2)
    X = rng.uniform(0, 1, (15, 20))
    y = rng.integers(0, 3, 15)
    base = AttackConfig(norm=norm, epsilon=0.05, restarts=2)
    cfg = base.on_loss(CE) if objective == "loss" else base.on_representation()
    labels = y if objective == "loss" else None
    target = model if objective == "loss" else model.rep
    small = batch_attack(target, X, labels, cfg)
    for r, x in zip(small, X):
        assert norm_of(r.x_adv - x, norm) <= 0.05 + 1e-9
    big_cfg = AttackConfig(**{**cfg.__dict__, "epsilon": 0.1})
    big = batch_attack(target, X, labels, big_cfg, warm_starts=[r.delta for r in small])
    for a, b in zip(small, big):
        assert b.objective_value >= a.objective_value
        assert b.restarts_used == 3


def test_results_are_independent_of_order_and_threads():
    rng = np.random.default_rng(3)
    model = build("relu", seed=4)
    X = rng.uniform(0, 1, (12, 20))
    y = rng.integers(0, 3, 12)
    cfg = AttackConfig(epsilon=0.05, seed=7, loss=CE)
    serial = batch_attack(model, X, y, cfg)
    threaded = batch_attack(model, X, y, cfg, threads=4)
    perm = rng.permutation(12)
    permuted = batch_attack(model, X[perm], y[perm], cfg)
    for i in range(12):
        assert np.array_equal(serial[i].x_adv, threaded[i].x_adv)
        assert np.array_equal(serial[perm[i]].x_adv, permuted[i].x_adv)


def test_rep_attack_escapes_zero_displacement():
    rep = identity_representation(4)
    cfg = AttackConfig(norm=L2, epsilon=0.5, random_start=False).on_representation()
    res = pgd(rep, np.zeros(4), None, cfg)
    assert res.objective_value == pytest.approx(0.5, abs=1e-12)


def test_identity_rep_linf_corner():
    rep = identity_representation(9)
    res = pgd(rep, np.full(9, 0.5), None, AttackConfig(norm=LINF, epsilon=0.1).on_representation())
    assert res.objective_value == pytest.approx(0.1 * 3, abs=1e-12)


def test_attack_errors():
    model = build("relu")
    x = np.zeros(20)
    with pytest.raises(InputError):
        pgd(model, x, 0, AttackConfig(loss=CE), warm_start=np.ones(20))
    with pytest.raises(InputError):
        pgd(model, x, 0, AttackConfig())  # max_loss without a loss
    with pytest.raises(InputError):
        pgd(model.rep, x, 0, AttackConfig(loss=CE))
    with pytest.raises(InputError, match="sample 1"):
        batch_attack(model, np.zeros((2, 20)), [0, 0], AttackConfig(loss=CE),
                     warm_starts=[np.zeros(20), np.ones(20)])


def test_loss_attack_increases_loss():
    rng = np.random.default_rng(5)
    model = build("relu", seed=6)
    for _ in range(10):
        x = rng.uniform(0, 1, 20)
        y = int(rng.integers(3))
        res = pgd(model, x, y, AttackConfig(epsilon=0.05, loss=CE))
        assert res.objective_value >= CE.value(model_forward(model, x), y)
