import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dfbbs.costs import (AbsoluteAgentCost, CostModel, LinearAgentCost, QuadraticAgentCost,
                         aggregate_constants, bregman_distance, generate_sensor_fusion, l1_prox,
                         load_problem, quad_prox, save_problem, shrink)
from dfbbs.oracle import centralized_solve, finite_diff_check


def _families(rng, d=3):
    M = rng.random((4, d))
    return {
        "quadratic": QuadraticAgentCost(M, rng.random(4), lam=0.3),
        "linear": LinearAgentCost(rng.standard_normal(d)),
        "absolute": AbsoluteAgentCost(rng.standard_normal(d), w=1.7),
    }


def test_quadratic_constants_and_prox_system():
    rng = np.random.default_rng(0)
    M, z = rng.random((3, 4)), rng.random(3)
    f = QuadraticAgentCost(M, z, lam=0.2)
    eig = np.linalg.eigvalsh(M.T @ M)
    assert f.alpha == pytest.approx(2 * (max(eig[0], 0) + 0.2), abs=1e-12)
    assert f.lip == pytest.approx(2 * (eig[-1] + 0.2), rel=1e-12)
    v, g = rng.standard_normal(4), 0.7
    x = quad_prox(f, v, g)
    lhs = (np.eye(4) + 2 * g * M.T @ M + 2 * g * 0.2 * np.eye(4)) @ x
    np.testing.assert_allclose(lhs, v + 2 * g * M.T @ z, atol=1e-12)


def test_quad_prox_scalar_anchor():
    f = QuadraticAgentCost.anchor([3.0])
    assert quad_prox(f, np.array([0.0]), 1.0)[0] == pytest.approx(2.0, abs=1e-15)


def test_quad_prox_small_gamma_is_identity():
    rng = np.random.default_rng(1)
    f = QuadraticAgentCost(rng.random((2, 4)), rng.random(2))
    v = rng.standard_normal(4)
    assert np.linalg.norm(quad_prox(f, v, 1e-8) - v) <= 1e-6


def test_quad_prox_matches_gradient_descent_inner_solve():
    rng = np.random.default_rng(2)
    f = QuadraticAgentCost(rng.random((6, 4)), rng.random(6), lam=0.05)
    v, g = rng.standard_normal(4), 0.1
    # strongly convex inner objective: constant step 2 / (mu + L) contracts geometrically
    mu, L = f.alpha + 1 / g, f.lip + 1 / g
    x = v.copy()
    for _ in range(200):
        x = x - 2.0 / (mu + L) * (f.gradient(x) + (x - v) / g)
    assert np.linalg.norm(quad_prox(f, v, g) - x) <= 1e-8


def test_prox_rejects_nonpositive_gamma():
    f = QuadraticAgentCost.anchor([0.0])
    with pytest.raises(ValueError):
        quad_prox(f, np.zeros(1), 0.0)
    with pytest.raises(ValueError):
        l1_prox(AbsoluteAgentCost([0.0]), np.zeros(1), -1.0)
    with pytest.raises(ValueError):
        CostModel([f]).prox(np.zeros((1, 1)), 0.0)


@pytest.mark.parametrize("a,w,gamma,v,expected", [
    (0.0, 1.0, 1.0, 2.5, 1.5),
    (0.0, 1.0, 1.0, 0.5, 0.0),
    (1.0, 2.0, 0.25, 0.2, 0.7),
])
def test_l1_prox_examples(a, w, gamma, v, expected):
    out = l1_prox(AbsoluteAgentCost([a], w), np.array([v]), gamma)
    assert out[0] == pytest.approx(expected, abs=1e-15)


def test_shrink_is_soft_threshold():
    np.testing.assert_array_equal(shrink(np.array([-2.0, -0.5, 0.0, 0.5, 2.0]), 1.0),
                                  [-1.0, 0.0, 0.0, 0.0, 1.0])


def test_absolute_cost_subgradient_selection():
    f = AbsoluteAgentCost([1.0, 2.0], w=3.0)
    np.testing.assert_array_equal(f.subgradient(np.array([1.0, 5.0])), [0.0, 3.0])
    lo, hi = f.subdifferential_box(np.array([1.0, 0.0]))
    np.testing.assert_array_equal(lo, [-3.0, -3.0])
    np.testing.assert_array_equal(hi, [3.0, -3.0])
    assert not f.smooth and f.lip == math.inf
    with pytest.raises(TypeError):
        f.gradient(np.zeros(2))


def test_prox_stationarity_smooth_and_absolute():
    rng = np.random.default_rng(3)
    fams = _families(rng)
    for _ in range(50):
        v, g = rng.standard_normal(3) * 3, rng.uniform(0.05, 5.0)
        for name in ("quadratic", "linear"):
            f = fams[name]
            x = f.prox(v, g)
            assert np.linalg.norm((v - x) / g - f.gradient(x)) <= 1e-8
        f = fams["absolute"]
        x = f.prox(v, g)
        lo, hi = f.subdifferential_box(x, atol=1e-12)
        r = (v - x) / g
        assert np.all(r >= lo - 1e-9) and np.all(r <= hi + 1e-9)


def test_prox_nonexpansive():
    rng = np.random.default_rng(4)
    fams = _families(rng)
    for f in fams.values():
        for _ in range(200):
            v, vp, g = rng.standard_normal(3), rng.standard_normal(3), rng.uniform(0.01, 10)
            assert np.linalg.norm(f.prox(v, g) - f.prox(vp, g)) <= np.linalg.norm(v - vp) + 1e-12


def test_value_midpoint_convexity():
    rng = np.random.default_rng(5)
    for f in _families(rng).values():
        for _ in range(200):
            x, y = rng.standard_normal(3) * 4, rng.standard_normal(3) * 4
            assert f.value((x + y) / 2) <= (f.value(x) + f.value(y)) / 2 + 1e-10


def test_bregman_examples():
    c = CostModel([QuadraticAgentCost.anchor([1.7])])
    assert bregman_distance(c, 0, [0.4], [0.4], c[0].gradient(np.array([0.4]))) == 0.0
    assert bregman_distance(c, 0, [2.0], [0.0], c[0].gradient(np.array([0.0]))) == pytest.approx(4.0)


def test_bregman_nonnegative_and_strongly_convex():
    rng = np.random.default_rng(6)
    fams = _families(rng)
    c = CostModel([fams["quadratic"]])
    cl = CostModel([fams["linear"]])
    ca = CostModel([fams["absolute"]])
    alpha = fams["quadratic"].alpha
    for _ in range(1000):
        x, xp = rng.standard_normal(3) * 3, rng.standard_normal(3) * 3
        dq = bregman_distance(c, 0, x, xp, c[0].gradient(xp))
        assert dq >= -1e-12
        assert dq >= alpha / 2 * np.sum((x - xp) ** 2) - 1e-10
        assert bregman_distance(cl, 0, x, xp, cl[0].gradient(xp)) >= -1e-12
        assert bregman_distance(ca, 0, x, xp, ca[0].subgradient(xp)) >= -1e-12


def test_aggregate_constants():
    anchors = CostModel([QuadraticAgentCost.anchor([a]) for a in (0.0, 3.0, 6.0)])
    assert aggregate_constants(anchors) == (2.0, 2.0)
    mixed = CostModel([QuadraticAgentCost.anchor([0.0]), AbsoluteAgentCost([1.0])])
    assert aggregate_constants(mixed)[1] == math.inf
    assert not mixed.smooth


def test_aggregate_lip_sensor_fusion_single_row():
    prob = generate_sensor_fusion(15, 4, 1, 0.3, 0.1, 8)
    lam = 0.3 / 15
    per_agent = [np.linalg.eigvalsh(2 * a.M.T @ a.M + 2 * lam * np.eye(4))[-1] for a in prob.costs.agents]
    closed = [2 * (float(a.M[0] @ a.M[0]) + lam) for a in prob.costs.agents]
    _, lip = aggregate_constants(prob.costs)
    assert lip == pytest.approx(max(per_agent), rel=1e-12)
    assert lip == pytest.approx(max(closed), rel=1e-12)


def test_cost_model_rejects_mixed_dimensions():
    with pytest.raises(ValueError):
        CostModel([QuadraticAgentCost.anchor([0.0]), QuadraticAgentCost.anchor([0.0, 1.0])])
    with pytest.raises(ValueError):
        CostModel([])


def test_cost_model_batched_matches_per_agent():
    rng = np.random.default_rng(7)
    prob = generate_sensor_fusion(6, 3, 2, 0.4, 0.2, 9)
    c = prob.costs
    x = rng.standard_normal((6, 3))
    np.testing.assert_allclose(c.values(x), [a.value(x[i]) for i, a in enumerate(c.agents)], rtol=1e-13)
    np.testing.assert_allclose(c.gradient(x), [a.gradient(x[i]) for i, a in enumerate(c.agents)], atol=1e-13)
    g = rng.uniform(0.1, 2.0, size=6)
    np.testing.assert_allclose(c.prox(x, g), [a.prox(x[i], g[i]) for i, a in enumerate(c.agents)], atol=1e-13)
    np.testing.assert_allclose(c.prox(x, 0.5), [a.prox(x[i], 0.5) for i, a in enumerate(c.agents)], atol=1e-13)
    xs = rng.standard_normal((5, 6, 3))
    np.testing.assert_allclose(c.values(xs), np.stack([c.values(xk) for xk in xs]), rtol=1e-13)


def test_generator_noiseless_recovers_truth():
    prob = generate_sensor_fusion(20, 4, 1, 0.0, 0.0, 3)
    for a in prob.costs.agents:
        np.testing.assert_allclose(a.z, a.M @ prob.theta_true, atol=0)
    truth = centralized_solve(prob.costs)
    assert truth.unique
    np.testing.assert_allclose(truth.theta_star, prob.theta_true, atol=1e-8)


def test_generator_paper_family_and_determinism():
    a = generate_sensor_fusion(50, 4, 1, 0.1, math.sqrt(0.1), 11)
    b = generate_sensor_fusion(50, 4, 1, 0.1, math.sqrt(0.1), 11)
    assert a.m == 50 and a.d == 4
    assert all(M.shape == (1, 4) for M in a.measurement_matrices)
    for Ma, Mb, za, zb in zip(a.measurement_matrices, b.measurement_matrices, a.measurements, b.measurements):
        np.testing.assert_array_equal(Ma, Mb)
        np.testing.assert_array_equal(za, zb)
    assert all(np.all((M >= 0) & (M <= 1)) for M in a.measurement_matrices)
    assert a.costs[0].lam == pytest.approx(0.1 / 50)


def test_generator_preconditions():
    with pytest.raises(ValueError):
        generate_sensor_fusion(0, 4, 1, 0.0, 0.1, 0)
    with pytest.raises(ValueError):
        generate_sensor_fusion(3, 4, 1, -1.0, 0.1, 0)


def test_problem_roundtrip_is_exact(tmp_path):
    prob = generate_sensor_fusion(7, 3, 2, 0.25, 0.3, 12)
    save_problem(tmp_path / "p.json", prob)
    back = load_problem(tmp_path / "p.json")
    assert back.seed == 12 and back.lam_reg == 0.25
    np.testing.assert_array_equal(back.theta_true, prob.theta_true)
    for a, b in zip(prob.costs.agents, back.costs.agents):
        np.testing.assert_array_equal(a.M, b.M)
        np.testing.assert_array_equal(a.z, b.z)
        assert a.lam == b.lam


def test_finite_differences_on_all_smooth_families():
    prob = generate_sensor_fusion(10, 4, 2, 0.5, 0.3, 0)
    assert finite_diff_check(prob.costs, samples=20, h=1e-5) <= 1e-7
    lin = CostModel([LinearAgentCost([1.0, -2.0]), LinearAgentCost([0.5, 0.5])])
    assert finite_diff_check(lin, samples=20, h=1e-5) <= 1e-10
    with pytest.raises(TypeError):
        finite_diff_check(CostModel([AbsoluteAgentCost([0.0])]))


@settings(max_examples=40, deadline=None)
@given(v=st.floats(-50, 50), gamma=st.floats(1e-3, 100), a=st.floats(-10, 10), w=st.floats(0.1, 5))
def test_l1_prox_minimizes_objective(v, gamma, a, w):
    f = AbsoluteAgentCost([a], w)
    x = l1_prox(f, np.array([v]), gamma)[0]
    obj = lambda t: w * abs(t - a) + (t - v) ** 2 / (2 * gamma)
    for t in (x - 1e-3, x + 1e-3, a, v):
        assert obj(x) <= obj(t) + 1e-9
