import math

import numpy as np
import pytest
from mpmath import mp

from lipforge import (
    Domain,
    LinearMap,
    LipForgeError,
    NormKind,
    NormOf,
    Scale,
    add_const,
    blend_params,
    choose_s,
    eval_batch,
    eval_point,
    linearize_near,
    sup_dist,
    zero_map,
)
from lipforge.numerics import exact_mpf, to_float, working_dps_for_scale
from lipforge.space import norm_batch, sample_ball


@pytest.fixture
def unit_box():
    return Domain.box([0.0, 0.0], [1.0, 1.0])


def test_choose_s_two_points(unit_box):
    # min(0.99, sqrt(0.5)/4, 0.25/4): the boundary margin binds
    s = choose_s(np.array([[0.25, 0.25], [0.75, 0.75]]), unit_box)
    assert s == pytest.approx(0.0625, abs=1e-15)


def test_choose_s_singleton(unit_box):
    s = choose_s(np.array([[0.5, 0.5]]), unit_box)
    assert s == pytest.approx(0.125, abs=1e-15)


def test_choose_s_guarantees(unit_box):
    rng = np.random.default_rng(0)
    pts = np.array([[0.3, 0.3], [0.62, 0.55], [0.8, 0.21]])
    s = choose_s(pts, unit_box)
    from lipforge.nets import separation

    assert separation(pts) >= 4 * s
    assert min(float(unit_box.dist_to_boundary(p)) for p in pts) >= 4 * s
    assert s < 1.0


def test_choose_s_errors(unit_box):
    with pytest.raises(LipForgeError, match="empty"):
        choose_s(np.empty((0, 2)), unit_box)
    with pytest.raises(LipForgeError, match="zero separation"):
        choose_s(np.array([[0.5, 0.5], [0.5, 0.5]]), unit_box)


def test_blend_params_against_closed_forms():
    # independent one-line oracle evaluation of the closed forms
    r, s, diam_q = 0.5, 0.25, math.sqrt(2.0)
    params = blend_params(r, s, diam_q)
    beta_oracle = r * s / (4.0 * (1.0 + diam_q))
    alpha_oracle = r**2 * s / (16.0 * (1.0 + diam_q) ** 2)
    blow_oracle = s / (s - beta_oracle)
    assert abs(to_float(params.beta) - beta_oracle) <= 1e-12 * beta_oracle
    assert abs(to_float(params.alpha) - alpha_oracle) <= 1e-12 * alpha_oracle
    assert abs(to_float(params.blow_up) - blow_oracle) <= 1e-12 * blow_oracle


def test_blend_params_invariants_random():
    rng = np.random.default_rng(1)
    for _ in range(50):
        r = float(rng.uniform(0.01, 0.99))
        s = float(rng.uniform(0.01, 0.99))
        d = float(rng.uniform(0.1, 5.0))
        p = blend_params(r, s, d)
        with mp.workdps(60):
            assert 0 < p.beta < p.s / 2
            assert p.alpha <= p.beta**2 / p.s * (1 + exact_mpf(1e-30))
            assert p.alpha < p.r


def test_blend_params_rejects_bad_inputs():
    with pytest.raises(LipForgeError):
        blend_params(1.5, 0.25, 1.0)
    with pytest.raises(LipForgeError):
        blend_params(0.5, 0.0, 1.0)
    with pytest.raises(LipForgeError):
        blend_params(0.5, 0.25, -1.0)


def test_linearize_near_exactness(unit_box):
    f = zero_map(2, 1)
    gamma = np.array([[0.5, 0.5]])
    L = LinearMap(np.array([[0.5, 0.0]]))
    g, alpha = linearize_near(f, gamma, L, 0.5, unit_box)
    with mp.workdps(working_dps_for_scale(alpha)):
        x = np.array([exact_mpf(0.5), exact_mpf(0.5)], dtype=object)
        gx = eval_point(g, x)
        worst = 0.0
        for u in sample_ball(np.zeros(2), exact_mpf(alpha), 1000, 1):
            z = np.array([x[i] + u[i] for i in range(2)], dtype=object)
            gz = eval_point(g, z)
            lu = L.apply(u)
            worst = max(worst, to_float(abs(gz[0] - gx[0] - lu[0])))
    assert worst <= 1e-12


def test_linearize_near_distance_and_lipschitz(unit_box):
    f = Scale(0.9, NormOf(2))
    gamma = np.array([[0.3, 0.3], [0.7, 0.7]])
    L = LinearMap(np.array([[0.4, 0.0]]))
    res = linearize_near(f, gamma, L, 0.5, unit_box)
    g = res.fun
    assert g.lip_cert <= 1.0 + 1e-12
    rho = sup_dist(g, f, unit_box, budget=512, seed=3)
    assert rho < 0.5
    assert rho <= to_float(res.rho_bound) + 1e-9
    # analytic bound certifies the sup-distance budget
    assert res.rho_bound < exact_mpf(0.5)
    rng = np.random.default_rng(4)
    X = rng.uniform(0, 1, size=(10_000, 2))
    Y = rng.uniform(0, 1, size=(10_000, 2))
    gap = norm_batch(X - Y, NormKind.EUCLIDEAN)
    keep = gap > 1e-9
    diff = norm_batch(eval_batch(g, X[keep]) - eval_batch(g, Y[keep]), NormKind.EUCLIDEAN)
    assert float(np.max(diff / gap[keep])) <= 1.0 + 1e-9


def test_linearize_near_rejects_large_operator(unit_box):
    with pytest.raises(LipForgeError, match="operator too large"):
        linearize_near(
            zero_map(2, 1), np.array([[0.5, 0.5]]), LinearMap(np.array([[0.6, 0.0]])), 0.5, unit_box
        )


def test_linearize_near_rejects_uncertified_mapping(unit_box):
    f = Scale(1.5, NormOf(2))
    with pytest.raises(LipForgeError, match="1-Lipschitz"):
        linearize_near(f, np.array([[0.5, 0.5]]), LinearMap(np.array([[0.1, 0.0]])), 0.5, unit_box)


def test_linearize_far_field_scaling(unit_box):
    # outside the warp balls the output is exactly the rescaled input mapping
    f = Scale(0.9, NormOf(2))
    gamma = np.array([[0.5, 0.5]])
    res = linearize_near(f, gamma, LinearMap(np.array([[0.3, 0.0]])), 0.4, unit_box)
    g = res.fun
    s = to_float(res.params.s)
    c = to_float((res.params.s - res.params.beta) / res.params.s)
    p = float(res.shift[0])
    rng = np.random.default_rng(5)
    pts = []
    while len(pts) < 200:
        z = rng.uniform(0, 1, size=2)
        if float(np.linalg.norm(z - gamma[0])) > s:
            pts.append(z)
    Z = np.asarray(pts)
    expected = c * (eval_batch(f, Z) - p) + p
    assert float(np.max(np.abs(eval_batch(g, Z) - expected))) <= 1e-12


def test_linearize_shift_invariance(unit_box):
    # adding a constant to the input mapping shifts the output by the same
    f = Scale(0.8, NormOf(2))
    gamma = np.array([[0.4, 0.6]])
    L = LinearMap(np.array([[0.2, 0.1]]))
    g1 = linearize_near(f, gamma, L, 0.5, unit_box).fun
    shift = np.array([0.37])
    g2 = linearize_near(add_const(f, shift), gamma, L, 0.5, unit_box).fun
    rng = np.random.default_rng(6)
    Z = rng.uniform(0, 1, size=(500, 2))
    assert float(np.max(np.abs(eval_batch(g2, Z) - eval_batch(g1, Z) - shift[0]))) <= 1e-12


def test_linearize_alpha_in_budget(unit_box):
    res = linearize_near(
        zero_map(2, 1), np.array([[0.5, 0.5]]), LinearMap(np.array([[0.25, 0.0]])), 0.3, unit_box
    )
    assert 0 < res.alpha < exact_mpf(0.3)
