import numpy as np
import pytest

from lipforge import (
    AddConst,
    Domain,
    Linear,
    LinearMap,
    LipForgeError,
    NormOf,
    Scale,
    ScaleLadder,
    TargetSet,
    best_local_linear,
    dini_empty_certificate,
    dini_lower,
    dini_values,
    dq_error,
    dq_profile,
    identity,
    run_game,
    witness_bound_report,
    witness_dini_report,
)


@pytest.fixture(scope="module")
def small_transcript():
    domain = Domain.box([0.0, 0.0], [1.0, 1.0])
    target = TargetSet.grid([0.0, 0.0], [1.0, 1.0], 0.2)
    ops = (LinearMap(np.array([[0.5, 0.0]])), LinearMap(np.array([[-0.5, 0.0]])))
    return run_game(domain, target, ops, "stay", rounds=4, seed=0)


def test_dq_error_linear_is_zero():
    a = LinearMap(np.array([[0.7, -0.3], [0.1, 0.2]]))
    f = Linear(a)
    # float path: quotient rounding noise grows like eps / r
    assert dq_error(f, [0.2, -0.4], a, 0.5, budget=32, seed=1) <= 1e-12
    assert dq_error(f, [0.2, -0.4], a, 1e-3, budget=32, seed=1) <= 1e-11
    # far below float64 resolution the exact path takes over and is clean
    assert dq_error(f, [0.2, -0.4], a, 1e-13, budget=32, seed=1) <= 1e-12


def test_dq_error_abs_oracles():
    f = NormOf(1)
    zero = LinearMap(np.array([[0.0]]))
    ident = LinearMap(np.array([[1.0]]))
    assert dq_error(f, [0.0], zero, 0.25, budget=16, seed=0) == pytest.approx(1.0, abs=1e-12)
    assert dq_error(f, [0.0], ident, 0.25, budget=16, seed=0) == pytest.approx(2.0, abs=1e-12)


def test_dq_error_shift_invariance():
    f = NormOf(2)
    g = AddConst(f, np.array([0.375]))
    L = LinearMap(np.array([[0.3, 0.1]]))
    for r in (0.6, 0.05, 1e-13):
        a = dq_error(f, [0.1, 0.2], L, r, budget=16, seed=2)
        b = dq_error(g, [0.1, 0.2], L, r, budget=16, seed=2)
        assert abs(a - b) <= 1e-12


def test_dq_error_triangle_bound():
    rng = np.random.default_rng(3)
    for _ in range(20):
        f = Scale(float(rng.uniform(0, 1)), NormOf(2))
        L = LinearMap(rng.uniform(-1, 1, size=(1, 2)))
        x = rng.uniform(-0.5, 0.5, size=2)
        r = float(rng.uniform(1e-4, 1.0))
        val = dq_error(f, x, L, r, budget=16, seed=4)
        assert val <= f.lip_cert + L.op_norm + 1e-9


def test_dq_error_below_two_for_certified_unit_lipschitz():
    rng = np.random.default_rng(4)
    f = NormOf(2, sign=-1)
    for _ in range(10):
        L = LinearMap(rng.uniform(-0.6, 0.6, size=(1, 2)))
        if L.op_norm > 1:
            continue
        val = dq_error(f, rng.uniform(-0.2, 0.2, size=2), L, float(rng.uniform(0.01, 0.5)), budget=32, seed=5)
        assert val <= 2.0 + 1e-9


def test_dq_error_ball_containment(tmp_path):
    domain = Domain.box([0.0, 0.0], [1.0, 1.0])
    f = NormOf(2)
    L = LinearMap(np.array([[0.0, 0.0]]))
    with pytest.raises(LipForgeError, match="escapes"):
        dq_error(f, [0.05, 0.5], L, 0.2, budget=8, seed=0, domain=domain)


def test_dq_profile_linear_all_zero():
    a = LinearMap(np.array([[0.4, 0.2]]))
    ladder = ScaleLadder.geometric(0.5, 0.5, 10)
    prof = dq_profile(Linear(a), [0.0, 0.0], a, ladder)
    assert prof.score <= 1e-12
    assert all(v <= 1e-12 for v in prof.values)


def test_dq_profile_detects_wrong_operator():
    a = LinearMap(np.array([[0.4, 0.0]]))
    wrong = LinearMap(np.array([[0.1, 0.0]]))
    ladder = ScaleLadder.geometric(0.5, 0.5, 10)
    prof = dq_profile(Linear(a), [0.0, 0.0], wrong, ladder)
    # axis samples realize the full operator-norm gap at every scale
    assert prof.score >= 0.3 - 1e-12


def test_dini_lower_negative_norm():
    f = NormOf(1, sign=-1)
    ladder = ScaleLadder.geometric(0.25, 0.5, 12)
    assert dini_lower(f, [0.0], [1.0], ladder) == pytest.approx(-1.0, abs=1e-12)
    assert dini_lower(f, [0.0], [-1.0], ladder) == pytest.approx(-1.0, abs=1e-12)


def test_dini_lower_linear_matches_matrix():
    a = LinearMap(np.array([[0.7, -0.2]]))
    f = Linear(a)
    ladder = ScaleLadder.geometric(0.25, 0.5, 8)
    v = np.array([0.6, 0.8])
    assert dini_lower(f, [0.1, 0.1], v, ladder) == pytest.approx(float((a.float_matrix @ v)[0]), abs=1e-9)


def test_dini_requires_scalar_codomain():
    ladder = ScaleLadder.geometric(0.25, 0.5, 4)
    with pytest.raises(LipForgeError, match="scalar"):
        dini_values(identity(2), [0.1, 0.1], [1.0, 0.0], ladder)


def test_dini_certificate_fires_on_negative_cone():
    ladder = ScaleLadder.geometric(0.25, 0.5, 12)
    rep = dini_empty_certificate(NormOf(1, sign=-1), [0.0], [1.0], ladder)
    assert rep.fires
    rep2 = dini_empty_certificate(NormOf(1), [0.0], [1.0], ladder)
    assert not rep2.fires


def test_best_local_linear_abs_slopes():
    f = NormOf(1)
    slopes = [LinearMap(np.array([[c]])) for c in (-1.0, 0.0, 1.0)]
    best, err = best_local_linear(f, [0.0], 0.25, slopes, budget=16, seed=0)
    # brute-force oracle: sup over |u| <= q of ||u| - c u| / q = max(|1-c|, |1+c|)
    oracle = [max(abs(1 - c), abs(1 + c)) for c in (-1.0, 0.0, 1.0)]
    assert float(best.float_matrix[0, 0]) == 0.0
    assert err == pytest.approx(1.0, abs=1e-12)
    assert min(oracle) == 1.0


def test_best_local_linear_exact_and_singleton():
    a = LinearMap(np.array([[0.3, 0.4]]))
    f = Linear(a)
    best, err = best_local_linear(f, [0.1, 0.1], 0.1, [a, a.scaled(2.0)], budget=8, seed=0)
    assert best is a and err <= 1e-12
    only, err2 = best_local_linear(f, [0.1, 0.1], 0.1, [a.scaled(2.0)], budget=8, seed=0)
    assert only.op_norm == pytest.approx(2 * a.op_norm)


def test_best_local_linear_empty():
    with pytest.raises(LipForgeError, match="candidate"):
        best_local_linear(NormOf(1), [0.0], 0.1, [], budget=8, seed=0)


def test_ladder_validation():
    with pytest.raises(LipForgeError, match="decreasing"):
        ScaleLadder((0.5, 0.5))
    with pytest.raises(LipForgeError, match="positive"):
        ScaleLadder((0.5, 0.0))
    with pytest.raises(LipForgeError, match="resolution"):
        ScaleLadder.geometric(1e-10, 0.5, 20)
    lad = ScaleLadder.geometric(0.5, 0.5, 20)
    assert len(lad.radii) == 20


def test_witness_bound_small_game(small_transcript):
    report = witness_bound_report(small_transcript, per_round=2, budget=8, seed=1)
    assert report, "expected witnesses"
    for pr in report:
        assert pr.value <= pr.bound + 1e-9


def test_dq_profile_at_witness_scales(small_transcript):
    # per-scale value at each construction scale alpha_k stays below 4/k
    from lipforge import witnesses
    from lipforge.probe import witness_ladder

    tr = small_transcript
    ws = [w for w in witnesses(tr, per_round=1) if w.round_k >= 2][:5]
    assert ws
    for w in ws:
        ladder = witness_ladder(tr, w)
        prof = dq_profile(tr.final_fun, w.center, w.operator, ladder)
        idx = None
        for i, scale in enumerate(prof.scales):
            if scale == w.alpha:
                idx = i
        assert idx is not None
        assert prof.values[idx] <= 4.0 / w.round_k + 1e-9


def test_witness_dini_small_game(small_transcript):
    dini = witness_dini_report(small_transcript, np.array([1.0, 0.0]), min_round=2)
    assert dini
    fired = sum(1 for r in dini if r.report.fires)
    assert fired / len(dini) >= 0.9
