import math

import numpy as np
import pytest

from lipforge import (
    Domain,
    LipForgeError,
    NormKind,
    TargetSet,
    greedy_net,
    nested_nets,
    restrict,
    separation,
)
from lipforge.space import norm_batch


@pytest.fixture
def unit_box():
    return Domain.box([0.0, 0.0], [1.0, 1.0])


def test_separation_basics():
    assert separation(np.array([[0.0, 0.0], [1.0, 0.0]])) == 1.0
    assert separation(np.array([[0.0, 0.0], [0.3, 0.4]])) == pytest.approx(0.5)
    assert separation(np.array([[0.2, 0.7]])) == math.inf
    assert separation(np.empty((0, 2))) == math.inf


def test_restrict_levels(unit_box):
    target = TargetSet.grid([0.0, 0.0], [1.0, 1.0], 0.1)
    lvl1 = restrict(target, unit_box, 1)
    # margin >= 0.5 forces all coordinates to 0.5 exactly
    assert len(lvl1) == 1 and np.allclose(lvl1[0], [0.5, 0.5])
    lvl2 = restrict(target, unit_box, 2)
    assert all(float(unit_box.dist_to_boundary(p)) >= 0.25 for p in lvl2)


def test_restrict_empty_target(unit_box):
    target = TargetSet.from_points(np.empty((0, 2)))
    assert len(restrict(target, unit_box, 3)) == 0


def test_greedy_net_maximal():
    pts = np.stack(np.meshgrid(np.arange(0.1, 1.0, 0.1), np.arange(0.1, 1.0, 0.1), indexing="ij"), axis=-1).reshape(-1, 2)
    net = greedy_net(pts, 0.25)
    assert separation(net) >= 0.25
    for p in pts:
        assert float(np.min(norm_batch(net - p, NormKind.EUCLIDEAN))) < 0.25 or any(
            np.array_equal(p, q) for q in net
        )


def test_greedy_net_seed_preserved_and_idempotent():
    pts = np.array([[0.1 * i, 0.1 * j] for i in range(1, 10) for j in range(1, 10)])
    first = greedy_net(pts, 0.3)
    second = greedy_net(pts, 0.15, seed_set=first)
    for p in first:
        assert any(np.array_equal(p, q) for q in second)
    again = greedy_net(second, 0.15, seed_set=None)
    assert len(again) == len(second)


def test_greedy_net_single_point():
    net = greedy_net(np.array([[0.4, 0.4]]), 0.5)
    assert np.array_equal(net, np.array([[0.4, 0.4]]))


def test_greedy_net_bad_seed():
    with pytest.raises(LipForgeError, match="separation"):
        greedy_net(np.array([[0.5, 0.5]]), 0.5, seed_set=np.array([[0.1, 0.1], [0.2, 0.1]]))


def test_nested_nets_invariants(unit_box):
    target = TargetSet.grid([0.0, 0.0], [1.0, 1.0], 0.05)
    family = nested_nets(target, unit_box, 6)
    family.validate(unit_box, target)
    for k in range(1, 7):
        lvl = family.level(k)
        if len(lvl) >= 2:
            assert separation(lvl) >= 2.0**-k


def test_nested_nets_singleton(unit_box):
    target = TargetSet.from_points([[0.5, 0.5]])
    family = nested_nets(target, unit_box, 3)
    for k in range(1, 4):
        assert len(family.level(k)) == 1
        assert np.allclose(family.level(k)[0], [0.5, 0.5])


def test_nested_nets_empty(unit_box):
    family = nested_nets(TargetSet.from_points(np.empty((0, 2))), unit_box, 4)
    assert all(len(family.level(k)) == 0 for k in range(1, 5))


def test_nested_nets_density_surrogate(unit_box):
    target = TargetSet.grid([0.0, 0.0], [1.0, 1.0], 0.05)
    k_max = 6
    family = nested_nets(target, unit_box, k_max)
    top = family.level(k_max)
    margin = 2.0**-k_max
    for p in target.points:
        if float(unit_box.dist_to_boundary(p)) >= margin:
            assert float(np.min(norm_batch(top - p, NormKind.EUCLIDEAN))) < margin


def test_net_csv_format(unit_box):
    target = TargetSet.from_points([[0.5, 0.5], [0.25, 0.25]])
    family = nested_nets(target, unit_box, 2)
    text = family.to_csv()
    lines = text.strip().splitlines()
    assert lines[0] == "k,x1,x2"
    assert all(line.count(",") == 2 for line in lines[1:])


def test_grid_target_is_open_interior():
    target = TargetSet.grid([0.0, 0.0], [1.0, 1.0], 0.05)
    assert len(target) == 19 * 19
    assert float(np.min(target.points)) > 0.0
    assert float(np.max(target.points)) < 1.0
