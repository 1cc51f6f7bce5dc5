import numpy as np
import pytest

from hierstab.core import (CompactRegion, HybridArc, HybridSystem, HybridTimeDomain, SetOracle,
                           Termination, check_basic_conditions)
from hierstab.examples import REGISTRY, get_example
from hierstab.sets import box, whole_space


def test_time_domain_invariants():
    dom = HybridTimeDomain(((0, 0.0, 1.0), (1, 1.0, 1.0), (2, 1.0, 2.5)))
    assert dom.contains(1.0, 1) and dom.contains(2.0, 2) and not dom.contains(2.0, 1)
    assert dom.sup_t == 2.5 and dom.sup_j == 2
    with pytest.raises(ValueError):
        HybridTimeDomain(((0, 0.0, 1.0), (2, 1.0, 2.0)))
    with pytest.raises(ValueError):
        HybridTimeDomain(((0, 0.0, 1.0), (1, 1.5, 2.0)))
    with pytest.raises(ValueError):
        HybridTimeDomain(((0, 1.0, 0.5),))


def test_arc_domain_from_samples():
    t = np.array([0.0, 0.5, 1.0, 1.0, 1.5])
    j = np.array([0, 0, 0, 1, 1])
    arc = HybridArc(t, j, np.zeros((5, 1)), Termination.HORIZON_REACHED)
    assert arc.domain.intervals == ((0, 0.0, 1.0), (1, 1.0, 1.5))
    np.testing.assert_array_equal(arc.hybrid_time, t + j)
    np.testing.assert_array_equal(arc.jump_indices, [2])
    assert len(arc) == 5


def test_system_validation():
    with pytest.raises(ValueError):
        HybridSystem(2, whole_space(3), [lambda x: -x], box([0, 0], [0, 0]), [])
    sys = HybridSystem.from_ode(lambda x: -x, 2)
    np.testing.assert_array_equal(sys.flow(np.ones((2, 3))), -np.ones((2, 3)))


def test_region_grid_and_sampling():
    R = CompactRegion.ball([0.0, 0.0], 1.0)
    pts, shape = R.grid(points_per_dim=5)
    assert shape == (5, 5)
    inside = pts[np.all(np.isfinite(pts), axis=1)]
    assert len(inside) == 13 and np.all(np.linalg.norm(inside, axis=1) <= 1)
    S = R.sample(100, np.random.default_rng(0))
    assert S.shape == (100, 2) and R.contains(S).all()
    np.testing.assert_array_equal(S, R.sample(100, np.random.default_rng(0)))
    box_pts, shape = CompactRegion.box([-3, -3], [3, 3]).grid(resolution=0.1)
    assert shape == (61, 61)
    P = CompactRegion.product([CompactRegion.box([0], [1]), CompactRegion.ball([0.0], 2.0)])
    assert P.dim == 2 and P.contains([[0.5, -2.0]]).all() and not P.contains([[1.5, 0.0]]).any()
    with pytest.raises(ValueError):
        CompactRegion.box([0, 0], [1, np.inf])


def test_sanity_cascade_has_no_violations():
    sys = get_example("linear_cascade").system
    rep = check_basic_conditions(sys, CompactRegion.box([-2, -2], [2, 2]), n_samples=1000)
    assert rep.ok, rep.violations
    assert "outer semicontinuity" in " ".join(rep.not_verified)


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_every_example_passes_sanity(name):
    e = get_example(name)
    rep = check_basic_conditions(e.system, e.default_region, n_samples=300)
    assert rep.ok, rep.violations


def test_sanity_reports_planted_defect():
    liar = SetOracle(2, membership=lambda z: True, distance=lambda z: 1.0, name="liar")
    sys = HybridSystem(2, liar, [lambda x: -x], box([9, 9], [9, 9]), [lambda x: x])
    rep = check_basic_conditions(sys, CompactRegion.box([-1, -1], [1, 1]), n_samples=20)
    assert not rep.ok
    v = [v for v in rep.violations if v.kind == "consistency"]
    assert v and v[0].witness is not None and len(v[0].witness) == 2


def test_sanity_reports_empty_flow_list():
    sys = HybridSystem(2, whole_space(2), [], box([9, 9], [9, 9]), [])
    rep = check_basic_conditions(sys, CompactRegion.box([-1, -1], [1, 1]), n_samples=10)
    assert any(v.message == "flow selections empty" for v in rep.violations)


def test_sanity_reports_non_finite_selection():
    sys = HybridSystem.from_ode(lambda x: np.array([np.inf, 0.0]), 2)
    rep = check_basic_conditions(sys, CompactRegion.box([-1, -1], [1, 1]), n_samples=10)
    assert any(v.kind == "flow" for v in rep.violations)
    with pytest.raises(ValueError):
        check_basic_conditions(sys, CompactRegion.box([-1, -1], [1, 1]), n_samples=0)
