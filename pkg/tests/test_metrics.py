import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hierstab.core import CompactRegion, HybridArc, HybridSystem, Termination
from hierstab.examples import get_example
from hierstab.metrics import (SamplePlan, StabilityQuery, check_forward_invariance,
                              check_uniform_boundedness, classify_arc, estimate_attractivity,
                              estimate_stability, estimate_uniform_attractivity, fit_kl_bound)
from hierstab.sets import point, whole_space
from hierstab.simulator import SimConfig, simulate, simulate_batch

DECAY = HybridSystem.from_ode(lambda x: -x, 1, name="decay", vectorized=True)
GROWTH = HybridSystem.from_ode(lambda x: x, 1, name="growth", vectorized=True)
ORIGIN1 = point([0.0])
SMALL = SamplePlan(grid=11, n_random=40, seed=3)


def test_stability_of_decay_finds_large_delta():
    q = StabilityQuery(target=ORIGIN1, eps_grid=(1.0,), delta_max=10.0)
    rep = estimate_stability(DECAY, q)
    assert rep.verdict == "supported"
    assert rep.entries[0].delta >= 0.9
    assert rep.samples_used > 0 and rep.to_dict()["sim_config"]["t_max"] == q.sim.t_max


def test_stability_of_growth_is_falsified_with_witness():
    q = StabilityQuery(target=ORIGIN1, eps_grid=(1.0,), delta_max=10.0, plan=SMALL)
    rep = estimate_stability(GROWTH, q)
    entry = rep.entries[0]
    assert rep.verdict == "falsified" and entry.delta is None
    assert entry.witness["x0"][0] != 0.0
    assert max(abs(v[0]) for v in entry.witness["arc"]["x"]) > 1.0
    assert rep.witnesses


def test_whole_space_target_is_trivially_stable():
    q = StabilityQuery(target=whole_space(1), eps_grid=(0.1, 0.5, 1.0), delta_max=10.0, plan=SMALL)
    rep = estimate_stability(DECAY, q)
    assert [e.delta for e in rep.entries] == [0.1, 0.5, 1.0]


def test_stability_dimension_mismatch():
    with pytest.raises(ValueError):
        estimate_stability(DECAY, StabilityQuery(target=point([0.0, 0.0])))


def test_query_validation():
    for bad in ({"eps_grid": ()}, {"eps_grid": (1.0, 0.5)}, {"eps_grid": (-1.0,)}, {"delta_max": 0.0}):
        with pytest.raises(ValueError):
            StabilityQuery(**bad)


def test_stability_is_monotone_in_eps():
    # a strong coupling makes the norm peak, so delta is a proper fraction of eps
    e = get_example("linear_cascade", {"k": 3.0})
    q = StabilityQuery(target=e.default_triple.M_o, eps_grid=(0.05, 0.2, 0.8), plan=SMALL,
                       region=e.default_region, sim=SimConfig(t_max=8, step=0.02))
    deltas = [r.delta for r in estimate_stability(e.system, q).entries]
    assert all(d is not None for d in deltas)
    assert deltas == sorted(deltas)
    # linear dynamics: delta / eps is scale free up to the bisection resolution
    ratios = np.array(deltas) / np.array(q.eps_grid)
    assert np.all(ratios < 1) and np.ptp(ratios) < 0.05


def test_attractivity_of_axis_in_cascade():
    e = get_example("linear_cascade")
    q = StabilityQuery(target=e.default_triple.M_i, region=e.default_region, plan=SMALL)
    rep = estimate_attractivity(e.system, q, global_flag=True)
    assert rep.verdict == "supported"
    assert rep.details["classes"]["converged"] == rep.samples_used


def test_initial_condition_in_target_converges_immediately():
    e = get_example("linear_cascade")
    (arc,) = simulate(e.system, [0.0, 3.0], SimConfig(t_max=20, step=0.01))
    assert np.all(arc.distances(e.default_triple.M_i) == 0.0)
    assert classify_arc(arc, e.default_triple.M_i) == "converged"


def test_attractivity_of_growth_is_falsified():
    q = StabilityQuery(target=ORIGIN1, delta_max=10.0, plan=SMALL)
    rep = estimate_attractivity(GROWTH, q, global_flag=True)
    assert rep.verdict == "falsified" and rep.entries[0].witness["x0"] != [0.0]


def test_local_attractivity_samples_near_target():
    q = StabilityQuery(target=ORIGIN1, delta_max=10.0, plan=SMALL, local_radius=0.5)
    rep = estimate_attractivity(DECAY, q, global_flag=False)
    assert rep.property == "attractivity" and rep.entries[0].delta == 0.5
    assert rep.verdict == "supported"


def synthetic(d, tau=None, term=Termination.HORIZON_REACHED):
    d = np.asarray(d, dtype=float)
    t = np.linspace(0, 10, d.size) if tau is None else tau
    return HybridArc(t, np.zeros(d.size, dtype=np.int64), d[:, None], term)


@pytest.mark.parametrize("d,term,expected", [
    (np.exp(-np.linspace(0, 20, 101)), Termination.HORIZON_REACHED, "converged"),
    (np.exp(-np.linspace(0, 1, 101)), Termination.HORIZON_REACHED, "undecided"),
    (1 + 0.5 * np.sin(np.linspace(0, 40, 101)), Termination.HORIZON_REACHED, "nonconverging"),
    (np.linspace(1, 5, 101), Termination.ESCAPE_DETECTED, "escaped"),
    (np.linspace(1, 0.5, 101), Termination.LEFT_C_AND_D, "finite"),
])
def test_arc_classification(d, term, expected):
    assert classify_arc(synthetic(d, term=term), ORIGIN1) == expected


def test_uniform_attractivity_decay():
    rep = estimate_uniform_attractivity(DECAY, ORIGIN1, CompactRegion.box([-1], [1]), math.exp(-3),
                                        SimConfig(t_max=10, step=0.01), SMALL)
    assert rep.verdict == "supported" and abs(rep.T - 3.0) <= 0.1


def test_uniform_attractivity_from_target_is_zero():
    rep = estimate_uniform_attractivity(DECAY, ORIGIN1, CompactRegion.box([0], [0]), 0.1,
                                        SimConfig(t_max=5, step=0.01), SMALL)
    assert rep.T == 0.0


def test_uniform_attractivity_requires_compact_target():
    with pytest.raises(ValueError):
        estimate_uniform_attractivity(DECAY, whole_space(1), CompactRegion.box([0], [1]), 0.1,
                                      SimConfig(t_max=1), SMALL)


def bouncing_ball_T(eps, h0=1.0, restitution=0.5):
    """Hybrid time t + j of the first sample after which |(h, v)| <= eps for good.

    At impact the state is (0, -s) with s the impact speed, the largest distance
    of the surrounding flights; after impact k the speed is s0 * restitution^k.
    """
    s0 = math.sqrt(2 * h0)
    t = s0  # first impact, falling from rest
    k = 0
    while s0 * restitution ** k > eps:
        # flight after impact k: up and down at speed s0 * restitution^(k+1)
        if s0 * restitution ** (k + 1) <= eps:
            return t + (k + 1)
        t += 2 * s0 * restitution ** (k + 1)
        k += 1
    return 0.0


def test_uniform_attractivity_bouncing_ball_matches_energy_recursion():
    e = get_example("bouncing_ball")
    origin = e.sets["origin"]
    rep = estimate_uniform_attractivity(e.system, origin, CompactRegion.box([1, 0], [1, 0]), 0.05,
                                        SimConfig(t_max=10), SMALL)
    assert rep.verdict == "supported"
    expected = bouncing_ball_T(0.05)
    assert expected == pytest.approx(2.875 * math.sqrt(2) + 5)
    assert abs(rep.T - expected) < 1e-6
    # reported before the run is cut short as Zeno
    (arc,) = simulate(e.system, [1.0, 0.0], SimConfig(t_max=10))
    assert arc.termination == Termination.ZENO_SUSPECTED and rep.T < arc.hybrid_time[-1]


def test_invariance_of_axis_in_cascade():
    e = get_example("linear_cascade")
    rep = check_forward_invariance(e.system, e.default_triple.M_i, e.default_region,
                                   SimConfig(t_max=5, step=0.01), SMALL)
    assert rep.verdict == "supported" and rep.max_excursion <= 1e-9
    rep = check_forward_invariance(e.system, whole_space(2), e.default_region, SimConfig(t_max=2, step=0.01), SMALL)
    assert rep.verdict == "supported" and rep.max_excursion == 0.0


def test_invariance_violated_off_equilibrium():
    t_max = 3.0
    rep = check_forward_invariance(DECAY, point([1.0]), CompactRegion.box([-2], [2]),
                                   SimConfig(t_max=t_max, step=0.01), SMALL)
    assert rep.verdict == "falsified" and rep.samples_used == 1
    assert rep.max_excursion == pytest.approx(1 - math.exp(-t_max), abs=1e-9)
    assert rep.witnesses[0]["x0"] == [1.0]


def test_invariance_without_samples_is_inconclusive():
    rep = check_forward_invariance(DECAY, point([5.0]), CompactRegion.box([-1], [1]), SimConfig(t_max=1))
    assert rep.verdict == "inconclusive" and rep.samples_used == 0


def test_boundedness_of_cascade():
    sys = get_example("linear_cascade").system
    rep = check_uniform_boundedness(sys, CompactRegion.box([-1, -1], [1, 1]), SimConfig(t_max=20, step=0.01), SMALL)
    # the Euclidean norm is nonincreasing, so the sup is attained at the corners of K
    assert rep.delta == pytest.approx(1.1 * math.sqrt(2) + 1e-9, abs=1e-12)
    assert abs(rep.delta - 1.556) < 1e-3


def test_boundedness_at_equilibrium():
    sys = get_example("linear_cascade").system
    rep = check_uniform_boundedness(sys, CompactRegion.box([0, 0], [0, 0]), SimConfig(t_max=1), SMALL)
    assert rep.delta == pytest.approx(1e-9)


def peaking_blowup_time(x1, x2, k=1.0):
    """Finite escape time from the substitution w = 1/x2, or inf inside the basin."""
    a = k * x1 * x2
    if a <= 2:
        return math.inf
    return 0.5 * math.log(a / (a - 2))


def test_boundedness_fails_on_blowup():
    e = get_example("peaking_cascade")
    K = CompactRegion.box([2, 2], [3, 3])
    assert math.isfinite(peaking_blowup_time(2.0, 2.0))
    rep = check_uniform_boundedness(e.system, K, SimConfig(t_max=5, step=0.01), SMALL)
    assert rep.delta is None and rep.verdict == "falsified"
    # fine-step confirmation of the escape for the witness
    x0 = rep.witness["x0"]
    (arc,) = simulate(e.system, x0, SimConfig(t_max=5, step=1e-5, escape_radius=1e8, record_every=1000))
    assert arc.termination == Termination.ESCAPE_DETECTED
    assert abs(arc.t[-1] - peaking_blowup_time(*x0)) < 1e-3


def test_kl_fit_on_exponential_decay():
    arcs = [a for it in simulate_batch(DECAY, [[0.5], [1.0], [2.0]], SimConfig(t_max=10)) for a in it.arcs]
    fit = fit_kl_bound(arcs, ORIGIN1)
    assert fit.c == pytest.approx(1.0, abs=1e-6)
    assert fit.lam == pytest.approx(1.0, abs=1e-6)
    assert fit.residual < 1e-3 and fit.n_arcs == 3 and not fit.degenerate


def test_kl_fit_degenerate_and_invalid():
    zero = synthetic(np.zeros(10))
    fit = fit_kl_bound([zero], ORIGIN1)
    assert fit.degenerate and fit.c == 1.0
    leaves = synthetic(np.r_[0.0, np.ones(9)])
    with pytest.raises(ValueError):
        fit_kl_bound([leaves], ORIGIN1)


def test_kl_envelope_on_bouncing_ball():
    e = get_example("bouncing_ball")
    X0 = [[1.0, 0.0], [0.5, 0.5], [2.0, -1.0]]
    arcs = [a for it in simulate_batch(e.system, X0, SimConfig(t_max=10)) for a in it.arcs]
    fit = fit_kl_bound(arcs, e.sets["origin"])
    assert fit.lam > 0 and fit.envelope_violation <= 1e-9
    for arc in arcs:
        d = arc.distances(e.sets["origin"])
        assert np.all(fit.bound(d[0], arc.hybrid_time) >= d - 1e-9)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=1, max_size=5))
def test_kl_fit_is_an_upper_envelope(points):
    sys = get_example("linear_cascade").system
    X0 = [p for p in points if p != (0.0, 0.0)]
    if not X0:
        return
    arcs = [a for it in simulate_batch(sys, X0, SimConfig(t_max=5, step=0.05)) for a in it.arcs]
    fit = fit_kl_bound(arcs, point([0.0, 0.0]))
    assert fit.lam > 0
    for arc in arcs:
        d = arc.distances(point([0.0, 0.0]))
        assert np.all(fit.bound(d[0], arc.hybrid_time) >= d - 1e-9)


@settings(max_examples=20, deadline=None)
@given(st.floats(-5, 5))
def test_decay_distance_is_nonincreasing(x0):
    (arc,) = simulate(DECAY, [x0], SimConfig(t_max=5, step=0.01))
    assert np.all(np.diff(arc.distances(ORIGIN1)) <= 0)


def test_estimators_are_deterministic():
    e = get_example("linear_cascade")
    q = StabilityQuery(target=e.default_triple.M_o, region=e.default_region, plan=SMALL,
                       sim=SimConfig(t_max=5, step=0.02))
    assert estimate_stability(e.system, q).to_dict() == estimate_stability(e.system, q).to_dict()
    assert estimate_attractivity(e.system, q).to_dict() == estimate_attractivity(e.system, q).to_dict()


def test_relative_to_whole_space_matches_unrestricted():
    e = get_example("linear_cascade")
    q = StabilityQuery(target=e.default_triple.M_o, region=e.default_region, plan=SMALL,
                       sim=SimConfig(t_max=5, step=0.02))
    a = estimate_stability(e.system, q).to_dict()
    b = estimate_stability(e.system, q.replace(relative_to=whole_space(2))).to_dict()
    assert b.pop("relative_to") == "R^n" and a.pop("relative_to") is None
    assert a == b


def test_relative_samples_stay_in_relative_set():
    e = get_example("linear_cascade")
    q = StabilityQuery(target=e.default_triple.M_o, relative_to=e.default_triple.M_i,
                       region=e.default_region, plan=SMALL, sim=SimConfig(t_max=20, step=0.02))
    rep = estimate_attractivity(e.system, q)
    assert rep.verdict == "supported" and rep.samples_used > 0
    from hierstab.metrics import initial_conditions
    Z = initial_conditions(e.system, q, 0.5)
    assert np.all(Z[:, 0] == 0.0) and np.all(np.linalg.norm(Z, axis=1) < 0.5)
