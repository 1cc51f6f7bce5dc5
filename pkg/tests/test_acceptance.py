"""Acceptance criteria, one test each; every test prints a PASS/FAIL line with its runtime."""

import math
import time

import numpy as np
import pytest

from hierstab.core import Termination
from hierstab.examples import get_example
from hierstab.hierarchy import arc_is_prefix, check_hierarchy, estimate_basin, restrict
from hierstab.io import write_json
from hierstab.metrics import SamplePlan, StabilityQuery
from hierstab.sets import whole_space
from hierstab.simulator import SimConfig, simulate, simulate_batch


@pytest.fixture
def verdict(capsys):
    """Print one PASS/FAIL line per criterion, then fail the test on FAIL."""
    def emit(n, name, checks, elapsed, limit):
        checks = dict(checks, runtime=elapsed < limit)
        ok = all(checks.values())
        failed = [k for k, v in checks.items() if not v]
        with capsys.disabled():
            print(f"\ncriterion {n} ({name}): {'PASS' if ok else 'FAIL'} "
                  f"[{elapsed:.2f} s / {limit:g} s]" + (f" failed: {', '.join(failed)}" if failed else ""))
        assert ok, failed
    return emit


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def criterion4():
    e = get_example("linear_cascade")
    q = StabilityQuery(plan=SamplePlan(grid=21, n_random=200, seed=0), sim=SimConfig(t_max=20, step=0.01))
    return check_hierarchy(e.system, e.default_triple, e.default_region, q)


def criterion7():
    e = get_example("peaking_cascade")
    return estimate_basin(e.system, e.default_triple.M_o, e.default_triple.M_e, e.default_region,
                          SimConfig(t_max=20, step=0.01), resolution=0.1)


def test_1_simulation_accuracy(verdict):
    sys = get_example("linear_cascade").system
    (arc,), dt = timed(lambda: simulate(sys, [1.0, 0.0], SimConfig(t_max=10.0, step=1e-3)))
    err = max(np.max(np.abs(arc.x[:, 1] - arc.t * np.exp(-arc.t))), np.max(np.abs(arc.x[:, 0] - np.exp(-arc.t))))
    verdict(1, "simulation accuracy", {"max_error<=1e-6": err <= 1e-6, "reaches_t=10": arc.t[-1] == 10.0},
            dt, 1.0)


def test_2_integrator_order(verdict):
    sys = get_example("linear_cascade").system
    exact = np.array([math.exp(-1.0), math.exp(-1.0)])

    def ratio():
        errs = [np.linalg.norm(simulate(sys, [1.0, 0.0], SimConfig(t_max=1.0, step=h))[0].x[-1] - exact)
                for h in (1e-2, 5e-3)]
        return errs[0] / errs[1]

    r, dt = timed(ratio)
    verdict(2, "integrator order", {"ratio>=12": r >= 12}, dt, 1.0)


def test_3_hybrid_event_accuracy(verdict):
    sys = get_example("bouncing_ball").system
    (arc,), dt = timed(lambda: simulate(sys, [1.0, 0.0], SimConfig(t_max=10.0, event_tol=1e-9)))
    k = arc.jump_indices[0]
    verdict(3, "hybrid event accuracy", {
        "first_impact": abs(arc.t[k] - math.sqrt(2)) <= 1e-6,
        "post_jump_velocity": arc.x[k + 1, 1] == -0.5 * arc.x[k, 1],
        "zeno_before_6s": arc.termination == Termination.ZENO_SUSPECTED and arc.t[-1] < 6.0,
    }, dt, 1.0)


def test_4_hypotheses_on_linear_cascade(verdict):
    rep, dt = timed(criterion4)
    iv = rep.item_verdicts
    verdict(4, "hierarchy on linear cascade", {
        "items_supported": all(v == "supported" for v in iv.values()),
        "conclusion_supported": rep.conclusion_verdict == "supported",
        "kl_envelope": rep.kl is not None and rep.kl.envelope_violation <= 1e-9,
    }, dt, 30.0)


def test_5_falsification(verdict):
    e = get_example("unstable_cascade")
    rep, dt = timed(lambda: check_hierarchy(e.system, e.default_triple, e.default_region, StabilityQuery()))
    entry = next(en for en in rep.item2[0].entries if en.eps == 1.0)
    M_i = e.default_triple.M_i
    leaves = False
    if entry.witness is not None:
        X = np.array(entry.witness["arc"]["x"])
        leaves = bool(np.max(M_i.dist(X.T)) > 1.0)
    verdict(5, "falsification", {"item2_falsified": rep.item_verdicts["item2"] == "falsified",
                                 "witness_leaves_eps=1_tube": leaves,
                                 "conclusion_skipped": rep.conclusion_verdict == "skipped"}, dt, 10.0)


def test_6_restriction_soundness(verdict):
    e = get_example("linear_cascade")
    origin = e.default_triple.M_o
    X0 = np.random.default_rng(0).uniform(-2, 2, size=(50, 2))
    cfg = SimConfig(t_max=10.0)

    def run():
        full = simulate_batch(e.system, X0, cfg)
        bars = {m: simulate_batch(restrict(e.system, whole_space(2), origin, m), X0, cfg) for m in (1.0, 2.0, 10.0)}
        return full, bars

    (full, bars), dt = timed(run)
    identical = all(
        len(a.arcs) == len(b.arcs) == 1 and np.array_equal(a.arcs[0].x, b.arcs[0].x)
        and np.array_equal(a.arcs[0].t, b.arcs[0].t) and np.array_equal(a.arcs[0].j, b.arcs[0].j)
        for a, b in zip(bars[10.0], full))
    monotone = True
    for small, large in ((1.0, 2.0), (2.0, 10.0), (1.0, 10.0)):
        for a, b in zip(bars[small], bars[large]):
            monotone &= all(arc_is_prefix(arc, b.arcs) for arc in a.arcs)
    started = sum(bool(it.arcs) for it in bars[1.0])
    verdict(6, "restriction soundness", {"bitwise_identical_M_bar=10": identical, "monotone_in_M_bar": monotone,
                                         "some_x0_in_smallest_tube": started > 0}, dt, 10.0)


def test_7_basin_characterization(verdict):
    rep, dt = timed(criterion7)
    axis = rep.points[:, 0] == 0.0
    cls = np.array(rep.classes)
    verdict(7, "basin characterization", {
        "interior_consistency>=0.98": rep.interior_consistency is not None and rep.interior_consistency >= 0.98,
        "axis_all_converging": axis.sum() == 61 and bool(np.all(cls[axis] == "converging")),
    }, dt, 60.0)


def test_8_hybrid_hierarchy(verdict):
    e = get_example("hybrid_cascade")
    X0 = np.array([[1.0, 0.0, 0.0], [-1.5, 2.0, 0.5], [0.3, -1.0, 1.0]])

    def run():
        rep = check_hierarchy(e.system, e.default_triple, e.default_region,
                              StabilityQuery(plan=SamplePlan(grid=7, n_random=100, seed=0)))
        return rep, simulate_batch(e.system, X0, SimConfig(t_max=10.0))

    (rep, items), dt = timed(run)
    recursion = True
    for x0, item in zip(X0, items):
        arc = item.arcs[0]
        recursion &= bool(arc.j[-1] >= 9)
        for j in range(int(arc.j[-1]) + 1):
            recursion &= bool(np.all(np.abs(arc.x[arc.j == j, 0] - 2.0 ** -j * x0[0]) <= 1e-9))
    verdict(8, "hybrid hierarchy", {"check_hierarchy_supported": rep.verdict == "supported",
                                    "x1_halves_per_jump": recursion}, dt, 30.0)


def test_9_determinism(verdict, tmp_path):
    def run():
        blobs = []
        for k in range(2):
            for name, fn in (("hierarchy", criterion4), ("basin", criterion7)):
                path = tmp_path / f"{name}_{k}.json"
                write_json(fn().to_dict(), path)
                blobs.append(path.read_bytes())
        return blobs

    blobs, dt = timed(run)
    verdict(9, "determinism", {"hierarchy_identical": blobs[0] == blobs[2],
                               "basin_identical": blobs[1] == blobs[3]}, dt, 120.0)
