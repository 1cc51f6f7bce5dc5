"""Sampling-based estimators and falsifiers for set stability properties.

Every "supported" verdict here is evidence from finitely many simulated
solutions over a finite horizon, never a proof. Reports carry the sample
count, seed and simulation settings so each claim can be replayed.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize_scalar

from .core import CompactRegion, HybridArc, HybridSystem, Termination
from .sets import SetOracle, box
from .simulator import SimConfig, simulate_batch

SUPPORTED = "supported"
FALSIFIED = "falsified"
INCONCLUSIVE = "inconclusive"
SKIPPED = "skipped"

EPS_CONV = 1e-4
TAU_INV = 1e-6

_FINITE_ENDS = (Termination.LEFT_C_AND_D, Termination.BRANCH_BUDGET)


def combine(*verdicts: str) -> str:
    """Falsified dominates, then inconclusive."""
    if FALSIFIED in verdicts:
        return FALSIFIED
    if INCONCLUSIVE in verdicts or SKIPPED in verdicts:
        return INCONCLUSIVE
    return SUPPORTED


@dataclass(frozen=True)
class SamplePlan:
    grid: int = 21
    n_random: int = 200
    seed: int = 0

    def base_points(self, region: CompactRegion) -> np.ndarray:
        pts, _ = region.grid(points_per_dim=self.grid)
        pts = pts[np.all(np.isfinite(pts), axis=1)]
        rnd = region.sample(self.n_random, np.random.default_rng(self.seed))
        return np.concatenate([pts, rnd])


@dataclass(frozen=True)
class StabilityQuery:
    target: Optional[SetOracle] = None
    relative_to: Optional[SetOracle] = None
    eps_grid: Tuple[float, ...] = (0.1, 0.5, 1.0)
    delta_max: Optional[float] = None
    plan: SamplePlan = SamplePlan()
    sim: SimConfig = SimConfig(t_max=20.0, step=0.01)
    region: Optional[CompactRegion] = None
    eps_conv: float = EPS_CONV
    local_radius: Optional[float] = None
    max_halvings: int = 10
    bisect_iters: int = 4

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_grid)
        if not eps or any(e <= 0 for e in eps) or list(eps) != sorted(eps):
            raise ValueError("eps_grid must be nonempty, positive and ascending")
        object.__setattr__(self, "eps_grid", eps)
        if self.delta_max is not None and not self.delta_max > 0:
            raise ValueError("delta_max must be positive")

    def replace(self, **changes) -> "StabilityQuery":
        return dataclasses.replace(self, **changes)

    def sample_region(self, dim: int) -> CompactRegion:
        if self.region is not None:
            return self.region
        d = self.delta_max if self.delta_max is not None else 10.0
        return CompactRegion.box(-d * np.ones(dim), d * np.ones(dim))

    def ball_radius(self, dim: int) -> float:
        """Delta of the stability definition; by default the whole sample region."""
        if self.delta_max is not None:
            return self.delta_max
        r = self.sample_region(dim)
        corner = np.maximum(np.abs(r.lo), np.abs(r.hi))
        return float(np.linalg.norm(corner)) * (1 + 1e-9) + 1e-12


@dataclass
class Entry:
    eps: float
    delta: Optional[float]
    verdict: str
    witness: Optional[dict] = None
    resolution: Optional[float] = None
    samples: int = 0

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "delta": self.delta,
            "verdict": self.verdict,
            "witness_x0": None if self.witness is None else self.witness["x0"],
            "witness": self.witness,
            "resolution": self.resolution,
            "samples": self.samples,
        }


@dataclass
class StabilityReport:
    property: str
    target: str
    relative_to: Optional[str]
    entries: List[Entry]
    verdict: str
    samples_used: int
    seed: int
    sim: SimConfig
    details: dict = field(default_factory=dict)

    @property
    def witnesses(self) -> List[dict]:
        return [e.witness for e in self.entries if e.witness is not None]

    def to_dict(self) -> dict:
        return {
            "property": self.property,
            "target": self.target,
            "relative_to": self.relative_to,
            "entries": [e.to_dict() for e in self.entries],
            "verdict": self.verdict,
            "samples_used": self.samples_used,
            "seed": self.seed,
            "sim_config": self.sim.to_dict(),
            "details": self.details,
        }


@dataclass
class KLFit:
    c: float
    lam: float
    residual: float
    n_arcs: int
    degenerate: bool = False
    envelope_violation: float = 0.0

    def bound(self, s0, r):
        return self.c * np.asarray(s0) * np.exp(-self.lam * np.asarray(r))

    def to_dict(self) -> dict:
        return {"c": self.c, "lambda": self.lam, "residual": self.residual,
                "n_arcs": self.n_arcs, "degenerate": self.degenerate,
                "envelope_violation": self.envelope_violation}


# -- sampling ---------------------------------------------------------------

def _valid_ic(sys: HybridSystem, Z: np.ndarray, tol: float) -> np.ndarray:
    return sys.flow_set.contains(Z.T, tol) | sys.jump_set.contains(Z.T, tol)


def _onto(S: SetOracle, Z: np.ndarray, tol: float) -> np.ndarray:
    """Points of ``Z`` moved onto ``S`` (by projection when available) and filtered."""
    if Z.size == 0:
        return Z
    if S.project is not None:
        Z = S.projection(Z.T).T
    return Z[S.contains(Z.T, tol)]


def _unique(Z: np.ndarray) -> np.ndarray:
    if Z.shape[0] == 0:
        return Z
    return np.unique(Z, axis=0)


def initial_conditions(sys: HybridSystem, q: StabilityQuery, delta: Optional[float] = None,
                       target: Optional[SetOracle] = None) -> np.ndarray:
    """Deterministic initial conditions for ``q``.

    With ``delta`` the base points are pulled radially towards the target
    until they lie in its open delta-neighbourhood; without it, the base
    points themselves are used (global sampling).
    """
    tol = q.sim.set_tol
    target = target if target is not None else q.target
    region = q.sample_region(sys.dim)
    Z = q.plan.base_points(region)
    if q.relative_to is not None:
        Z = _onto(q.relative_to, Z, tol)
    if delta is not None:
        if target.project is not None and Z.size:
            P = target.projection(Z.T).T
            d = np.linalg.norm(Z - P, axis=1)
            shrink = delta * (1.0 - 1e-9)
            scale = np.where(d >= shrink, shrink / np.where(d > 0, d, 1.0), 1.0)
            Z = P + scale[:, None] * (Z - P)
        Z = Z[target.dist(Z.T) < delta] if Z.size else Z
        if q.relative_to is not None:
            Z = Z[q.relative_to.contains(Z.T, tol)] if Z.size else Z
    if Z.size:
        Z = Z[np.linalg.norm(Z, axis=1) < q.ball_radius(sys.dim)]
        Z = Z[_valid_ic(sys, Z, tol)]
    return _unique(Z)


def _excerpt(arc: HybridArc, upto: Optional[int] = None, limit: int = 50) -> dict:
    k = len(arc) if upto is None else min(len(arc), upto + 1)
    idx = np.unique(np.linspace(0, k - 1, min(k, limit)).astype(int))
    return {"t": arc.t[idx].tolist(), "j": arc.j[idx].tolist(), "x": arc.x[idx].tolist(),
            "termination": arc.termination.value, "branch_id": arc.branch_id}


# -- per-arc summaries --------------------------------------------------------

def classify_arc(arc: HybridArc, target: SetOracle, eps_conv: float = EPS_CONV,
                 d: Optional[np.ndarray] = None) -> str:
    """One of converged, undecided, nonconverging, escaped, finite.

    Converged: final-window distance below ``eps_conv`` and the tail is
    coarsely nonincreasing (last-quarter max below first-quarter min, or the
    whole last quarter already below ``eps_conv``). Undecided: still
    decreasing when the horizon ran out.
    """
    if arc.termination == Termination.ESCAPE_DETECTED:
        return "escaped"
    if arc.termination in _FINITE_ENDS:
        return "finite"
    if d is None:
        d = arc.distances(target)
    return _classify_trace(arc.hybrid_time, d, eps_conv)


def _classify_trace(tau: np.ndarray, d: np.ndarray, eps_conv: float) -> str:
    span = tau[-1] - tau[0]
    head = d[tau <= tau[0] + span / 4]
    tail = d[tau >= tau[-1] - span / 4]
    final = d[tau >= tau[-1] - span / 10]
    decreasing = tail.max() < head.min()
    if final.max() < eps_conv and (decreasing or tail.max() < eps_conv):
        return "converged"
    if decreasing:
        return "undecided"
    return "nonconverging"


def _sup_distance(arc: HybridArc, target: SetOracle) -> Tuple[float, int]:
    if arc.termination == Termination.ESCAPE_DETECTED:
        return math.inf, len(arc) - 1
    d = arc.distances(target)
    k = int(np.argmax(d))
    return float(d[k]), k


# -- estimators ---------------------------------------------------------------

def estimate_stability(sys: HybridSystem, q: StabilityQuery) -> StabilityReport:
    """Search, per eps, the largest sampled delta that keeps solutions eps-close."""
    target = _require_target(sys, q)
    cache: Dict[float, Tuple[int, float, Optional[dict]]] = {}

    def trial(delta: float):
        if delta not in cache:
            Z = initial_conditions(sys, q, delta)
            worst, witness = -1.0, None
            for item in simulate_batch(sys, Z, q.sim):
                for arc in item.arcs:
                    s, k = _sup_distance(arc, target)
                    if s > worst:
                        worst = s
                        witness = {"x0": item.x0.tolist(), "max_distance": s,
                                   "arc": _excerpt(arc, upto=k)}
            cache[delta] = (len(Z), worst, witness)
        return cache[delta]

    entries: List[Entry] = []
    known: Optional[float] = None
    for eps in q.eps_grid:
        n, worst, wit = trial(eps)
        if n == 0:
            entries.append(Entry(eps, None, INCONCLUSIVE, samples=0))
            continue
        if worst < eps:
            known = eps
            entries.append(Entry(eps, eps, SUPPORTED, resolution=0.0, samples=n))
            continue
        hi, lo = eps, known
        if lo is None:
            d = eps
            for _ in range(q.max_halvings):
                d /= 2
                n_d, worst_d, wit_d = trial(d)
                if n_d and worst_d < eps:
                    lo = d
                    break
                hi = d
                if n_d:
                    wit = wit_d
        if lo is None:
            entries.append(Entry(eps, None, FALSIFIED, witness=wit, resolution=hi, samples=n))
            continue
        for _ in range(q.bisect_iters):
            mid = 0.5 * (lo + hi)
            n_m, worst_m, _ = trial(mid)
            if n_m and worst_m < eps:
                lo = mid
            else:
                hi = mid
        known = lo
        entries.append(Entry(eps, lo, SUPPORTED, resolution=hi - lo, samples=trial(lo)[0]))
    verdict = combine(*[e.verdict for e in entries])
    return StabilityReport("stability", target.name, _name(q.relative_to), entries, verdict,
                           sum(v[0] for v in cache.values()), q.plan.seed, q.sim,
                           details={"deltas_tried": sorted(cache)})


def estimate_attractivity(sys: HybridSystem, q: StabilityQuery, global_flag: bool = True,
                          items=None) -> StabilityReport:
    """Convergence of solutions to the target, from the region or a neighbourhood of it."""
    target = _require_target(sys, q)
    radius = None if global_flag else (q.local_radius if q.local_radius is not None else q.eps_grid[-1])
    if items is None:
        Z = initial_conditions(sys, q, radius)
        items = simulate_batch(sys, Z, q.sim)
    counts = {"converged": 0, "undecided": 0, "nonconverging": 0, "escaped": 0, "finite": 0}
    witness = None
    for item in items:
        for arc in item.arcs:
            cls = classify_arc(arc, target, q.eps_conv)
            counts[cls] += 1
            if cls in ("nonconverging", "escaped") and witness is None:
                witness = {"x0": item.x0.tolist(), "class": cls, "arc": _excerpt(arc)}
    n = len(items)
    if witness is not None:
        verdict = FALSIFIED
    elif n == 0 or counts["undecided"] or counts["converged"] == 0:
        verdict = INCONCLUSIVE
    else:
        verdict = SUPPORTED
    entry = Entry(q.eps_conv, radius, verdict, witness=witness, samples=n)
    details = {"classes": counts, "global": global_flag, "horizon": q.sim.t_max,
               "maximal_finite_excluded": counts["finite"]}
    return StabilityReport("global_attractivity" if global_flag else "attractivity",
                           target.name, _name(q.relative_to), [entry], verdict, n,
                           q.plan.seed, q.sim, details=details)


@dataclass
class UniformAttractivityReport:
    T: Optional[float]
    eps: float
    verdict: str
    samples_used: int
    witness: Optional[dict] = None

    def to_dict(self) -> dict:
        return {"property": "uniform_attractivity", "T": self.T, "eps": self.eps,
                "verdict": self.verdict, "samples_used": self.samples_used,
                "witness": self.witness}


def _K_points(sys: HybridSystem, K, plan: SamplePlan, tol: float) -> np.ndarray:
    if isinstance(K, CompactRegion):
        Z = plan.base_points(K)
    else:
        Z = np.atleast_2d(np.asarray(K, dtype=float))
    if Z.size == 0:
        return Z
    return _unique(Z[_valid_ic(sys, Z, tol)])


def uniform_time(traces, eps: float) -> Tuple[Optional[float], Optional[int]]:
    """Smallest sampled T after which every trace stays within ``eps``.

    ``traces`` yields ``(tau, d, termination)``. Returns ``(None, k)`` with the
    offending trace index when some trace still violates at its last sample.
    """
    T = 0.0
    for k, (tau, d, term) in enumerate(traces):
        if term in _FINITE_ENDS:
            continue
        if term == Termination.ESCAPE_DETECTED:
            return None, k
        bad = np.flatnonzero(d > eps)
        if bad.size == 0:
            continue
        last = bad[-1]
        if last == d.size - 1:
            return None, k
        T = max(T, float(tau[last + 1]))
    return T, None


def estimate_uniform_attractivity(sys: HybridSystem, target: SetOracle, K, eps: float,
                                  sim: SimConfig, plan: SamplePlan = SamplePlan()
                                  ) -> UniformAttractivityReport:
    """Uniform convergence time T(eps, K) over sampled initial conditions in K."""
    if not target.is_compact:
        raise ValueError(f"target {target.name!r} is not flagged compact")
    Z = _K_points(sys, K, plan, sim.set_tol)
    items = simulate_batch(sys, Z, sim)
    traces, owners = [], []
    for item in items:
        for arc in item.arcs:
            traces.append((arc.hybrid_time, arc.distances(target), arc.termination))
            owners.append((item, arc))
    T, bad = uniform_time(traces, eps)
    witness = None
    if bad is not None:
        item, arc = owners[bad]
        witness = {"x0": item.x0.tolist(), "arc": _excerpt(arc)}
        verdict = FALSIFIED if arc.termination == Termination.ESCAPE_DETECTED else INCONCLUSIVE
    else:
        verdict = SUPPORTED if len(Z) else INCONCLUSIVE
    return UniformAttractivityReport(T, float(eps), verdict, len(Z), witness)


@dataclass
class InvarianceReport:
    set_name: str
    max_excursion: Optional[float]
    verdict: str
    samples_used: int
    witnesses: List[dict] = field(default_factory=list)
    tol: float = TAU_INV

    def to_dict(self) -> dict:
        return {"property": "strong_forward_invariance", "set": self.set_name,
                "max_excursion": self.max_excursion, "verdict": self.verdict,
                "samples_used": self.samples_used, "tol": self.tol,
                "witnesses": self.witnesses}


def check_forward_invariance(sys: HybridSystem, M: SetOracle, region: CompactRegion,
                             sim: SimConfig, plan: SamplePlan = SamplePlan(),
                             tol: float = TAU_INV) -> InvarianceReport:
    """Largest distance from ``M`` reached by any branch started in ``M`` within ``region``."""
    Z = plan.base_points(region)
    Z = _onto(M, Z, sim.set_tol)
    if Z.size:
        Z = Z[region.contains(Z) & _valid_ic(sys, Z, sim.set_tol)]
    Z = _unique(Z)
    if Z.shape[0] == 0:
        return InvarianceReport(M.name, None, INCONCLUSIVE, 0, tol=tol)
    worst = 0.0
    witnesses = []
    for item in simulate_batch(sys, Z, sim):
        for arc in item.arcs:
            # escape is unboundedness, not departure; judge the finite samples only
            fin = np.flatnonzero(np.all(np.isfinite(arc.x), axis=1))
            d = M.dist(arc.x[fin].T)
            k = int(fin[np.argmax(d)])
            s = float(d.max())
            worst = max(worst, s)
            if s > tol:
                witnesses.append({"x0": item.x0.tolist(), "excursion": s, "arc": _excerpt(arc, upto=k)})
    verdict = FALSIFIED if witnesses else SUPPORTED
    return InvarianceReport(M.name, worst, verdict, Z.shape[0], witnesses[:10], tol)


@dataclass
class BoundednessReport:
    delta: Optional[float]
    sup_norm: float
    verdict: str
    samples_used: int
    witness: Optional[dict] = None

    def to_dict(self) -> dict:
        return {"property": "uniform_boundedness", "Delta": self.delta, "sup_norm": self.sup_norm,
                "verdict": self.verdict, "samples_used": self.samples_used, "witness": self.witness}


def check_uniform_boundedness(sys: HybridSystem, K, sim: SimConfig, plan: SamplePlan = SamplePlan(),
                              margin: float = 0.1, floor: float = 1e-9) -> BoundednessReport:
    """Delta = (1 + margin) * largest sampled |x| (+ floor), or None on escape."""
    Z = _K_points(sys, K, plan, sim.set_tol)
    sup = 0.0
    for item in simulate_batch(sys, Z, sim):
        for arc in item.arcs:
            if arc.termination == Termination.ESCAPE_DETECTED:
                wit = {"x0": item.x0.tolist(), "arc": _excerpt(arc)}
                return BoundednessReport(None, math.inf, FALSIFIED, len(Z), wit)
            sup = max(sup, float(np.max(np.linalg.norm(arc.x, axis=1))))
    if len(Z) == 0:
        return BoundednessReport(None, 0.0, INCONCLUSIVE, 0)
    return BoundednessReport((1 + margin) * sup + floor, sup, SUPPORTED, len(Z))


def fit_kl_bound(arcs: Sequence[HybridArc], target: SetOracle, traces=None) -> KLFit:
    """Fit the envelope c * s0 * exp(-lam * (t + j)) over all samples.

    ``c`` is chosen so the envelope is an upper bound on every sample; ``lam``
    minimizes the spread of log(d / s0) + lam * (t + j), which is the
    two-sided log-domain fit error reported as ``residual``.
    """
    if traces is None:
        traces = [(a.hybrid_time, a.distances(target)) for a in arcs]
    ys, rs, s0s, ds = [], [], [], []
    for tau, d in traces:
        s0 = d[0]
        if s0 == 0:
            if np.any(d > 0):
                raise ValueError("arc starts in the target but leaves it; no KL envelope through zero")
            continue
        pos = d > 0
        ys.append(np.log(d[pos] / s0))
        rs.append(tau[pos] - tau[0])
        s0s.append(np.full(pos.sum(), s0))
        ds.append(d[pos])
    n_arcs = len(traces)
    if not ys:
        return KLFit(1.0, 1.0, 0.0, n_arcs, degenerate=True)
    y = np.concatenate(ys)
    r = np.concatenate(rs)
    s0 = np.concatenate(s0s)
    d = np.concatenate(ds)

    def spread(lam):
        v = y + lam * r
        return float(v.max() - v.min())

    moving = r > 0
    rate = float(np.max(-y[moving] / r[moving])) if moving.any() else 1.0
    lam_lo, lam_hi = 1e-9, max(1.0, 4.0 * rate)
    res = minimize_scalar(spread, bounds=(lam_lo, lam_hi), method="bounded",
                          options={"xatol": 1e-12})
    lam = float(res.x)
    for cand in (lam_lo, lam_hi):
        if spread(cand) < spread(lam):
            lam = cand
    c = float(np.exp(np.max(y + lam * r))) * (1 + 1e-12)
    violation = float(max(0.0, np.max(d - c * s0 * np.exp(-lam * r))))
    return KLFit(c, lam, spread(lam), n_arcs, envelope_violation=violation)


def _require_target(sys: HybridSystem, q: StabilityQuery) -> SetOracle:
    if q.target is None:
        raise ValueError("query has no target set")
    for S in (q.target, q.relative_to):
        if S is not None and S.dim != sys.dim:
            raise ValueError(f"set {S.name!r} has dim {S.dim}, system has {sys.dim}")
    return q.target


def _name(S: Optional[SetOracle]) -> Optional[str]:
    return None if S is None else S.name
