"""Nested set triples, the restricted system, the hierarchy checker and basin scans."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.ndimage import binary_erosion, maximum_filter

from .core import CompactRegion, HybridArc, HybridSystem, Termination
from .io import basin_to_csv
from .metrics import (EPS_CONV, FALSIFIED, INCONCLUSIVE, SKIPPED, SUPPORTED, KLFit,
                      StabilityQuery, UniformAttractivityReport, _classify_trace,
                      check_forward_invariance, combine, estimate_attractivity,
                      estimate_stability, fit_kl_bound, uniform_time)
from .sets import SetOracle, intersection
from .simulator import SimConfig, simulate_batch

BASIN_CLASSES = ("converging", "bounded_nonconverging", "unbounded", "inconclusive")
BASIN_MIN_CONSISTENCY = 0.98


@dataclass(frozen=True)
class NestedTriple:
    """Outer set ``M_e`` containing ``M_i`` containing the compact ``M_o``."""

    M_e: SetOracle
    M_i: SetOracle
    M_o: SetOracle

    def __post_init__(self):
        if len({self.M_e.dim, self.M_i.dim, self.M_o.dim}) != 1:
            raise ValueError("triple sets must share a dimension")
        if not self.M_o.is_compact:
            raise ValueError(f"innermost set {self.M_o.name!r} must be flagged compact")

    @property
    def dim(self) -> int:
        return self.M_e.dim

    def nesting_witness(self, points: np.ndarray, tol: float = 1e-9) -> Optional[dict]:
        """First sampled point breaking M_o in M_i in M_e, or None.

        Points are complemented by their projections onto M_o and M_i so that
        lower-dimensional sets are actually visited.
        """
        Z = [np.atleast_2d(points)]
        for S in (self.M_o, self.M_i):
            if S.project is not None:
                Z.append(S.projection(Z[0].T).T)
        Z = np.concatenate(Z)
        in_o = self.M_o.contains(Z.T, tol)
        in_i = self.M_i.contains(Z.T, tol)
        in_e = self.M_e.contains(Z.T, tol)
        for mask, inner, outer in ((in_o & ~in_i, self.M_o, self.M_i),
                                   (in_i & ~in_e, self.M_i, self.M_e)):
            if mask.any():
                k = int(np.flatnonzero(mask)[0])
                return {"x": Z[k].tolist(), "inside": inner.name, "outside": outer.name}
        return None

    def to_dict(self) -> dict:
        return {"M_e": self.M_e.name, "M_i": self.M_i.name, "M_o": self.M_o.name}


@dataclass(frozen=True, eq=False)
class RestrictedSystem(HybridSystem):
    """A system whose flow and jump sets are cut down to ``M_e`` and a neighbourhood of ``M_o``.

    ``a1`` (the intermediate set within the restricted flow/jump sets) and
    ``a2`` (the attractor) are the two sets whose stability the restriction
    is built to expose; ``a1`` is None when no intermediate set was given.
    """

    base: Optional[HybridSystem] = None
    inflation: Optional[SetOracle] = None
    radius: float = 0.0
    a1: Optional[SetOracle] = None
    a2: Optional[SetOracle] = None


def restrict(sys: HybridSystem, M_e: SetOracle, M_o: SetOracle, M_bar: float,
             M_i: Optional[SetOracle] = None) -> RestrictedSystem:
    """Restrict ``sys`` to ``M_e`` and the closed ``M_bar``-inflation of ``M_o``.

    Flow and jump sets are intersected with both; jump outcomes are filtered
    (not clipped) to the inflation, and are not intersected with ``M_e``.
    """
    if not M_o.is_compact:
        raise ValueError(f"{M_o.name!r} must be flagged compact")
    if not M_bar > 0:
        raise ValueError("M_bar must be positive")
    for S in (M_e, M_o) + ((M_i,) if M_i is not None else ()):
        if S.dim != sys.dim:
            raise ValueError(f"set {S.name!r} has dim {S.dim}, system has {sys.dim}")
    tube = M_o.inflate(M_bar, closed=True)
    C_bar = intersection([sys.flow_set, M_e, tube], name=f"C n {M_e.name} n {tube.name}")
    D_bar = intersection([sys.jump_set, M_e, tube], name=f"D n {M_e.name} n {tube.name}")

    def keep_in(g):
        def g_bar(x):
            y = g(x)
            if y is None:
                return None
            return y if bool(tube.member(np.asarray(y, dtype=float))) else None
        return g_bar

    a1 = None
    if M_i is not None:
        a1 = intersection([M_i, C_bar | D_bar], name=f"{M_i.name} n (C_bar u D_bar)")
    return RestrictedSystem(sys.dim, C_bar, sys.flow_map, D_bar, [keep_in(g) for g in sys.jump_map],
                            name=f"{sys.name}|{M_bar:g}", vectorized=sys.vectorized,
                            base=sys, inflation=tube, radius=float(M_bar), a1=a1, a2=M_o)


def arc_is_prefix(short: HybridArc, candidates) -> bool:
    """True when ``short`` is a bitwise prefix of one of ``candidates``.

    A final sample produced by leaving the restricted flow set (an event
    located between grid steps) has no counterpart in the longer arc and is
    only required to lie at a time the longer arc reaches.
    """
    k = len(short)
    rim = short.termination in (Termination.LEFT_C_AND_D, Termination.BRANCH_BUDGET)
    m = k - 1 if rim else k
    for arc in candidates:
        if len(arc) < m:
            continue
        if (np.array_equal(arc.t[:m], short.t[:m]) and np.array_equal(arc.j[:m], short.j[:m])
                and np.array_equal(arc.x[:m], short.x[:m])):
            if not rim or arc.hybrid_time[-1] >= short.hybrid_time[-1]:
                return True
    return False


# -- basin scans ----------------------------------------------------------------

@dataclass
class BasinReport:
    points: np.ndarray
    classes: List[str]
    lattice: Tuple[int, ...]
    index: np.ndarray
    resolution: float
    consistency: Optional[float]
    interior_consistency: Optional[float]
    region: dict
    sim: SimConfig
    interior: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    traces: Dict[int, tuple] = field(default_factory=dict, repr=False)

    @property
    def counts(self) -> Dict[str, int]:
        return {c: self.classes.count(c) for c in BASIN_CLASSES}

    @property
    def verdict(self) -> str:
        if not self.classes or self.interior_consistency is None:
            return INCONCLUSIVE
        return SUPPORTED if self.interior_consistency >= BASIN_MIN_CONSISTENCY else INCONCLUSIVE

    def to_csv(self) -> str:
        return basin_to_csv(self.points, self.classes)

    def to_dict(self, include_grid: bool = True) -> dict:
        out = {
            "property": "basin",
            "resolution": self.resolution,
            "lattice": list(self.lattice),
            "n_points": len(self.classes),
            "counts": self.counts,
            "consistency": self.consistency,
            "interior_consistency": self.interior_consistency,
            "verdict": self.verdict,
            "region": self.region,
            "sim_config": self.sim.to_dict(),
        }
        if include_grid:
            out["grid"] = [{"x0": p.tolist(), "class": c} for p, c in zip(self.points, self.classes)]
        return out


def _basin_class(item, M_o: SetOracle, eps_conv: float, keep: bool):
    labels, traces = [], []
    for arc in item.arcs:
        if arc.termination == Termination.ESCAPE_DETECTED:
            labels.append("unbounded")
            continue
        d = arc.distances(M_o)
        if arc.termination in (Termination.LEFT_C_AND_D, Termination.BRANCH_BUDGET):
            labels.append("inconclusive")
            continue
        cls = _classify_trace(arc.hybrid_time, d, eps_conv)
        labels.append({"converged": "converging", "undecided": "inconclusive",
                       "nonconverging": "bounded_nonconverging"}[cls])
        if keep:
            traces.append((arc.hybrid_time, d, arc.termination))
    if not labels:
        return "inconclusive", []
    if "unbounded" in labels:
        return "unbounded", []
    if all(c == "converging" for c in labels):
        return "converging", traces
    if "bounded_nonconverging" in labels:
        return "bounded_nonconverging", []
    return "inconclusive", []


def estimate_basin(sys: HybridSystem, M_o: SetOracle, M_e: SetOracle, region: CompactRegion,
                   sim: SimConfig, resolution: float = 0.0, points_per_dim: int = 21,
                   eps_conv: float = EPS_CONV, keep_traces: bool = False,
                   chunk: int = 512) -> BasinReport:
    """Classify a lattice over ``region`` intersected with ``M_e`` by the fate of its solutions.

    ``consistency`` is the fraction of classified points that are either
    converging or unbounded (the sampled statement "bounded iff converging").
    ``interior_consistency`` drops the boundary layer: lattice points whose
    one-cell neighbourhood holds both converging and unbounded points.
    """
    if not M_o.is_compact:
        raise ValueError(f"{M_o.name!r} must be flagged compact")
    pts, shape = region.grid(points_per_dim=points_per_dim, resolution=resolution)
    ok = np.all(np.isfinite(pts), axis=1)
    cand = np.flatnonzero(ok)
    if cand.size:
        P = pts[cand]
        keep = M_e.contains(P.T, sim.set_tol) & (sys.flow_set.contains(P.T, sim.set_tol)
                                                 | sys.jump_set.contains(P.T, sim.set_tol))
        cand = cand[keep]
    spacing = [((b - a) / (m - 1)) if m > 1 else 0.0 for a, b, m in zip(region.lo, region.hi, shape)]
    labels = np.full(len(pts), "", dtype=object)
    traces: Dict[int, tuple] = {}
    for s in range(0, cand.size, chunk):
        idx = cand[s:s + chunk]
        for k, item in zip(idx, simulate_batch(sys, pts[idx], sim)):
            cls, tr = _basin_class(item, M_o, eps_conv, keep_traces)
            labels[k] = cls
            if keep_traces and cls == "converging":
                traces[int(k)] = tr
    grid = labels.reshape(shape)
    conv = grid == "converging"
    unb = grid == "unbounded"
    fence = np.ones(len(shape), dtype=int) * 3
    layer = maximum_filter(conv, size=fence, mode="constant") & maximum_filter(unb, size=fence, mode="constant")
    interior = binary_erosion(conv, structure=np.ones(fence), border_value=0).ravel()[cand]
    classes = [str(labels[k]) for k in cand]
    good = np.array([c in ("converging", "unbounded") for c in classes], dtype=bool)
    away = ~layer.ravel()[cand]
    consistency = float(good.mean()) if classes else None
    interior_consistency = float(good[away].mean()) if away.any() else None
    return BasinReport(pts[cand], classes, shape, cand, float(max(spacing, default=0.0)), consistency,
                       interior_consistency, region.to_dict(), sim, interior=interior, traces=traces)


# -- the checker --------------------------------------------------------------------

@dataclass
class HierarchyReport:
    system: str
    triple: NestedTriple
    region: CompactRegion
    item1: object
    item2: Tuple[object, object]
    item3: Tuple[object, object]
    conclusion: Optional[dict]
    kl: Optional[KLFit]
    basin: Optional[BasinReport]
    seed: int

    @property
    def item_verdicts(self) -> Dict[str, str]:
        return {"item1": self.item1.verdict,
                "item2": combine(*(r.verdict for r in self.item2)) if self.item2 else SKIPPED,
                "item3": combine(*(r.verdict for r in self.item3)) if self.item3 else SKIPPED}

    @property
    def conclusion_verdict(self) -> str:
        return SKIPPED if self.conclusion is None else self.conclusion["verdict"]

    @property
    def verdict(self) -> str:
        vs = list(self.item_verdicts.values()) + [self.conclusion_verdict]
        if FALSIFIED in vs:
            return FALSIFIED
        if all(v == SUPPORTED for v in vs):
            return SUPPORTED
        return INCONCLUSIVE

    def to_dict(self) -> dict:
        iv = self.item_verdicts

        def pair(p, v):
            if not p:
                return {"verdict": v}
            return {"stability": p[0].to_dict(), "attractivity": p[1].to_dict(), "verdict": v}

        concl = {"verdict": SKIPPED}
        if self.conclusion is not None:
            concl = {"stability": self.conclusion["stability"].to_dict(),
                     "uniform_attractivity": self.conclusion["uniform_attractivity"].to_dict(),
                     "basin_verdict": self.conclusion["basin_verdict"],
                     "kl_verdict": self.conclusion["kl_verdict"],
                     "verdict": self.conclusion["verdict"]}
        return {
            "system": self.system,
            "triple": self.triple.to_dict(),
            "region": self.region.to_dict(),
            "seed": self.seed,
            "item1": dict(self.item1.to_dict(), verdict=iv["item1"]),
            "item2": pair(self.item2, iv["item2"]),
            "item3": pair(self.item3, iv["item3"]),
            "conclusion": concl,
            "kl": None if self.kl is None else self.kl.to_dict(),
            "basin": None if self.basin is None else self.basin.to_dict(),
            "verdict": self.verdict,
        }


def check_hierarchy(sys: HybridSystem, triple: NestedTriple, region: CompactRegion,
                    q: StabilityQuery = StabilityQuery(), local: bool = False) -> HierarchyReport:
    """Sample the three hypotheses in order, then the conclusion if all are supported.

    With ``local`` the attractivity items only sample a ``q.local_radius``
    neighbourhood of each set; the radius has no default and must be given.
    """
    if triple.dim != sys.dim:
        raise ValueError(f"triple has dim {triple.dim}, system has {sys.dim}")
    if local and q.local_radius is None:
        raise ValueError("local mode needs an explicit local_radius")
    q = q.replace(region=region)
    witness = triple.nesting_witness(q.plan.base_points(region), q.sim.set_tol)
    if witness is not None:
        raise ValueError(f"nesting violated: {witness}")

    item1 = check_forward_invariance(sys, triple.M_e, region, q.sim, q.plan)
    item2: Tuple = ()
    item3: Tuple = ()
    if item1.verdict == SUPPORTED:
        q2 = q.replace(target=triple.M_i, relative_to=triple.M_e)
        item2 = (estimate_stability(sys, q2), estimate_attractivity(sys, q2, global_flag=not local))
    if item2 and combine(*(r.verdict for r in item2)) == SUPPORTED:
        q3 = q.replace(target=triple.M_o, relative_to=triple.M_i)
        item3 = (estimate_stability(sys, q3), estimate_attractivity(sys, q3, global_flag=not local))

    conclusion, kl, basin = None, None, None
    if item3 and combine(*(r.verdict for r in item3)) == SUPPORTED:
        stab = estimate_stability(sys, q.replace(target=triple.M_o, relative_to=triple.M_e))
        basin = estimate_basin(sys, triple.M_o, triple.M_e, region, q.sim,
                               points_per_dim=q.plan.grid, eps_conv=q.eps_conv, keep_traces=True)
        inner = [int(k) for k, flag in zip(basin.index, basin.interior) if flag]
        traces = [tr for k in inner for tr in basin.traces[k]]
        ua = _uniform_report(traces, q.eps_grid[0], basin.points[basin.interior])
        kl = fit_kl_bound([], triple.M_o, traces=[(tau, d) for tau, d, _ in traces])
        kl_verdict = SUPPORTED if kl.envelope_violation <= 1e-9 and traces else INCONCLUSIVE
        conclusion = {"stability": stab, "uniform_attractivity": ua, "basin_verdict": basin.verdict,
                      "kl_verdict": kl_verdict,
                      "verdict": combine(stab.verdict, ua.verdict, basin.verdict, kl_verdict)}
    return HierarchyReport(sys.name, triple, region, item1, item2, item3, conclusion, kl, basin,
                           q.plan.seed)


def _uniform_report(traces, eps: float, K: np.ndarray):
    if not traces:
        return UniformAttractivityReport(None, float(eps), INCONCLUSIVE, 0)
    T, bad = uniform_time(traces, eps)
    verdict = SUPPORTED if bad is None else INCONCLUSIVE
    return UniformAttractivityReport(T, float(eps), verdict, int(K.shape[0]))
