"""Hybrid system, hybrid time domain, hybrid arc and compact region types."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .sets import TAU_SET, SetOracle, box, ball, empty_set, product, whole_space


class Termination(str, enum.Enum):
    HORIZON_REACHED = "horizon_reached"
    LEFT_C_AND_D = "left_C_and_D"
    ZENO_SUSPECTED = "zeno_suspected"
    ESCAPE_DETECTED = "escape_detected"
    BRANCH_BUDGET = "branch_budget"


@dataclass(frozen=True, eq=False)
class HybridSystem:
    """The data (C, F, D, G) of a hybrid system.

    Set-valued F and G are given as finite lists of single-valued selections.
    Flow selections receive a state of shape ``(n,)``, or a column batch
    ``(n, N)`` when ``vectorized`` is set. Jump selections always receive
    ``(n,)`` and may return ``None`` where the selection is not available.
    """

    dim: int
    flow_set: SetOracle
    flow_map: Sequence[Callable]
    jump_set: SetOracle
    jump_map: Sequence[Callable]
    name: str = "hybrid"
    vectorized: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        for s in (self.flow_set, self.jump_set):
            if s.dim != self.dim:
                raise ValueError(f"set {s.name!r} has dim {s.dim}, system has {self.dim}")
        object.__setattr__(self, "flow_map", tuple(self.flow_map))
        object.__setattr__(self, "jump_map", tuple(self.jump_map))

    @classmethod
    def from_ode(cls, f: Callable, dim: int, name: str = "ode",
                 vectorized: bool = False) -> "HybridSystem":
        """Continuous-time system x' = f(x): C = R^n, D empty."""
        return cls(dim, whole_space(dim), [f], empty_set(dim), [], name=name,
                   vectorized=vectorized)

    @classmethod
    def from_map(cls, g: Callable, dim: int, name: str = "map") -> "HybridSystem":
        """Discrete-time system x+ = g(x): C empty, D = R^n."""
        zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))  # noqa: E731
        return cls(dim, empty_set(dim), [zero], whole_space(dim), [g], name=name,
                   vectorized=True)

    def flow(self, X: np.ndarray, selection: int = 0) -> np.ndarray:
        """Evaluate a flow selection on a column batch ``(n, N)``."""
        f = self.flow_map[selection]
        if self.vectorized:
            return np.asarray(f(X), dtype=float).reshape(X.shape)
        return np.stack([np.asarray(f(X[:, k]), dtype=float) for k in range(X.shape[1])], axis=1)


@dataclass(frozen=True)
class HybridTimeDomain:
    """Flow intervals ``(j, t_start, t_end)`` of a compact hybrid time domain."""

    intervals: Tuple[Tuple[int, float, float], ...]

    def __post_init__(self):
        prev_end = None
        for k, (j, t0, t1) in enumerate(self.intervals):
            if j != k:
                raise ValueError("jump indices must be 0, 1, 2, ...")
            if t1 < t0:
                raise ValueError(f"interval {j} ends before it starts")
            if prev_end is not None and t0 != prev_end:
                raise ValueError(f"interval {j} does not start where interval {j - 1} ends")
            prev_end = t1

    def contains(self, t: float, j: int) -> bool:
        if not 0 <= j < len(self.intervals):
            return False
        _, t0, t1 = self.intervals[j]
        return t0 <= t <= t1

    @property
    def sup_t(self) -> float:
        return self.intervals[-1][2] if self.intervals else 0.0

    @property
    def sup_j(self) -> int:
        return len(self.intervals) - 1


@dataclass(frozen=True, eq=False)
class HybridArc:
    """A sampled solution. ``x`` has one row per sample."""

    t: np.ndarray
    j: np.ndarray
    x: np.ndarray
    termination: Termination
    branch_id: int = 0

    @property
    def domain(self) -> HybridTimeDomain:
        intervals = []
        for jj in range(int(self.j[-1]) + 1):
            ts = self.t[self.j == jj]
            intervals.append((jj, float(ts[0]), float(ts[-1])))
        return HybridTimeDomain(tuple(intervals))

    @property
    def samples(self) -> Iterator[Tuple[float, int, np.ndarray]]:
        for t, j, x in zip(self.t, self.j, self.x):
            yield float(t), int(j), x

    @property
    def hybrid_time(self) -> np.ndarray:
        """t + j per sample."""
        return self.t + self.j

    @property
    def jump_indices(self) -> np.ndarray:
        """Indices k such that samples k, k+1 straddle a jump."""
        return np.flatnonzero(np.diff(self.j) == 1)

    def distances(self, target: SetOracle) -> np.ndarray:
        return target.dist(self.x.T)

    def __len__(self) -> int:
        return self.t.size


class CompactRegion:
    """A compact box, ball, or product of regions with exact membership."""

    def __init__(self, kind: str, lo=None, hi=None, center=None, radius=None, parts=None):
        self.kind = kind
        if kind == "box":
            self.lo = np.asarray(lo, dtype=float)
            self.hi = np.asarray(hi, dtype=float)
            if self.lo.shape != self.hi.shape or np.any(self.lo > self.hi):
                raise ValueError("invalid box bounds")
            if not (np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi))):
                raise ValueError("region must be bounded")
        elif kind == "ball":
            self.center = np.asarray(center, dtype=float)
            self.radius = float(radius)
            if not self.radius >= 0:
                raise ValueError("radius must be nonnegative")
            self.lo = self.center - self.radius
            self.hi = self.center + self.radius
        elif kind == "product":
            self.parts = list(parts)
            self.lo = np.concatenate([p.lo for p in self.parts])
            self.hi = np.concatenate([p.hi for p in self.parts])
        else:
            raise ValueError(f"unknown region kind {kind!r}")

    @classmethod
    def box(cls, lo, hi) -> "CompactRegion":
        return cls("box", lo=lo, hi=hi)

    @classmethod
    def ball(cls, center, radius) -> "CompactRegion":
        return cls("ball", center=center, radius=radius)

    @classmethod
    def product(cls, parts) -> "CompactRegion":
        return cls("product", parts=parts)

    @property
    def dim(self) -> int:
        return self.lo.size

    def contains(self, Z: np.ndarray) -> np.ndarray:
        """Exact membership for states given as rows of ``Z`` (or a single state)."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if self.kind == "box":
            return np.all((Z >= self.lo) & (Z <= self.hi), axis=1)
        if self.kind == "ball":
            return np.sum((Z - self.center) ** 2, axis=1) <= self.radius ** 2
        out = np.ones(Z.shape[0], dtype=bool)
        k = 0
        for p in self.parts:
            out &= p.contains(Z[:, k:k + p.dim])
            k += p.dim
        return out

    def as_set(self) -> SetOracle:
        if self.kind == "box":
            return box(self.lo, self.hi)
        if self.kind == "ball":
            return ball(self.center, self.radius)
        return product([p.as_set() for p in self.parts])

    def grid(self, points_per_dim: int = 0, resolution: float = 0.0) -> Tuple[np.ndarray, Tuple[int, ...]]:
        """Regular lattice over the bounding box, filtered to the region.

        Returns ``(points, shape)``; ``points`` keeps lattice order and has NaN
        rows where the lattice point lies outside the region.
        """
        axes = []
        for a, b in zip(self.lo, self.hi):
            if b == a:
                axes.append(np.array([a]))
            elif resolution > 0:
                m = int(round((b - a) / resolution)) + 1
                axes.append(np.linspace(a, b, max(m, 2)))
            else:
                axes.append(np.linspace(a, b, max(points_per_dim, 2)))
        shape = tuple(ax.size for ax in axes)
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        pts[~self.contains(pts)] = np.nan
        return pts, shape

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform samples (rejection from the bounding box for balls)."""
        if n <= 0:
            return np.empty((0, self.dim))
        out = []
        while sum(len(o) for o in out) < n:
            cand = rng.uniform(self.lo, self.hi, size=(max(n, 16), self.dim))
            out.append(cand[self.contains(cand)])
        return np.concatenate(out)[:n]

    def to_dict(self) -> dict:
        if self.kind == "ball":
            return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}
        if self.kind == "product":
            return {"kind": "product", "parts": [p.to_dict() for p in self.parts]}
        return {"kind": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}

    def __repr__(self) -> str:
        return f"CompactRegion({self.to_dict()})"


@dataclass
class Violation:
    kind: str
    message: str
    witness: Optional[List[float]] = None


@dataclass
class SanityReport:
    n_samples: int
    violations: List[Violation] = field(default_factory=list)
    selection_bounds: dict = field(default_factory=dict)
    not_verified: Tuple[str, ...] = (
        "closedness of C and D",
        "outer semicontinuity of F and G",
        "convexity of F(x)",
    )

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "ok": self.ok,
            "violations": [v.__dict__ for v in self.violations],
            "selection_bounds": self.selection_bounds,
            "not_verified": list(self.not_verified),
        }


def check_basic_conditions(sys: HybridSystem, region: CompactRegion, n_samples: int = 1000,
                           seed: int = 0, tol: float = TAU_SET) -> SanityReport:
    """Sampled sanity check of the data of ``sys`` on ``region``.

    Not a proof: closedness and semicontinuity cannot be decided from oracles
    and are listed under ``not_verified``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rep = SanityReport(n_samples)
    rng = np.random.default_rng(seed)
    Z = region.sample(n_samples, rng)

    for label, S in (("C", sys.flow_set), ("D", sys.jump_set)):
        pts = Z
        if S.project is not None:
            # lower-dimensional sets are never hit by uniform samples
            pts = np.concatenate([Z, S.projection(Z.T).T])
        _check_oracle(S, label, pts, tol, rep)

    for label, S, maps, kind in (("C", sys.flow_set, sys.flow_map, "flow"),
                                 ("D", sys.jump_set, sys.jump_map, "jump")):
        pts = Z if S.project is None else np.concatenate([Z, S.projection(Z.T).T])
        members = pts[S.contains(pts.T, tol)]
        if not maps and len(members):
            # an empty list only matters where the set is actually visited
            rep.violations.append(Violation("precondition", f"{kind} selections empty",
                                            members[0].tolist()))
        for k, g in enumerate(maps):
            bound = 0.0
            for z in members:
                try:
                    v = g(z)
                except Exception as exc:  # noqa: BLE001 - reported, not raised
                    rep.violations.append(Violation(kind, f"{kind} selection {k} raised {exc!r}", z.tolist()))
                    break
                if v is None:
                    continue
                v = np.asarray(v, dtype=float)
                if v.shape != (sys.dim,) or not np.all(np.isfinite(v)):
                    rep.violations.append(Violation(
                        kind, f"{kind} selection {k} returned non-finite or wrong-shape value", z.tolist()))
                    break
                bound = max(bound, float(np.linalg.norm(v)))
            rep.selection_bounds[f"{kind}[{k}]"] = bound
    return rep


def _check_oracle(S: SetOracle, label: str, pts: np.ndarray, tol: float, rep: SanityReport) -> None:
    mem = S.member(pts.T)
    dist = S.dist(pts.T)
    bad = np.flatnonzero(~np.isfinite(dist) & mem | (dist < 0))
    for i in bad[:1]:
        rep.violations.append(Violation("consistency", f"{label}: invalid distance", pts[i].tolist()))
    bad = np.flatnonzero(mem & (dist > tol))
    for i in bad[:1]:
        rep.violations.append(Violation(
            "consistency", f"{label}: member with distance {dist[i]:.3g}", pts[i].tolist()))
    finite = np.isfinite(dist)
    if np.count_nonzero(finite) > 1:
        a, b = pts[finite][:-1], pts[finite][1:]
        da, db = dist[finite][:-1], dist[finite][1:]
        gap = np.abs(da - db) - np.linalg.norm(a - b, axis=1)
        bad = np.flatnonzero(gap > tol)
        for i in bad[:1]:
            rep.violations.append(Violation(
                "consistency", f"{label}: distance not 1-Lipschitz", a[i].tolist()))
    if S.guard is not None:
        g = S.guard_value(pts.T)
        bad = np.flatnonzero((g <= 0) != mem)
        # guard and membership may disagree only within tol of the boundary
        bad = bad[np.abs(g[bad]) > tol] if bad.size else bad
        bad = bad[dist[bad] > tol] if bad.size else bad
        for i in bad[:1]:
            rep.violations.append(Violation(
                "consistency", f"{label}: guard sign disagrees with membership", pts[i].tolist()))
