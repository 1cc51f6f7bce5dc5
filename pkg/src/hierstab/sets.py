"""Closed-set oracles: membership, Euclidean distance, signed guards, inflation.

All oracle callables accept a single state of shape ``(n,)`` and, when the
oracle is ``vectorized``, a column batch of shape ``(n, N)`` (one state per
column), returning a scalar or an ``(N,)`` array respectively.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

TAU_SET = 1e-9

StateFn = Callable[[np.ndarray], object]


def _col(v: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Reshape a per-coordinate vector so it broadcasts against ``z``."""
    return v.reshape((-1,) + (1,) * (z.ndim - 1))


@dataclass(frozen=True, eq=False)
class SetOracle:
    """A closed subset of R^n described by oracles.

    ``guard`` is optional and signed: non-positive exactly on the set.
    ``project`` (optional) maps a state to a nearest point of the set; the
    samplers use it to place initial conditions on lower-dimensional sets.
    ``exact`` is False when ``distance`` is only a lower bound (intersections).
    """

    dim: int
    membership: StateFn
    distance: StateFn
    guard: Optional[StateFn] = None
    project: Optional[StateFn] = None
    is_compact: bool = False
    name: str = "set"
    exact: bool = True
    vectorized: bool = False

    # -- batched evaluation -------------------------------------------------
    def _many(self, fn: StateFn, Z: np.ndarray, dtype=float) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        if Z.ndim == 1:
            return np.asarray(fn(Z), dtype=dtype)
        if self.vectorized:
            return np.asarray(fn(Z), dtype=dtype).reshape(Z.shape[1])
        return np.array([fn(Z[:, k]) for k in range(Z.shape[1])], dtype=dtype)

    def dist(self, Z: np.ndarray) -> np.ndarray:
        return self._many(self.distance, Z)

    def member(self, Z: np.ndarray) -> np.ndarray:
        return self._many(self.membership, Z, dtype=bool)

    def guard_value(self, Z: np.ndarray) -> np.ndarray:
        if self.guard is None:
            raise ValueError(f"set {self.name!r} has no guard")
        return self._many(self.guard, Z)

    def contains(self, Z: np.ndarray, tol: float = TAU_SET) -> np.ndarray:
        """Tolerant membership: exact membership or distance at most ``tol``."""
        return self.member(Z) | (self.dist(Z) <= tol)

    def projection(self, Z: np.ndarray) -> np.ndarray:
        if self.project is None:
            raise ValueError(f"set {self.name!r} has no projection")
        Z = np.asarray(Z, dtype=float)
        if Z.ndim == 1 or self.vectorized:
            return np.asarray(self.project(Z), dtype=float).reshape(Z.shape)
        return np.stack([np.asarray(self.project(Z[:, k]), dtype=float)
                         for k in range(Z.shape[1])], axis=1)

    # -- derived sets -------------------------------------------------------
    def inflate(self, eps: float, closed: bool = True) -> "SetOracle":
        """Return M + eps*B (open ball) or its closure when ``closed``.

        The distance ``max(d - eps, 0)`` is exact for Euclidean inflation.
        """
        if not eps > 0:
            raise ValueError("inflation radius must be positive")
        base = self

        if closed:
            def membership(z):
                return base.distance(z) <= eps
        else:
            def membership(z):
                return base.distance(z) < eps

        def distance(z):
            return np.maximum(base.distance(z) - eps, 0.0)

        def guard(z):
            return base.distance(z) - eps

        project = None
        if base.project is not None:
            def project(z):
                z = np.asarray(z, dtype=float)
                p = np.asarray(base.project(z), dtype=float)
                d = np.sqrt(np.sum((z - p) ** 2, axis=0))
                scale = np.where(d > eps, eps / np.where(d > 0, d, 1.0), 1.0)
                return p + scale * (z - p)

        shell = "closed" if closed else "open"
        return SetOracle(self.dim, membership, distance, guard, project,
                         is_compact=self.is_compact,
                         name=f"({self.name})+{eps:g}B[{shell}]",
                         exact=self.exact, vectorized=self.vectorized)

    def __and__(self, other: "SetOracle") -> "SetOracle":
        return intersection([self, other])

    def __or__(self, other: "SetOracle") -> "SetOracle":
        return union([self, other])


def _check_state(set_: SetOracle, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape != (set_.dim,):
        raise ValueError(f"state has shape {z.shape}, expected ({set_.dim},)")
    if not np.all(np.isfinite(z)):
        raise ValueError("state must be finite")
    return z


def distance_to(set_: SetOracle, z) -> float:
    """Distance from ``z`` to the set, as reported by its oracle."""
    z = _check_state(set_, z)
    return float(set_.distance(z))


def in_inflation(set_: SetOracle, z, eps: float, closed: bool = False) -> bool:
    """Membership in M + eps*B; the open ball by default, the closure if ``closed``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    d = distance_to(set_, z)
    return d <= eps if closed else d < eps


# -- built-in constructors ---------------------------------------------------

def whole_space(dim: int, name: str = "R^n") -> SetOracle:
    def membership(z):
        z = np.asarray(z)
        return np.ones(z.shape[1:], dtype=bool) if z.ndim > 1 else True

    def distance(z):
        z = np.asarray(z)
        return np.zeros(z.shape[1:]) if z.ndim > 1 else 0.0

    def guard(z):
        z = np.asarray(z)
        return np.full(z.shape[1:], -np.inf) if z.ndim > 1 else -np.inf

    return SetOracle(dim, membership, distance, guard, lambda z: np.asarray(z, dtype=float),
                     is_compact=False, name=name, vectorized=True)


def empty_set(dim: int, name: str = "empty") -> SetOracle:
    def membership(z):
        z = np.asarray(z)
        return np.zeros(z.shape[1:], dtype=bool) if z.ndim > 1 else False

    def distance(z):
        z = np.asarray(z)
        return np.full(z.shape[1:], np.inf) if z.ndim > 1 else np.inf

    def guard(z):
        z = np.asarray(z)
        return np.full(z.shape[1:], np.inf) if z.ndim > 1 else np.inf

    return SetOracle(dim, membership, distance, guard, None,
                     is_compact=True, name=name, vectorized=True)


def box(lo: Sequence[float], hi: Sequence[float], name: Optional[str] = None) -> SetOracle:
    """Axis-aligned box; infinite bounds and degenerate (lo == hi) sides allowed."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != hi.shape or lo.ndim != 1:
        raise ValueError("lo and hi must be 1-D of equal length")
    if np.any(lo > hi):
        raise ValueError("box requires lo <= hi")
    lo_f = np.where(np.isfinite(lo), lo, 0.0)
    hi_f = np.where(np.isfinite(hi), hi, 0.0)
    has_lo = np.isfinite(lo)
    has_hi = np.isfinite(hi)

    def excess(z):
        z = np.asarray(z, dtype=float)
        below = np.where(_col(has_lo, z), _col(lo_f, z) - z, -np.inf)
        above = np.where(_col(has_hi, z), z - _col(hi_f, z), -np.inf)
        return below, above

    def distance(z):
        below, above = excess(z)
        gap = np.maximum(below, 0.0) + np.maximum(above, 0.0)
        return np.sqrt(np.sum(gap ** 2, axis=0))

    def membership(z):
        below, above = excess(z)
        return np.all((below <= 0) & (above <= 0), axis=0)

    def guard(z):
        below, above = excess(z)
        return np.max(np.maximum(below, above), axis=0)

    def project(z):
        z = np.asarray(z, dtype=float)
        return np.clip(z, _col(lo, z), _col(hi, z))

    compact = bool(np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)))
    if name is None:
        name = "box(" + ", ".join(f"[{a:g},{b:g}]" for a, b in zip(lo, hi)) + ")"
    return SetOracle(lo.size, membership, distance, guard, project,
                     is_compact=compact, name=name, vectorized=True)


def ball(center: Sequence[float], radius: float, name: Optional[str] = None) -> SetOracle:
    """Closed Euclidean ball."""
    c = np.asarray(center, dtype=float)
    if radius < 0:
        raise ValueError("radius must be nonnegative")

    def norm(z):
        z = np.asarray(z, dtype=float)
        return np.sqrt(np.sum((z - _col(c, z)) ** 2, axis=0))

    def project(z):
        z = np.asarray(z, dtype=float)
        r = norm(z)
        scale = np.where(r > radius, radius / np.where(r > 0, r, 1.0), 1.0)
        return _col(c, z) + scale * (z - _col(c, z))

    return SetOracle(c.size,
                     membership=lambda z: norm(z) <= radius,
                     distance=lambda z: np.maximum(norm(z) - radius, 0.0),
                     guard=lambda z: norm(z) - radius,
                     project=project, is_compact=True,
                     name=name or f"ball({c.tolist()},{radius:g})", vectorized=True)


def point(p: Sequence[float], name: Optional[str] = None) -> SetOracle:
    c = np.asarray(p, dtype=float)
    return ball(c, 0.0, name=name or f"{{{', '.join(f'{v:g}' for v in c)}}}")


def affine(normal, offset, name: Optional[str] = None) -> SetOracle:
    """Affine subspace {x : H x = c}; ``normal`` is a vector or a full-row-rank matrix."""
    H = np.atleast_2d(np.asarray(normal, dtype=float))
    c = np.atleast_1d(np.asarray(offset, dtype=float))
    if H.shape[0] != c.size:
        raise ValueError("offset length must match number of normal rows")
    # P maps residuals H x - c to the correction in state space.
    P = np.linalg.pinv(H)

    def correction(z):
        z = np.asarray(z, dtype=float)
        r = np.tensordot(H, z, axes=(1, 0)) - _col(c, z)
        return np.tensordot(P, r, axes=(1, 0))

    def distance(z):
        return np.sqrt(np.sum(correction(z) ** 2, axis=0))

    return SetOracle(H.shape[1],
                     membership=lambda z: distance(z) == 0.0,
                     distance=distance,
                     guard=distance,
                     project=lambda z: np.asarray(z, dtype=float) - correction(z),
                     is_compact=False,
                     name=name or "affine", vectorized=True)


def product(parts: Sequence[SetOracle], name: Optional[str] = None) -> SetOracle:
    """Cartesian product; part k acts on the k-th consecutive coordinate block."""
    parts = list(parts)
    cuts = np.cumsum([0] + [p.dim for p in parts])
    vec = all(p.vectorized for p in parts)

    def blocks(z):
        z = np.asarray(z, dtype=float)
        return [z[cuts[k]:cuts[k + 1]] for k in range(len(parts))]

    def distance(z):
        ds = [p.dist(b) for p, b in zip(parts, blocks(z))]
        return np.sqrt(sum(d ** 2 for d in ds))

    def membership(z):
        out = True
        for p, b in zip(parts, blocks(z)):
            out = out & p.member(b)
        return out

    guard = None
    if all(p.guard is not None for p in parts):
        def guard(z):
            return np.max(np.stack([p.guard_value(b) for p, b in zip(parts, blocks(z))]), axis=0)

    project = None
    if all(p.project is not None for p in parts):
        def project(z):
            return np.concatenate([p.projection(b) for p, b in zip(parts, blocks(z))], axis=0)

    return SetOracle(int(cuts[-1]), membership, distance, guard, project,
                     is_compact=all(p.is_compact for p in parts),
                     name=name or " x ".join(p.name for p in parts),
                     exact=all(p.exact for p in parts), vectorized=vec)


def union(parts: Sequence[SetOracle], name: Optional[str] = None) -> SetOracle:
    parts = list(parts)
    _same_dim(parts)

    def distance(z):
        return np.min(np.stack([p.dist(z) for p in parts]), axis=0)

    def membership(z):
        return np.any(np.stack([p.member(z) for p in parts]), axis=0)

    guard = None
    if all(p.guard is not None for p in parts):
        def guard(z):
            return np.min(np.stack([p.guard_value(z) for p in parts]), axis=0)

    project = None
    if all(p.project is not None for p in parts):
        def project(z):
            z = np.asarray(z, dtype=float)
            ds = np.stack([p.dist(z) for p in parts])
            ps = np.stack([p.projection(z) for p in parts])
            best = np.argmin(ds, axis=0)
            if z.ndim == 1:
                return ps[best]
            return ps[best, :, np.arange(z.shape[1])].T

    return SetOracle(parts[0].dim, membership, distance, guard, project,
                     is_compact=all(p.is_compact for p in parts),
                     name=name or " u ".join(p.name for p in parts),
                     exact=all(p.exact for p in parts),
                     vectorized=all(p.vectorized for p in parts))


def intersection(parts: Sequence[SetOracle], name: Optional[str] = None) -> SetOracle:
    """Intersection; its distance is the max of member distances (a lower bound)."""
    parts = list(parts)
    _same_dim(parts)

    def distance(z):
        return np.max(np.stack([p.dist(z) for p in parts]), axis=0)

    def membership(z):
        return np.all(np.stack([p.member(z) for p in parts]), axis=0)

    guard = None
    if all(p.guard is not None for p in parts):
        def guard(z):
            return np.max(np.stack([p.guard_value(z) for p in parts]), axis=0)

    return SetOracle(parts[0].dim, membership, distance, guard, None,
                     is_compact=any(p.is_compact for p in parts),
                     name=name or " n ".join(p.name for p in parts),
                     exact=False,
                     vectorized=all(p.vectorized for p in parts))


def _same_dim(parts: Sequence[SetOracle]) -> None:
    if not parts:
        raise ValueError("need at least one set")
    if len({p.dim for p in parts}) != 1:
        raise ValueError("sets must share a dimension")
