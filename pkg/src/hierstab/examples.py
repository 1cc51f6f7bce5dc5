"""Built-in systems with nested triples and the analytic facts used to test them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional

import numpy as np

from .core import CompactRegion, HybridSystem
from .hierarchy import NestedTriple
from .sets import SetOracle, affine, box, point, whole_space

INF = math.inf


@dataclass(frozen=True)
class ExampleEntry:
    id: str
    system: HybridSystem
    default_triple: Optional[NestedTriple]
    default_region: CompactRegion
    documentation: str
    params: Dict[str, float]
    sets: Dict[str, SetOracle] = field(default_factory=dict)

    def describe(self) -> dict:
        return {"id": self.id, "params": dict(self.params),
                "description": self.documentation.strip().splitlines()[0]}


def _planar_triple() -> NestedTriple:
    return NestedTriple(whole_space(2, name="R^2"),
                        affine([1.0, 0.0], 0.0, name="{x1=0}"),
                        point([0.0, 0.0], name="{0}"))


def _linear_cascade(a: float = 1.0, b: float = 1.0, k: float = 1.0) -> ExampleEntry:
    def f(x):
        y = np.empty_like(x)
        y[0] = -a * x[0]
        y[1] = -b * x[1] + k * x[0]
        return y

    sys = HybridSystem.from_ode(f, 2, name="linear_cascade", vectorized=True)
    doc = """Linear cascade x1' = -a x1, x2' = -b x2 + k x1.
    x1(t) = x1(0) exp(-a t). For a = b = k = 1, x2(t) = exp(-t) (x2(0) + x1(0) t),
    so from (1, 0) the state at t = 1 is (exp(-1), exp(-1)).
    The axis {x1 = 0} is invariant and the origin is the only equilibrium.
    For a = b = k = 1 the Euclidean norm is nonincreasing along solutions."""
    return ExampleEntry("linear_cascade", sys, _planar_triple(),
                        CompactRegion.box([-5, -5], [5, 5]), doc, {"a": a, "b": b, "k": k})


def _peaking_cascade(k: float = 1.0) -> ExampleEntry:
    def f(x):
        y = np.empty_like(x)
        y[0] = -x[0]
        y[1] = -x[1] + k * x[0] * x[1] ** 2
        return y

    sys = HybridSystem.from_ode(f, 2, name="peaking_cascade", vectorized=True)
    doc = """Cascade with quadratic coupling x1' = -x1, x2' = -x2 + k x1 x2^2.
    With w = 1/x2 the second equation becomes linear, which gives the
    closed-form basin k x1(0) x2(0) < 2. Outside it, x2 escapes in finite time
    t* = ln(k x1 x2 / (k x1 x2 - 2)) / 2. The axis {x1 = 0} is invariant with
    x2' = -x2 on it."""
    return ExampleEntry("peaking_cascade", sys, _planar_triple(),
                        CompactRegion.box([-3, -3], [3, 3]), doc, {"k": k})


def _unstable_cascade(a: float = 1.0) -> ExampleEntry:
    def f(x):
        y = np.empty_like(x)
        y[0] = a * x[0]
        y[1] = -x[1] + x[0]
        return y

    sys = HybridSystem.from_ode(f, 2, name="unstable_cascade", vectorized=True)
    doc = """Cascade with an unstable driver x1' = a x1, x2' = -x2 + x1.
    x1(t) = x1(0) exp(a t), so every solution with x1(0) != 0 leaves any
    neighbourhood of {x1 = 0}; the axis itself is invariant."""
    return ExampleEntry("unstable_cascade", sys, _planar_triple(),
                        CompactRegion.box([-5, -5], [5, 5]), doc, {"a": a})


def _bouncing_ball(gravity: float = 1.0, restitution: float = 0.5) -> ExampleEntry:
    g, lam = gravity, restitution
    if not g > 0 or not 0 <= restitution < 1:
        raise ValueError("need gravity > 0 and 0 <= restitution < 1")
    C = box([0, -INF], [INF, INF], name="{h>=0}")
    D = box([0, -INF], [0, 0], name="{h=0, v<=0}")

    def f(x):
        y = np.empty_like(x)
        y[0] = x[1]
        y[1] = -g
        return y

    def jump(x):
        return np.array([x[0], -lam * x[1]])

    sys = HybridSystem(2, C, [f], D, [jump], name="bouncing_ball", vectorized=True)
    doc = """Bouncing ball, state (height h, velocity v), h' = v, v' = -gravity on h >= 0,
    v+ = -restitution v at h = 0 with v <= 0.
    From (h0, 0) the first impact is at t = sqrt(2 h0 / gravity) with speed
    sqrt(2 gravity h0). Each bounce scales the energy h + v^2 / (2 gravity) by
    restitution^2, and the flight after impact k lasts 2 restitution^k times
    the first impact speed over gravity, so impacts accumulate at a finite time."""
    origin = point([0.0, 0.0], name="{(0,0)}")
    return ExampleEntry("bouncing_ball", sys, None, CompactRegion.box([0, -2], [2, 2]), doc,
                        {"gravity": g, "restitution": lam}, {"C": C, "D": D, "origin": origin})


def _hybrid_cascade(contraction: float = 0.5) -> ExampleEntry:
    c = contraction
    if not 0 <= c < 1:
        raise ValueError("need 0 <= contraction < 1")
    C = box([-INF, -INF, 0], [INF, INF, 1], name="{tau in [0,1]}")
    D = box([-INF, -INF, 1], [INF, INF, 1], name="{tau=1}")

    def f(x):
        y = np.empty_like(x)
        y[0] = 0.0
        y[1] = -x[1] + x[0]
        y[2] = 1.0
        return y

    def jump(x):
        return np.array([c * x[0], x[1], 0.0])

    sys = HybridSystem(3, C, [f], D, [jump], name="hybrid_cascade", vectorized=True)
    doc = """Timer-driven cascade, state (x1, x2, tau): x1' = 0, x2' = -x2 + x1, tau' = 1 while
    tau in [0, 1]; at tau = 1, x1+ = contraction x1, x2+ = x2, tau+ = 0.
    Hence x1 after j jumps is contraction^j x1(0), and between jumps
    x2(t) = x1 + (x2(t_j) - x1) exp(-(t - t_j))."""
    triple = NestedTriple(C,
                          box([0, -INF, 0], [0, INF, 1], name="{x1=0, tau in [0,1]}"),
                          box([0, 0, 0], [0, 0, 1], name="{(0,0)} x [0,1]"))
    return ExampleEntry("hybrid_cascade", sys, triple, CompactRegion.box([-2, -2, 0], [2, 2, 1]), doc,
                        {"contraction": c}, {"C": C, "D": D})


REGISTRY: Dict[str, Callable[..., ExampleEntry]] = {
    "linear_cascade": _linear_cascade,
    "peaking_cascade": _peaking_cascade,
    "bouncing_ball": _bouncing_ball,
    "hybrid_cascade": _hybrid_cascade,
    "unstable_cascade": _unstable_cascade,
}

DEFAULT_PARAMS: Dict[str, Dict[str, float]] = {
    "linear_cascade": {"a": 1.0, "b": 1.0, "k": 1.0},
    "peaking_cascade": {"k": 1.0},
    "bouncing_ball": {"gravity": 1.0, "restitution": 0.5},
    "hybrid_cascade": {"contraction": 0.5},
    "unstable_cascade": {"a": 1.0},
}


def get_example(id: str, params: Optional[Mapping[str, float]] = None) -> ExampleEntry:
    """Instantiate a built-in example; unknown ids and parameter names are rejected."""
    if id not in REGISTRY:
        raise KeyError(f"unknown example {id!r}; available: {', '.join(sorted(REGISTRY))}")
    params = dict(params or {})
    unknown = set(params) - set(DEFAULT_PARAMS[id])
    if unknown:
        raise ValueError(f"unknown parameters for {id}: {sorted(unknown)}; "
                         f"accepted: {sorted(DEFAULT_PARAMS[id])}")
    return REGISTRY[id](**{k: float(v) for k, v in params.items()})


def list_examples() -> list:
    return [get_example(i).describe() for i in sorted(REGISTRY)]
