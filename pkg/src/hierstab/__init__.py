"""Simulation and sampling-based checks of hierarchical stability for hybrid systems."""

__version__ = "0.1.0"

from .core import (CompactRegion, HybridArc, HybridSystem, HybridTimeDomain, SanityReport,  # noqa: E402
                   Termination, check_basic_conditions)
from .examples import ExampleEntry, get_example, list_examples  # noqa: E402
from .hierarchy import (BasinReport, HierarchyReport, NestedTriple, RestrictedSystem,  # noqa: E402
                        arc_is_prefix, check_hierarchy, estimate_basin, restrict)
from .metrics import (KLFit, SamplePlan, StabilityQuery, StabilityReport,  # noqa: E402
                      check_forward_invariance, check_uniform_boundedness, estimate_attractivity,
                      estimate_stability, estimate_uniform_attractivity, fit_kl_bound)
from .sets import (SetOracle, affine, ball, box, distance_to, empty_set, in_inflation,  # noqa: E402
                   intersection, point, product, union, whole_space)
from .simulator import BatchItem, SimConfig, simulate, simulate_batch  # noqa: E402

__all__ = [
    "BasinReport", "BatchItem", "CompactRegion", "ExampleEntry", "HierarchyReport", "HybridArc",
    "HybridSystem", "HybridTimeDomain", "KLFit", "NestedTriple", "RestrictedSystem", "SamplePlan",
    "SanityReport", "SetOracle", "SimConfig", "StabilityQuery", "StabilityReport", "Termination",
    "affine", "arc_is_prefix", "ball", "box", "check_basic_conditions", "check_forward_invariance",
    "check_hierarchy", "check_uniform_boundedness", "distance_to", "empty_set", "estimate_attractivity",
    "estimate_basin", "estimate_stability", "estimate_uniform_attractivity", "fit_kl_bound",
    "get_example", "in_inflation", "intersection", "list_examples", "point", "product", "restrict",
    "simulate", "simulate_batch", "union", "whole_space",
]
