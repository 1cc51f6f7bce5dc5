"""JSON schemas of the reports written by the command-line tool."""

from __future__ import annotations

_VERDICT = {"enum": ["supported", "falsified", "inconclusive", "skipped"]}
_NUM_OR_NULL = {"type": ["number", "null"]}
_VEC = {"type": "array", "items": {"type": "number"}}

SIM_CONFIG = {
    "type": "object",
    "required": ["t_max", "j_max", "step", "event_tol", "overlap_policy", "branch_budget",
                 "zeno_window", "escape_radius", "record_every", "set_tol"],
    "properties": {
        "t_max": {"type": "number"}, "j_max": {"type": "integer"}, "step": {"type": "number"},
        "event_tol": {"type": "number"},
        "overlap_policy": {"enum": ["jump_priority", "flow_priority", "branch_both"]},
        "branch_budget": {"type": "integer"}, "zeno_window": {"type": "array"},
        "escape_radius": {"type": "number"}, "record_every": {"type": "integer"},
        "set_tol": {"type": "number"},
    },
}

STABILITY = {
    "type": "object",
    "required": ["property", "target", "relative_to", "entries", "verdict", "samples_used",
                 "seed", "sim_config"],
    "properties": {
        "property": {"enum": ["stability", "attractivity", "global_attractivity"]},
        "target": {"type": "string"},
        "relative_to": {"type": ["string", "null"]},
        "entries": {"type": "array", "items": {
            "type": "object",
            "required": ["eps", "delta", "verdict", "witness_x0"],
            "properties": {"eps": {"type": "number"}, "delta": _NUM_OR_NULL, "verdict": _VERDICT,
                           "witness_x0": {"type": ["array", "null"]},
                           "resolution": _NUM_OR_NULL, "samples": {"type": "integer"}},
        }},
        "verdict": _VERDICT,
        "samples_used": {"type": "integer"},
        "seed": {"type": "integer"},
        "sim_config": SIM_CONFIG,
        "details": {"type": "object"},
    },
}

UNIFORM_ATTRACTIVITY = {
    "type": "object",
    "required": ["property", "T", "eps", "verdict", "samples_used"],
    "properties": {"property": {"const": "uniform_attractivity"}, "T": _NUM_OR_NULL,
                   "eps": {"type": "number"}, "verdict": _VERDICT,
                   "samples_used": {"type": "integer"}, "witness": {"type": ["object", "null"]}},
}

INVARIANCE = {
    "type": "object",
    "required": ["property", "set", "max_excursion", "verdict", "samples_used", "tol", "witnesses"],
    "properties": {"property": {"const": "strong_forward_invariance"}, "set": {"type": "string"},
                   "max_excursion": _NUM_OR_NULL, "verdict": _VERDICT,
                   "samples_used": {"type": "integer"}, "tol": {"type": "number"},
                   "witnesses": {"type": "array"}},
}

BOUNDEDNESS = {
    "type": "object",
    "required": ["property", "Delta", "sup_norm", "verdict", "samples_used"],
    "properties": {"property": {"const": "uniform_boundedness"}, "Delta": _NUM_OR_NULL,
                   "sup_norm": {"type": "number"}, "verdict": _VERDICT,
                   "samples_used": {"type": "integer"}, "witness": {"type": ["object", "null"]}},
}

KL_FIT = {
    "type": "object",
    "required": ["c", "lambda", "residual", "n_arcs", "degenerate", "envelope_violation"],
    "properties": {"c": {"type": "number"}, "lambda": {"type": "number"},
                   "residual": {"type": "number"}, "n_arcs": {"type": "integer"},
                   "degenerate": {"type": "boolean"}, "envelope_violation": {"type": "number"}},
}

BASIN = {
    "type": "object",
    "required": ["property", "resolution", "lattice", "n_points", "counts", "consistency",
                 "interior_consistency", "verdict", "region", "sim_config"],
    "properties": {
        "property": {"const": "basin"}, "resolution": {"type": "number"},
        "lattice": {"type": "array", "items": {"type": "integer"}},
        "n_points": {"type": "integer"}, "counts": {"type": "object"},
        "consistency": _NUM_OR_NULL, "interior_consistency": _NUM_OR_NULL, "verdict": _VERDICT,
        "region": {"type": "object"}, "sim_config": SIM_CONFIG,
        "grid": {"type": "array", "items": {
            "type": "object", "required": ["x0", "class"],
            "properties": {"x0": _VEC, "class": {"enum": ["converging", "bounded_nonconverging",
                                                          "unbounded", "inconclusive"]}}}},
    },
}

_ITEM_PAIR = {"type": "object", "required": ["verdict"],
              "properties": {"stability": STABILITY, "attractivity": STABILITY, "verdict": _VERDICT}}

HIERARCHY = {
    "type": "object",
    "required": ["system", "triple", "region", "seed", "item1", "item2", "item3", "conclusion",
                 "kl", "basin", "verdict"],
    "properties": {
        "system": {"type": "string"},
        "triple": {"type": "object", "required": ["M_e", "M_i", "M_o"]},
        "region": {"type": "object"}, "seed": {"type": "integer"},
        "item1": INVARIANCE, "item2": _ITEM_PAIR, "item3": _ITEM_PAIR,
        "conclusion": {"type": "object", "required": ["verdict"],
                       "properties": {"stability": STABILITY,
                                      "uniform_attractivity": UNIFORM_ATTRACTIVITY,
                                      "basin_verdict": _VERDICT, "kl_verdict": _VERDICT,
                                      "verdict": _VERDICT}},
        "kl": {"oneOf": [KL_FIT, {"type": "null"}]},
        "basin": {"oneOf": [BASIN, {"type": "null"}]},
        "verdict": _VERDICT,
    },
}

SANITY = {
    "type": "object",
    "required": ["n_samples", "ok", "violations", "selection_bounds", "not_verified"],
}

RESTRICTION = {
    "type": "object",
    "required": ["M_bar", "x0", "identical_prefix", "restricted_termination"],
}

SIMULATION_INDEX = {
    "type": "array",
    "items": {"type": "object", "required": ["x0", "n_arcs", "termination", "files"]},
}

EXAMPLES = {
    "type": "array",
    "items": {"type": "object", "required": ["id", "params", "description"]},
}

SCHEMAS = {
    "stability": STABILITY,
    "attractivity": STABILITY,
    "uniform_attractivity": UNIFORM_ATTRACTIVITY,
    "invariance": INVARIANCE,
    "boundedness": BOUNDEDNESS,
    "kl_fit": KL_FIT,
    "basin": BASIN,
    "hierarchy": HIERARCHY,
    "sanity": SANITY,
    "restriction": RESTRICTION,
    "simulation_index": SIMULATION_INDEX,
    "examples": EXAMPLES,
}
