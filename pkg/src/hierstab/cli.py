"""Command-line front end: ``hierstab <command> --example ID ...``.

Machine-readable artifacts go to ``--out``; a one-line summary goes to stdout.
Exit codes: 0 supported, 1 falsified, 3 inconclusive, 2 bad input.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .core import CompactRegion, check_basic_conditions
from .examples import get_example, list_examples
from .hierarchy import NestedTriple, arc_is_prefix, check_hierarchy, estimate_basin, restrict
from .io import write_batch, write_json
from .metrics import (SamplePlan, StabilityQuery, check_forward_invariance,
                      check_uniform_boundedness, estimate_attractivity, estimate_stability,
                      fit_kl_bound)
from .schemas import SCHEMAS
from .sets import SetOracle, affine, ball, box, point, whole_space
from .simulator import SimConfig, simulate, simulate_batch

EXIT = {"supported": 0, "falsified": 1, "inconclusive": 3, "skipped": 3}


class UsageError(Exception):
    """Bad command-line input; reported with exit code 2."""


# -- parsing helpers -----------------------------------------------------------

def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc


def _region(text: str) -> CompactRegion:
    lo, sep, hi = text.partition(":")
    if not sep:
        raise UsageError(f"region must look like lo1,lo2:hi1,hi2, got {text!r}")
    try:
        return CompactRegion.box(_floats(lo), _floats(hi))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def parse_set(text: str, dim: int, named: dict) -> SetOracle:
    """Set from ``whole``, ``point:..``, ``box:lo:hi``, ``ball:c:r``, ``affine:n:c`` or a known name."""
    if text in named:
        return named[text]
    kind, _, rest = text.partition(":")
    parts = rest.split(":") if rest else []
    try:
        if kind == "whole":
            S = whole_space(dim)
        elif kind == "point":
            S = point(_floats(parts[0]))
        elif kind == "box":
            S = box(_floats(parts[0]), _floats(parts[1]))
        elif kind == "ball":
            S = ball(_floats(parts[0]), float(parts[1]))
        elif kind == "affine":
            S = affine(_floats(parts[0]), _floats(parts[1]))
        else:
            raise UsageError(f"unknown set {text!r}; known names: {sorted(named)}")
    except (IndexError, ValueError) as exc:
        raise UsageError(f"malformed set {text!r}: {exc}") from exc
    if S.dim != dim:
        raise UsageError(f"set {text!r} has dim {S.dim}, system has {dim}")
    return S


def _params(items: Optional[Sequence[str]]) -> dict:
    out = {}
    for item in items or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"--param expects name=value, got {item!r}")
        out[key] = float(val)
    return out


def _entry(args):
    if not args.example:
        raise UsageError("--example is required")
    try:
        return get_example(args.example, _params(args.param))
    except (KeyError, ValueError) as exc:
        raise UsageError(str(exc.args[0] if exc.args else exc)) from exc


def _named_sets(entry, args) -> dict:
    named = dict(entry.sets)
    t = entry.default_triple
    if t is not None:
        named.update({"M_e": t.M_e, "M_i": t.M_i, "M_o": t.M_o})
    dim = entry.system.dim
    for flag, key in (("m_e", "M_e"), ("m_i", "M_i"), ("m_o", "M_o")):
        val = getattr(args, flag, None)
        if val:
            named[key] = parse_set(val, dim, named)
    return named


def _triple(entry, args) -> NestedTriple:
    named = _named_sets(entry, args)
    if not all(k in named for k in ("M_e", "M_i", "M_o")):
        raise UsageError(f"{entry.id} has no default triple; pass --m-e, --m-i and --m-o")
    if not named["M_o"].is_compact:
        raise UsageError(f"innermost set {named['M_o'].name!r} must be compact")
    return NestedTriple(named["M_e"], named["M_i"], named["M_o"])


def _sim(args, base: SimConfig) -> SimConfig:
    changes = {}
    for flag, key in (("tmax", "t_max"), ("jmax", "j_max"), ("step", "step"),
                      ("event_tol", "event_tol"), ("overlap_policy", "overlap_policy"),
                      ("branch_budget", "branch_budget"), ("escape_radius", "escape_radius"),
                      ("record_every", "record_every")):
        val = getattr(args, flag, None)
        if val is not None:
            changes[key] = val
    try:
        return base.replace(**changes)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _query(args, entry) -> StabilityQuery:
    base = StabilityQuery()
    plan = SamplePlan(grid=args.grid, n_random=args.n_random, seed=args.seed)
    try:
        return StabilityQuery(
            eps_grid=tuple(_floats(args.eps)) if args.eps else base.eps_grid,
            delta_max=args.delta_max, plan=plan, sim=_sim(args, base.sim),
            region=_region(args.region) if args.region else entry.default_region,
            eps_conv=args.eps_conv, local_radius=args.local_radius)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _x0s(args, dim: int) -> np.ndarray:
    pts = [_floats(v) for v in (args.x0 or [])]
    for p in pts:
        if len(p) != dim:
            raise UsageError(f"x0 {p} has {len(p)} components, system has dim {dim}")
    return np.array(pts, dtype=float).reshape(-1, dim)


# -- output -------------------------------------------------------------------------

def _emit(args, name: str, report: dict) -> str:
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"{name}.json")
    write_json(report, path)
    meta = {"command": args.command, "argv": list(args.argv), "version": __version__,
            "created": datetime.datetime.now(datetime.timezone.utc).isoformat()}
    write_json(meta, os.path.join(args.out, f"{name}.meta.json"))
    return path


def _say(text: str) -> None:
    print(text)


# -- commands --------------------------------------------------------------------

def cmd_simulate(args) -> int:
    entry = _entry(args)
    X0 = _x0s(args, entry.system.dim)
    if X0.shape[0] == 0:
        raise UsageError("simulate needs at least one --x0")
    cfg = _sim(args, SimConfig())
    items = simulate_batch(entry.system, X0, cfg)
    write_batch(items, args.out)
    bad = [it for it in items if it.error]
    for it in items:
        ends = ",".join(a.termination.value for a in it.arcs) or it.error
        _say(f"x0={it.x0.tolist()} arcs={len(it.arcs)} termination={ends}")
    return 2 if bad else 0


def cmd_check(args) -> int:
    entry = _entry(args)
    named = _named_sets(entry, args)
    q = _query(args, entry).replace(target=_pick(named, args.target, "M_o", entry),
                                    relative_to=_pick(named, args.relative_to, None, entry))
    rep = estimate_stability(entry.system, q)
    path = _emit(args, "stability", rep.to_dict())
    _say(f"stability of {rep.target}: {rep.verdict} ({rep.samples_used} samples) -> {path}")
    return EXIT[rep.verdict]


def cmd_attract(args) -> int:
    entry = _entry(args)
    named = _named_sets(entry, args)
    q = _query(args, entry).replace(target=_pick(named, args.target, "M_o", entry),
                                    relative_to=_pick(named, args.relative_to, None, entry))
    if args.local and q.local_radius is None:
        raise UsageError("--local needs --local-radius")
    rep = estimate_attractivity(entry.system, q, global_flag=not args.local)
    path = _emit(args, "attractivity", rep.to_dict())
    _say(f"attractivity of {rep.target}: {rep.verdict} -> {path}")
    return EXIT[rep.verdict]


def cmd_invariance(args) -> int:
    entry = _entry(args)
    named = _named_sets(entry, args)
    q = _query(args, entry)
    M = _pick(named, args.set, "M_e", entry)
    rep = check_forward_invariance(entry.system, M, q.region, q.sim, q.plan)
    path = _emit(args, "invariance", rep.to_dict())
    _say(f"invariance of {M.name}: {rep.verdict} (max excursion {rep.max_excursion}) -> {path}")
    return EXIT[rep.verdict]


def cmd_bounded(args) -> int:
    entry = _entry(args)
    q = _query(args, entry)
    K = _region(args.k) if args.k else q.region
    rep = check_uniform_boundedness(entry.system, K, q.sim, q.plan)
    path = _emit(args, "boundedness", rep.to_dict())
    _say(f"uniform boundedness: {rep.verdict} (Delta={rep.delta}) -> {path}")
    return EXIT[rep.verdict]


def cmd_kl_fit(args) -> int:
    entry = _entry(args)
    named = _named_sets(entry, args)
    q = _query(args, entry)
    target = _pick(named, args.target, "M_o", entry)
    X0 = _x0s(args, entry.system.dim)
    if X0.shape[0] == 0:
        X0 = q.plan.base_points(q.region)
    arcs = [a for it in simulate_batch(entry.system, X0, q.sim) for a in it.arcs]
    try:
        fit = fit_kl_bound(arcs, target)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    path = _emit(args, "kl_fit", fit.to_dict())
    _say(f"KL envelope c={fit.c:.6g} lambda={fit.lam:.6g} residual={fit.residual:.3g} -> {path}")
    return 0


def cmd_restrict_demo(args) -> int:
    entry = _entry(args)
    triple = _triple(entry, args)
    q = _query(args, entry)
    bar = restrict(entry.system, triple.M_e, triple.M_o, args.m_bar, triple.M_i)
    X0 = _x0s(args, entry.system.dim)
    if X0.shape[0] == 0:
        X0 = q.region.sample(args.n_random, np.random.default_rng(args.seed))
    rows = []
    for x0 in X0:
        try:
            short = simulate(bar, x0, q.sim)
        except ValueError:
            rows.append({"x0": x0.tolist(), "in_restricted_domain": False})
            continue
        full = simulate(entry.system, x0, q.sim)
        rows.append({"x0": x0.tolist(), "in_restricted_domain": True,
                     "identical_prefix": all(arc_is_prefix(s, full) for s in short),
                     "restricted_termination": [a.termination.value for a in short]})
    sound = all(r.get("identical_prefix", True) for r in rows)
    report = {"M_bar": args.m_bar, "x0": [r["x0"] for r in rows], "rows": rows,
              "identical_prefix": sound,
              "restricted_termination": [r.get("restricted_termination") for r in rows],
              "flow_set": bar.flow_set.name, "jump_set": bar.jump_set.name,
              "a1": None if bar.a1 is None else bar.a1.name, "a2": bar.a2.name}
    path = _emit(args, "restriction", report)
    _say(f"restriction M_bar={args.m_bar:g}: arcs are prefixes of the original: {sound} -> {path}")
    return 0 if sound else 1


def cmd_check_hierarchy(args) -> int:
    entry = _entry(args)
    triple = _triple(entry, args)
    q = _query(args, entry)
    if args.local and q.local_radius is None:
        raise UsageError("--local needs --local-radius")
    try:
        rep = check_hierarchy(entry.system, triple, q.region, q, local=args.local)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    path = _emit(args, "hierarchy", rep.to_dict())
    iv = rep.item_verdicts
    _say(f"item1={iv['item1']} item2={iv['item2']} item3={iv['item3']} "
         f"conclusion={rep.conclusion_verdict} -> {rep.verdict} ({path})")
    return EXIT[rep.verdict]


def cmd_basin(args) -> int:
    entry = _entry(args)
    named = _named_sets(entry, args)
    q = _query(args, entry)
    M_o = _pick(named, args.target, "M_o", entry)
    M_e = _pick(named, args.relative_to, "M_e", entry)
    if not M_o.is_compact:
        raise UsageError(f"{M_o.name!r} must be compact")
    rep = estimate_basin(entry.system, M_o, M_e, q.region, q.sim, resolution=args.resolution,
                         points_per_dim=args.grid, eps_conv=args.eps_conv)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "basin.csv"), "w") as fh:
        fh.write(rep.to_csv())
    path = _emit(args, "basin", rep.to_dict())
    _say(f"basin: {rep.counts} interior consistency={rep.interior_consistency} -> {path}")
    return 3 if not rep.classes else 0


def cmd_list_examples(args) -> int:
    print(json.dumps(list_examples(), indent=2, sort_keys=True))
    return 0


def cmd_sanity(args) -> int:
    entry = _entry(args)
    rep = check_basic_conditions(entry.system, entry.default_region, seed=args.seed)
    path = _emit(args, "sanity", rep.to_dict())
    _say(f"basic conditions: {'ok' if rep.ok else 'violations'} -> {path}")
    return 0 if rep.ok else 1


def _pick(named: dict, text: Optional[str], default: Optional[str], entry) -> Optional[SetOracle]:
    if text:
        return parse_set(text, entry.system.dim, named)
    if default is None:
        return None
    if default not in named:
        raise UsageError(f"{entry.id} has no {default}; pass it explicitly")
    return named[default]


# -- parser ---------------------------------------------------------------------------

COMMANDS = {
    "simulate": (cmd_simulate, "simulate arcs from --x0 and write one CSV per branch"),
    "check": (cmd_check, "estimate stability of --target (default M_o)"),
    "attract": (cmd_attract, "estimate (global) attractivity of --target"),
    "invariance": (cmd_invariance, "check strong forward invariance of --set (default M_e)"),
    "bounded": (cmd_bounded, "check uniform boundedness from --k (default: region)"),
    "kl-fit": (cmd_kl_fit, "fit an exponential KL envelope to simulated arcs"),
    "restrict-demo": (cmd_restrict_demo, "build the restricted system and compare its arcs"),
    "check-hierarchy": (cmd_check_hierarchy, "check the three hypotheses and the conclusion"),
    "basin": (cmd_basin, "classify a lattice of initial conditions"),
    "list-examples": (cmd_list_examples, "print the built-in examples as JSON"),
    "sanity": (cmd_sanity, "sampled sanity check of the system data"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("system")
    g.add_argument("--example", help="example id (see list-examples)")
    g.add_argument("--param", action="append", metavar="NAME=VALUE", help="example parameter")
    g.add_argument("--m-e", help="outer set override")
    g.add_argument("--m-i", help="intermediate set override")
    g.add_argument("--m-o", help="compact attractor override")
    g.add_argument("--out", default="hierstab_out", help="output directory")
    g.add_argument("--seed", type=int, default=0, help="seed for all random sampling")
    s = common.add_argument_group("simulation")
    s.add_argument("--tmax", type=float)
    s.add_argument("--jmax", type=int)
    s.add_argument("--step", type=float)
    s.add_argument("--event-tol", type=float)
    s.add_argument("--overlap-policy", choices=["jump_priority", "flow_priority", "branch_both"])
    s.add_argument("--branch-budget", type=int)
    s.add_argument("--escape-radius", type=float)
    s.add_argument("--record-every", type=int)
    e = common.add_argument_group("estimation")
    e.add_argument("--eps", help="comma-separated ascending eps grid")
    e.add_argument("--delta-max", type=float)
    e.add_argument("--grid", type=int, default=21, help="lattice points per dimension")
    e.add_argument("--n-random", type=int, default=200, help="random samples")
    e.add_argument("--eps-conv", type=float, default=1e-4)
    e.add_argument("--local-radius", type=float)
    e.add_argument("--local", action="store_true", help="local attractivity hypotheses")
    e.add_argument("--region", help="box region lo1,lo2:hi1,hi2 (default: example region)")
    e.add_argument("--target", help="target set (name or spec)")
    e.add_argument("--relative-to", help="restrict initial conditions to this set")

    parser = argparse.ArgumentParser(prog="hierstab", description=__doc__.splitlines()[0])
    parser.add_argument("--schema", action="store_true", help="print report JSON schemas and exit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command")
    for name, (fn, help_) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=fn)
        if name in ("simulate", "kl-fit", "restrict-demo"):
            p.add_argument("--x0", action="append", help="initial condition a,b,... (repeatable)")
        if name == "invariance":
            p.add_argument("--set", help="set to test (default M_e)")
        if name == "bounded":
            p.add_argument("--k", help="box K as lo1,lo2:hi1,hi2")
        if name == "restrict-demo":
            p.add_argument("--m-bar", type=float, default=10.0)
        if name == "basin":
            p.add_argument("--resolution", type=float, default=0.0, help="lattice spacing")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    if args.schema:
        print(json.dumps(SCHEMAS, indent=2, sort_keys=True))
        return 0
    if not args.command:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"hierstab {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
