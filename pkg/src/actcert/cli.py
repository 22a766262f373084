"""Command-line front end.

Exit codes: 0 for a pass (or a refutation that holds), 1 for a failed
check, 2 for an inconclusive window and 3 for usage, parse or input errors.
A target is either a path to a ``.acts`` file or ``gallery:NAME``; gallery
targets also supply default horizons, budgets and numeric modes.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional

from actcert import gallery
from actcert.checker import CheckConfig, check_nabla_rule, check_pd_rule
from actcert.lggscan import ScanConfig, scan
from actcert.model import (
    FAIL,
    INCONCLUSIVE,
    PASS,
    ModelError,
    NablaWitness,
    PdWitness,
    RefutationWitness,
    TransitionSystem,
    Variant,
    format_report,
    report_to_dict,
)
from actcert.procdsl import DslError, compile_function, eval_constant, load, step_to_piecewise_text
from actcert.refute import refute_act
from actcert.sim import ADVERSARIES, SimConfig, exact_reachability, simulate, write_trace
from actcert.synth import (
    TreeSpec,
    birth_death_martingale,
    foster_construction,
    pd_witness_from_nabla,
    spline_variant,
    tree_variant,
)

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_USAGE = 0, 1, 2, 3
VERDICT_EXIT = {PASS: EXIT_PASS, FAIL: EXIT_FAIL, INCONCLUSIVE: EXIT_INCONCLUSIVE}
GALLERY_PREFIX = "gallery:"


class UsageError(Exception):
    """Bad input detected after argument parsing; reported with exit code 3."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class Target:
    name: str
    system: TransitionSystem
    variant: Optional[Variant]
    pd: Optional[PdWitness] = None
    nabla: Optional[NablaWitness] = None
    refutation: Optional[RefutationWitness] = None
    horizon: Optional[object] = None
    node_budget: Optional[int] = None
    mode: str = "exact"


def load_target(text: str) -> Target:
    if text.startswith(GALLERY_PREFIX):
        name = text[len(GALLERY_PREFIX):]
        try:
            b = gallery.build(name)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
        return Target(b.name, b.system, b.variant, b.pd, b.nabla, b.refutation, b.horizon, b.node_budget, b.mode)
    try:
        with open(text, encoding="utf-8") as fh:
            source = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {text}: {exc.strerror}") from None
    try:
        e = load(source)
    except DslError as exc:
        raise UsageError(f"{text}: {exc}") from None
    return Target(e.system.label, e.system, e.variant, e.pd, e.nabla)


def parse_number(text: str):
    """Rational literal, ``inf``, or a constant DSL expression such as ``2 - 1/pow(2, 999)``."""
    t = text.strip()
    try:
        return Fraction(t)
    except (ValueError, ZeroDivisionError):
        pass
    if t.lower() in ("inf", "infinity"):
        return math.inf
    try:
        value = eval_constant(t)
    except DslError as exc:
        raise UsageError(f"cannot read number {text!r}: {exc}") from None
    if isinstance(value, bool):
        raise UsageError(f"{text!r} is not a number")
    return Fraction(value)


def parse_state(text: str, arity: int):
    try:
        state = tuple(int(x) for x in text.replace(" ", "").split(","))
    except ValueError:
        raise UsageError(f"cannot read state {text!r}; expected comma-separated integers") from None
    if len(state) != arity:
        raise UsageError(f"state {text!r} has {len(state)} coordinates; the system has {arity}")
    return state


def _mode(args, target: Target) -> str:
    if args.exact:
        return "exact"
    if args.float:
        return "float"
    return target.mode


def _horizon(args, target: Target):
    if args.horizon is not None:
        return parse_number(args.horizon)
    if target.horizon is None:
        raise UsageError("--horizon is required for file targets")
    return target.horizon


def _config(args, target: Target, horizon) -> CheckConfig:
    mode = _mode(args, target)
    if mode == "float" and isinstance(horizon, Fraction):
        horizon = float(horizon)
    budget = args.budget if args.budget is not None else (target.node_budget or 100_000)
    tol = None if args.tol is None else float(args.tol)
    try:
        return CheckConfig(horizon, budget, tol, mode)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _emit_report(report, as_json: bool, extra: Optional[dict] = None) -> int:
    if as_json:
        doc = report_to_dict(report)
        if extra:
            doc.update(extra)
        print(json.dumps(doc, indent=2))
    else:
        print(format_report(report))
    return VERDICT_EXIT[report.verdict]


# ---------------------------------------------------------------------------
# subcommands


def cmd_check(args) -> int:
    target = load_target(args.target)
    if target.variant is None:
        raise UsageError(f"{target.name}: no variant given")
    rule = args.rule or ("pd" if target.pd is not None else "nabla" if target.nabla is not None else "pd")
    if rule == "pd" and target.pd is None:
        raise UsageError(f"{target.name}: no p,d witness given; nothing to check with --rule pd")
    if rule == "nabla" and target.nabla is None:
        raise UsageError(f"{target.name}: no nabla witness given; nothing to check with --rule nabla")
    cfg = _config(args, target, _horizon(args, target))
    system = target.system
    try:
        if rule == "pd":
            report = check_pd_rule(system, target.variant, target.pd, cfg)
        else:
            report = check_nabla_rule(system, target.variant, target.nabla, cfg)
    except (DslError, ModelError) as exc:
        raise UsageError(f"{target.name}: {exc}") from None
    return _emit_report(report, args.json, {"system": target.name, "rule": rule})


def cmd_refute(args) -> int:
    target = load_target(args.target)
    if target.variant is None:
        raise UsageError(f"{target.name}: no variant given")
    if args.bound is not None:
        bound = parse_number(args.bound)
    elif target.refutation is not None:
        bound = target.refutation.bound
    else:
        raise UsageError("--bound is required")
    if args.exact_martingale:
        mode = "exact-martingale"
    elif args.bound is None and target.refutation is not None:
        mode = target.refutation.mode
    else:
        mode = "sub-martingale"
    try:
        witness = RefutationWitness(target.variant.with_sup(bound), mode)
    except ModelError as exc:
        raise UsageError(str(exc)) from None
    horizon = parse_number(args.horizon) if args.horizon is not None else (target.horizon or bound)
    cfg = _config(args, target, horizon)
    system = target.system
    try:
        report = refute_act(system, witness, cfg)
    except (DslError, ModelError) as exc:
        raise UsageError(f"{target.name}: {exc}") from None
    return _emit_report(report, args.json, {"system": target.name, "mode": mode})


def cmd_simulate(args) -> int:
    target = load_target(args.target)
    start = parse_state(args.start, target.system.arity) if args.start else target.system.initial_states[0]
    horizon = parse_number(args.horizon) if args.horizon is not None else math.inf
    if horizon != math.inf and target.variant is None:
        raise UsageError("--horizon needs a variant")
    script = ()
    if args.script:
        try:
            script = tuple(int(x) for x in args.script.split(","))
        except ValueError:
            raise UsageError("--script expects comma-separated option indices") from None
    try:
        cfg = SimConfig(
            args.trials, horizon, args.max_steps, args.adversary, script, args.seed, args.closed_window
        )
        result = simulate(target.system, target.variant, cfg, start)
    except (ValueError, DslError) as exc:
        raise UsageError(str(exc)) from None
    doc = {"system": target.name, "start": list(start), **result.to_dict()}
    if args.oracle:
        if horizon == math.inf:
            raise UsageError("--oracle needs a finite --horizon")
        try:
            r = exact_reachability(target.system, target.variant, horizon, start, closed_window=args.closed_window)
        except (ValueError, ModelError) as exc:
            raise UsageError(f"oracle: {exc}") from None
        doc["oracle_z_min"] = float(r.z_min)
        doc["oracle_method"] = r.method
    if args.trace:
        write_trace(result, args.trace)
    if args.json:
        print(json.dumps(doc, indent=2))
    else:
        print(f"{target.name} from {start}: {result.trials} trials")
        print(f"  target {result.hits_target}, escaped {result.escaped_high}, still running {result.still_running}")
        print(f"  z_hat = {result.z_hat:.6g} +/- {result.half_width:.3g}")
        print(f"  steps: mean {result.mean_steps:.6g}, max {result.max_steps}")
        if "oracle_z_min" in doc:
            print(f"  exact z_min = {doc['oracle_z_min']:.12g} ({doc['oracle_method']})")
        for w in result.warnings:
            print(f"  warning: {w}")
    return EXIT_PASS


def _write_table(rows, header, path):
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if path:
            fh.close()


def _fmt_cell(x):
    if isinstance(x, Fraction):
        return str(x)
    return repr(x) if isinstance(x, float) else str(x)


def _sequence_rows(v: Variant, n_max: int, start: int = 0):
    return [(n, _fmt_cell(v((n,)))) for n in range(start, n_max + 1)]


def _function_of(expr: str, var: str):
    try:
        return compile_function(expr, [var])
    except DslError as exc:
        raise UsageError(f"cannot read expression {expr!r}: {exc}") from None


def cmd_synthesize(args) -> int:
    kind = args.kind
    try:
        if kind == "tree":
            c = _function_of(args.children, "d")
            v = tree_variant(TreeSpec(lambda d: int(c(d))), args.depth)
            _write_table(_sequence_rows(v, args.depth), ["state", "V"], args.csv)
        elif kind == "birthdeath":
            q = _function_of(args.q, "n")
            v = birth_death_martingale(q, args.max_n)
            _write_table(_sequence_rows(v, args.max_n), ["state", "V"], args.csv)
        elif kind == "spline":
            e = _function_of(args.escape, "n")
            v = spline_variant(e, args.max_n)
            _write_table(_sequence_rows(v, args.max_n), ["state", "V"], args.csv)
        elif kind == "foster":
            target = load_target(args.target)
            res = foster_construction(target.system, args.t_max, args.i_max)
            rows = [(0, 0.0, 0.0, 0.0, 0.0)]
            for i in range(args.i_max):
                lo, hi = res.interval[i]
                rows.append((i + 1, repr(float(res.values[i])), repr(float(lo)), repr(float(hi)),
                             repr(float(res.smart_excess_bound[i]))))
            _write_table(rows, ["state", "V", "V_low", "V_high", "smart_excess_bound"], args.csv)
        else:
            target = load_target(args.target)
            if target.nabla is None:
                raise UsageError(f"{target.name}: no nabla witness to convert")
            vmax = parse_number(args.vmax) if args.vmax is not None else target.horizon
            if vmax is None:
                raise UsageError("--vmax is required for file targets")
            pd = pd_witness_from_nabla(target.nabla, vmax)
            print(f"pd : p = {step_to_piecewise_text(pd.p)}, d = {step_to_piecewise_text(pd.d)}")
    except (ValueError, DslError, ModelError) as exc:
        raise UsageError(str(exc)) from None
    return EXIT_PASS


def cmd_scan(args) -> int:
    try:
        cfg = ScanConfig(args.max, args.function, args.radius, args.chunk, args.dims, seed=args.seed, threads=args.threads)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = scan(cfg)
    if args.csv:
        report.write_csv(args.csv)
    summary = report.summary()
    if args.json:
        print(json.dumps(summary, indent=2))
    else:
        print(f"g = {cfg.function}, N = {cfg.N}, dims = {cfg.dims}: {report.points_scanned} points scanned")
        print(f"  violations: {len(report.violations)}, marginal: {len(report.marginals)}, excluded: {len(report.excluded)}")
        print(f"  min slack {report.min_slack:.6g} at {report.min_slack_at}")
        for p, s in report.violations[:10]:
            print(f"  violation at {p}: slack {s:.6g}")
    return EXIT_FAIL if report.violations else EXIT_PASS


def cmd_examples(args) -> int:
    if args.action == "list":
        for name in gallery.names():
            b = gallery.build(name)
            form = "dsl" if b.dsl else "programmatic-only"
            print(f"{name:24s} {b.expected:15s} {form:18s} {b.description}")
        return EXIT_PASS
    if not args.name:
        raise UsageError("examples emit needs a bundle name")
    try:
        b = gallery.build(args.name)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    if b.dsl is None:
        print(f"# {b.name}: programmatic-only; use the target {GALLERY_PREFIX}{b.name}")
    else:
        sys.stdout.write(b.dsl)
    return EXIT_PASS


# ---------------------------------------------------------------------------
# argument parsing


def _add_check_options(p):
    p.add_argument("--horizon", help="window horizon H (rational, 'inf' or constant expression)")
    p.add_argument("--budget", type=int, help="node budget for window enumeration")
    p.add_argument("--tol", help="float-mode tolerance")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--float", action="store_true", help="floating-point arithmetic with tolerance")
    p.add_argument("--json", action="store_true", help="machine-readable report on stdout")
    return g


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="actcert", description="Check, synthesize and refute almost-certain termination certificates.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("check", help="check a p,d or nabla certificate on a window")
    p.add_argument("target", help=".acts file or gallery:NAME")
    p.add_argument("--rule", choices=("pd", "nabla"))
    g = _add_check_options(p)
    g.add_argument("--exact", action="store_true", help="exact rational arithmetic (default for files)")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("refute", help="check a bounded sub-martingale refutation")
    p.add_argument("target")
    p.add_argument("--bound", help="declared upper bound B of the variant")
    p.add_argument("--exact-martingale", "--exact-mart", dest="exact_martingale", action="store_true",
                   help="require an exact martingale instead of a sub-martingale")
    g = _add_check_options(p)
    g.add_argument("--exact", action="store_true", help="exact rational arithmetic")
    p.set_defaults(func=cmd_refute)

    p = sub.add_parser("simulate", help="Monte Carlo runs with an escape horizon")
    p.add_argument("target")
    p.add_argument("--from", dest="start", help="start state, comma-separated")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--horizon", help="escape when V reaches H")
    p.add_argument("--closed-window", action="store_true", help="escape only when V exceeds H")
    p.add_argument("--max-steps", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--adversary", choices=ADVERSARIES, default="uniform")
    p.add_argument("--script", help="option indices for the scripted adversary, comma-separated")
    p.add_argument("--trace", help="write a per-trial CSV trace")
    p.add_argument("--oracle", action="store_true", help="also solve the window exactly")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("synthesize", help="closed-form variants and witness conversions")
    ks = p.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    k = ks.add_parser("tree", help="radially symmetric tree variant")
    k.add_argument("--children", required=True, help="children count as an expression in d")
    k.add_argument("--depth", type=int, default=16)
    k.add_argument("--csv")
    k = ks.add_parser("birthdeath", help="exact martingale of a birth-death chain")
    k.add_argument("--q", required=True, help="down-step probability as an expression in n")
    k.add_argument("--max-n", type=int, default=20)
    k.add_argument("--csv")
    k = ks.add_parser("spline", help="spline variant from escape probabilities")
    k.add_argument("--escape", required=True, help="escape probability as an expression in n")
    k.add_argument("--max-n", type=int, default=20)
    k.add_argument("--csv")
    k = ks.add_parser("foster", help="Foster variant from first-passage probabilities")
    k.add_argument("target", nargs="?", default=GALLERY_PREFIX + "symmetric-walk")
    k.add_argument("--t-max", type=int, default=10_000)
    k.add_argument("--i-max", type=int, default=20)
    k.add_argument("--csv")
    k = ks.add_parser("pd-from-nabla", help="p,d witness derived from a nabla witness")
    k.add_argument("target")
    k.add_argument("--vmax", help="largest variant value the witness must cover")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("scan-lgg", help="grid scan of the radial super-martingale inequality")
    p.add_argument("--max", type=int, default=1000, help="largest |coordinate|")
    p.add_argument("--function", choices=("log", "loglog"), default="loglog")
    p.add_argument("--dims", type=int, choices=(2, 3), default=2)
    p.add_argument("--radius", type=float, default=2.0, help="exclusion radius for squared distances")
    p.add_argument("--chunk", type=int, default=64)
    p.add_argument("--threads", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", help="write violations and marginal points")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("examples", help="list or emit the bundled examples")
    p.add_argument("action", choices=("list", "emit"))
    p.add_argument("name", nargs="?")
    p.set_defaults(func=cmd_examples)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"actcert: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
