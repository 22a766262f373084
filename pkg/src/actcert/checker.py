"""Window-relative checking of the p,d rule and the nabla rule.

Every check enumerates the window ``S_H`` (non-target states with variant at
most ``H`` reachable from the initial states), evaluates the relevant
inequality at every interior state and every demonic option there, and
summarizes the result in a ``CheckReport``.  A failure always comes with a
concrete counterexample; a window cut short by the node budget never passes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

from actcert.model import (
    DEFAULT_FLOAT_TOLERANCE,
    FAIL,
    INCONCLUSIVE,
    PASS,
    Bounds,
    CheckReport,
    Condition,
    Counterexample,
    ModelError,
    MonotoneStepFn,
    NablaWitness,
    Number,
    PdWitness,
    State,
    TransitionSystem,
    Variant,
    Window,
    enumerate_window,
    is_exact_number,
)

MAX_COUNTEREXAMPLES_PER_CONDITION = 50


@dataclass(frozen=True)
class CheckConfig:
    """Window horizon, node budget and numeric mode for a check.

    ``tolerance`` defaults to 0 in exact mode and ``1e-9`` in float mode; a
    non-zero tolerance in exact mode is rejected.
    """

    horizon: Number
    node_budget: int = 100_000
    tolerance: Optional[float] = None
    mode: str = "exact"

    def __post_init__(self):
        if self.mode not in ("exact", "float"):
            raise ValueError(f"mode must be 'exact' or 'float', not {self.mode!r}")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.node_budget <= 0:
            raise ValueError("node_budget must be positive")
        tol = self.tolerance
        if tol is None:
            tol = 0 if self.mode == "exact" else DEFAULT_FLOAT_TOLERANCE
        if tol < 0:
            raise ValueError("tolerance must be non-negative")
        if self.mode == "exact" and tol != 0:
            raise ValueError("exact mode requires tolerance 0")
        object.__setattr__(self, "tolerance", tol)

    @property
    def exact(self) -> bool:
        return self.mode == "exact"


def _guard(x, cfg: CheckConfig, what: str):
    if cfg.exact and not is_exact_number(x):
        raise ModelError(f"{what} {x!r} is not rational; use float mode")
    return x


class _Tally:
    """Accumulates the worst slack and the counterexamples of one condition."""

    def __init__(self, name: str):
        self.name = name
        self.worst: Optional[Number] = None
        self.cex: List[Counterexample] = []
        self.failed = False

    def record(self, slack, tol, state, idx, lhs, rhs):
        if self.worst is None or slack < self.worst:
            self.worst = slack
        if slack < -tol:
            self.failed = True
            if len(self.cex) < MAX_COUNTEREXAMPLES_PER_CONDITION:
                self.cex.append(Counterexample(self.name, state, idx, lhs, rhs))

    def condition(self) -> Condition:
        return Condition(self.name, not self.failed, self.worst)


def _expect(window: Window, delta, cfg: CheckConfig):
    """Expected variant over ``delta`` using the window's cached values; None if undefined."""
    total = 0
    for t, p in delta.support:
        if t not in window.values:
            return None
        total += _guard(p, cfg, "probability") * window.values[t]
    return total


def _verdict(tallies: Sequence[_Tally], window: Window) -> str:
    if any(t.failed for t in tallies):
        return FAIL
    if not window.conclusive or window.uncovered:
        return INCONCLUSIVE
    return PASS


def _window_warnings(window: Window) -> List[str]:
    out = []
    if window.uncovered:
        out.append(
            f"{len(window.uncovered)} non-target state(s) have no transition defined, first {window.uncovered[0]}"
        )
    if window.undefined:
        out.append(f"variant undefined at {len(window.undefined)} state(s), first {window.undefined[0]}")
    if not window.interior:
        out.append("no non-target state with V <= H is reachable; nothing was checked")
    if window.truncated and not window.undefined:
        out.append("node budget exhausted before the window closed")
    return out


def _report(tallies: Sequence[_Tally], window: Window, bounds=None, warnings=()) -> CheckReport:
    verdict = _verdict(tallies, window)
    cex = [c for t in tallies for c in t.cex]
    return CheckReport(
        verdict=verdict,
        conditions=[t.condition() for t in tallies],
        counterexamples=cex,
        window=window.info(),
        bounds=bounds if verdict == PASS else None,
        warnings=_window_warnings(window) + list(warnings),
    )


# ---------------------------------------------------------------------------
# Per-condition scans over an enumerated window


def _scan_wellformed(sys: TransitionSystem, window: Window, cfg: CheckConfig) -> _Tally:
    tally = _Tally("wellformed")
    for s, val in window.values.items():
        _guard(val, cfg, "variant value")
        if isinstance(val, float) and not math.isfinite(val):
            tally.record(-math.inf, 0, s, None, val, 0)
            continue
        if sys.is_target(s):
            tally.record(-abs(val), 0, s, None, val, 0)
        else:
            # strict positivity: slack is V itself, zero counts as a failure
            if val > 0:
                tally.record(val, 0, s, None, val, 0)
            else:
                tally.failed = True
                tally.worst = val if tally.worst is None else min(tally.worst, val)
                if len(tally.cex) < MAX_COUNTEREXAMPLES_PER_CONDITION:
                    tally.cex.append(Counterexample("wellformed", s, None, val, 0))
    return tally


def _scan_smart(window: Window, cfg: CheckConfig) -> _Tally:
    tally = _Tally("supermartingale")
    for s in window.interior:
        vs = window.values[s]
        for i, delta in enumerate(window.transitions[s]):
            e = _expect(window, delta, cfg)
            if e is None:
                continue
            tally.record(vs - e, cfg.tolerance, s, i, e, vs)
    return tally


def _scan_progress(window: Window, w: PdWitness, cfg: CheckConfig) -> _Tally:
    tally = _Tally("progress")
    for s in window.interior:
        vs = window.values[s]
        if not vs > 0:
            continue
        dv = _guard(w.d(vs), cfg, "d value")
        pv = _guard(w.p(vs), cfg, "p value")
        level = vs - dv
        for i, delta in enumerate(window.transitions[s]):
            if any(t not in window.values for t, _ in delta.support):
                continue
            mass = sum((p for t, p in delta.support if window.values[t] <= level), 0)
            tally.record(mass - pv, cfg.tolerance, s, i, mass, pv)
    return tally


def _scan_monotone(fns: Sequence[Tuple[str, MonotoneStepFn]], beyond, upper_one=("p",)) -> _Tally:
    """Re-validate step functions on probe points, including points past the window."""
    tally = _Tally("witness-monotone")
    for name, fn in fns:
        pts = sorted(set(fn.probe_points(beyond)))
        prev = None
        for x in pts:
            y = fn(x)
            ok = y > 0 and (prev is None or y <= prev) and (name not in upper_one or y <= 1)
            slack = 0 if ok else -1
            tally.record(slack, 0, (), None, y, prev if prev is not None else y)
            prev = y
    if tally.worst is None:
        tally.worst = 0
    return tally


def _scan_nabla(window: Window, w: NablaWitness, cfg: CheckConfig) -> _Tally:
    tally = _Tally("nabla")
    for s in window.interior:
        vs = window.values[s]
        if not vs > 0:
            continue
        rhs = vs - _guard(w.nabla(vs), cfg, "nabla value")
        for i, delta in enumerate(window.transitions[s]):
            e = _expect(window, delta, cfg)
            if e is None:
                continue
            tally.record(rhs - e, cfg.tolerance, s, i, e, rhs)
    return tally


def _window(sys, v, cfg, window):
    return window if window is not None else enumerate_window(sys, v, cfg.horizon, cfg.node_budget)


# ---------------------------------------------------------------------------
# Public checks


def check_variant_wellformed(sys: TransitionSystem, v: Variant, cfg: CheckConfig, window: Optional[Window] = None) -> CheckReport:
    """V is zero exactly on targets, strictly positive and finite elsewhere."""
    window = _window(sys, v, cfg, window)
    return _report([_scan_wellformed(sys, window, cfg)], window)


def check_supermartingale(sys: TransitionSystem, v: Variant, cfg: CheckConfig, window: Optional[Window] = None) -> CheckReport:
    """Exp_delta V <= V(s) for every interior state and every demonic option."""
    window = _window(sys, v, cfg, window)
    return _report([_scan_smart(window, cfg)], window)


def check_progress(sys: TransitionSystem, v: Variant, w: PdWitness, cfg: CheckConfig, window: Optional[Window] = None) -> CheckReport:
    """Every option moves mass at least p(v) to states with variant at most v - d(v)."""
    window = _window(sys, v, cfg, window)
    mono = _scan_monotone([("p", w.p), ("d", w.d)], window.max_value())
    return _report([_scan_progress(window, w, cfg), mono], window)


def check_nabla(sys: TransitionSystem, v: Variant, w: NablaWitness, cfg: CheckConfig, window: Optional[Window] = None) -> CheckReport:
    """Exp_delta V <= V(s) - nabla(V(s)) for every interior state and option."""
    window = _window(sys, v, cfg, window)
    mono = _scan_monotone([("nabla", w.nabla)], window.max_value(), upper_one=())
    return _report([_scan_nabla(window, w, cfg), mono], window)


def escape_bound(H: Number, w: PdWitness) -> Number:
    """Lower bound ``p(H) ** ceil(H / d(H))`` on escaping the window in one attempt."""
    if not H > 0:
        raise ValueError("H must be positive")
    dH = w.d(H)
    k = math.ceil(Fraction(H) / Fraction(dH)) if is_exact_number(H) and is_exact_number(dH) else math.ceil(H / dH)
    return w.p(H) ** k


def termination_lower_bound(v_start: Number, H: Number) -> Number:
    """Lower bound ``1 - V(s)/H`` on reaching a target from a start state inside the window."""
    if not v_start > 0:
        raise ValueError("start state must have positive variant")
    if v_start > H:
        raise ValueError(f"start variant {v_start} lies outside the window H = {H}")
    if is_exact_number(v_start) and is_exact_number(H):
        return 1 - Fraction(v_start) / Fraction(H)
    return 1 - v_start / H


def _bounds(sys: TransitionSystem, window: Window, H, pd: PdWitness) -> Bounds:
    start = sys.initial_states[0]
    vs = window.values.get(start)
    tl = None
    if vs is not None and 0 < vs <= H:
        tl = termination_lower_bound(vs, H)
    return Bounds(escape_bound(H, pd), tl, start)


def check_pd_rule(sys: TransitionSystem, v: Variant, w: PdWitness, cfg: CheckConfig) -> CheckReport:
    """Well-formedness, SMart and Progress on one window, with bounds on a pass."""
    window = enumerate_window(sys, v, cfg.horizon, cfg.node_budget)
    tallies = [
        _scan_wellformed(sys, window, cfg),
        _scan_smart(window, cfg),
        _scan_progress(window, w, cfg),
        _scan_monotone([("p", w.p), ("d", w.d)], window.max_value()),
    ]
    warnings = _diagnostic_warnings(sys, window, tallies[1])
    return _report(tallies, window, _bounds(sys, window, cfg.horizon, w), warnings)


def check_nabla_rule(sys: TransitionSystem, v: Variant, w: NablaWitness, cfg: CheckConfig) -> CheckReport:
    """Well-formedness and the nabla inequality; bounds come from the derived p,d witness."""
    from actcert.synth import pd_witness_from_nabla

    window = enumerate_window(sys, v, cfg.horizon, cfg.node_budget)
    tallies = [
        _scan_wellformed(sys, window, cfg),
        _scan_nabla(window, w, cfg),
        _scan_monotone([("nabla", w.nabla)], window.max_value(), upper_one=()),
    ]
    bounds = None
    if _verdict(tallies, window) == PASS:
        pd = pd_witness_from_nabla(w, cfg.horizon)
        bounds = _bounds(sys, window, cfg.horizon, pd)
    return _report(tallies, window, bounds)


# ---------------------------------------------------------------------------
# Bounded-variant diagnostic


@dataclass
class Diagnostic:
    """Realized decrease statistics over a window (heuristic, never a verdict)."""

    sup_v: Optional[Number]
    window_truncated: bool
    realized_p_near_sup: Optional[Number]
    realized_d_near_sup: Optional[Number]
    realized_p_below: Optional[Number]
    realized_d_below: Optional[Number]
    warnings: List[str] = field(default_factory=list)

    @property
    def warns(self) -> bool:
        return bool(self.warnings)


def _realized(window: Window, s: State):
    """Worst realized (p, d) at ``s`` over its options: mass of strict decrease and smallest decrease."""
    vs = window.values[s]
    p_min, d_min = None, None
    for delta in window.transitions[s]:
        mass, dmin = 0, None
        for t, p in delta.support:
            vt = window.values.get(t)
            if vt is not None and vt < vs:
                mass += p
                dec = vs - vt
                dmin = dec if dmin is None or dec < dmin else dmin
        p_min = mass if p_min is None or mass < p_min else p_min
        if dmin is not None:
            d_min = dmin if d_min is None or dmin < d_min else d_min
    return p_min, d_min


def _diagnose(window: Window, collapse_ratio: float = 0.1) -> Diagnostic:
    states = [s for s in window.interior if window.transitions.get(s)]
    if not states:
        return Diagnostic(None, window.truncated, None, None, None, None)
    vals = {s: window.values[s] for s in states}
    sup_v = max(vals.values())
    inf_v = min(vals.values())
    cut = sup_v - (sup_v - inf_v) / 10
    near, below = [], []
    for s in states:
        (near if vals[s] >= cut else below).append(_realized(window, s))

    def lo(xs, k):
        got = [x[k] for x in xs if x[k] is not None]
        return min(got) if got else None

    diag = Diagnostic(sup_v, window.truncated, lo(near, 0), lo(near, 1), lo(below, 0), lo(below, 1))
    if window.truncated and sup_v < window.horizon and below:
        for label, k, a, b in (("p", 0, diag.realized_p_near_sup, diag.realized_p_below),
                               ("d", 1, diag.realized_d_near_sup, diag.realized_d_below)):
            if a is not None and b is not None and b > 0 and a < collapse_ratio * b:
                diag.warnings.append(
                    f"variant values accumulate below {float(sup_v):.6g} < H while the realized {label} "
                    f"drops from {float(b):.3g} to {float(a):.3g} near the supremum; no strictly positive "
                    f"{label}(v) can hold there, so a bounded variant cannot certify termination"
                )
    return diag


def bounded_variant_diagnostic(sys: TransitionSystem, v: Variant, cfg: CheckConfig, window: Optional[Window] = None) -> Diagnostic:
    """Detect a variant that approaches a finite supremum while realized p or d collapses."""
    window = _window(sys, v, cfg, window)
    return _diagnose(window)


def _diagnostic_warnings(sys, window: Window, smart: _Tally) -> List[str]:
    if smart.failed or not window.truncated:
        return []
    return _diagnose(window).warnings
