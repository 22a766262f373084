"""Core data model: states, distributions, transition systems, variants, witnesses.

States are tuples of integers of a fixed arity per system.  Probabilities and
variant values are either exact (``int``/``Fraction``) or binary floats; a
system declares which mode it lives in through ``TransitionSystem.exact``.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

Number = Union[int, Fraction, float]
State = Tuple[int, ...]

DEFAULT_FLOAT_TOLERANCE = 1e-9


class ModelError(ValueError):
    """Raised when a model object violates one of its invariants."""


class ArityError(ModelError):
    pass


class VariantDomainError(ModelError):
    """A variant was asked for a state outside the range it was built for."""


class UncoveredStateError(ModelError):
    """No transition is defined for a non-target state (incomplete T)."""

    def __init__(self, state: State, message: str = ""):
        super().__init__(message or f"no transition defined for non-target state {state}")
        self.state = state


def is_exact_number(x) -> bool:
    return isinstance(x, (int, Fraction)) and not isinstance(x, bool)


def as_exact(x) -> Fraction:
    """Convert to ``Fraction``; floats are refused so exact mode stays exact."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int) and not isinstance(x, bool):
        return Fraction(x)
    raise ModelError(f"non-rational value {x!r} in exact mode")


FMT_MAX_BITS = 4096


def _fmt_huge(x: Fraction) -> str:
    """Scientific rendering ``~m.mmmme+k`` of a rational too long to print exactly."""
    if x == 0:
        return "0"
    sign = "-" if x < 0 else ""
    x = abs(x)
    # scale by a power of two so the quotient fits a float, then move to base 10
    shift = x.numerator.bit_length() - x.denominator.bit_length()
    scaled = x / (Fraction(2) ** shift)
    log10 = math.log10(float(scaled)) + shift * math.log10(2)
    exp = math.floor(log10)
    mant = 10 ** (log10 - exp)
    if mant >= 9.9999995:
        mant, exp = 1.0, exp + 1
    return f"~{sign}{mant:.6f}e{exp:+d}"


def fmt_number(x: Number) -> str:
    """Exact ``n/d`` text for rationals; numbers beyond a few thousand bits are shown approximately."""
    if isinstance(x, Fraction):
        if max(x.numerator.bit_length(), x.denominator.bit_length()) > FMT_MAX_BITS:
            return _fmt_huge(x)
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    return repr(x)


# ---------------------------------------------------------------------------
# Distributions


@dataclass(frozen=True)
class Distribution:
    """Finite-support distribution over states.

    ``support`` is a tuple of ``(state, prob)`` pairs with distinct states and
    strictly positive probabilities.  Exact supports must sum to exactly one;
    float supports to within ``normalization_tolerance``.
    """

    support: Tuple[Tuple[State, Number], ...]
    normalization_tolerance: float = DEFAULT_FLOAT_TOLERANCE

    def __post_init__(self):
        if not self.support:
            raise ModelError("distribution with empty support")
        seen = set()
        arity = len(self.support[0][0])
        for s, p in self.support:
            if len(s) != arity:
                raise ArityError(f"mixed state arity in distribution: {s}")
            if s in seen:
                raise ModelError(f"duplicate support state {s}")
            seen.add(s)
            if not p > 0:
                raise ModelError(f"non-positive probability {fmt_number(p)} at {s}")
            if isinstance(p, float) and not math.isfinite(p):
                raise ModelError(f"non-finite probability at {s}")
        total = sum(p for _, p in self.support)
        if self.exact:
            if total != 1:
                raise ModelError(f"probabilities sum to {fmt_number(total)}, not 1")
        elif abs(total - 1) > self.normalization_tolerance:
            raise ModelError(f"probabilities sum to {total!r}, not 1 within tolerance")

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[State, Number]], normalization_tolerance: float = DEFAULT_FLOAT_TOLERANCE):
        """Build from possibly repeated states, merging their mass; zero weights are dropped."""
        merged: Dict[State, Number] = {}
        for s, p in pairs:
            s = tuple(s)
            if p == 0:
                continue
            merged[s] = merged.get(s, 0) + p
        return cls(tuple(merged.items()), normalization_tolerance)

    @classmethod
    def point(cls, state: State) -> "Distribution":
        return cls(((tuple(state), Fraction(1)),))

    @property
    def exact(self) -> bool:
        return all(is_exact_number(p) for _, p in self.support)

    @property
    def arity(self) -> int:
        return len(self.support[0][0])

    def states(self) -> List[State]:
        return [s for s, _ in self.support]

    def mass(self, pred: Callable[[State], bool]):
        """Total probability of the states satisfying ``pred`` (delta_{S'})."""
        return sum((p for s, p in self.support if pred(s)), 0)

    def __iter__(self):
        return iter(self.support)

    def __len__(self):
        return len(self.support)


# ---------------------------------------------------------------------------
# Transition systems and variants


@dataclass(frozen=True)
class TransitionSystem:
    """Demonic/probabilistic transition system.

    ``transitions(s)`` is only ever queried on non-target states and returns a
    non-empty list of distributions, one per demonic option.
    """

    arity: int
    is_target: Callable[[State], bool]
    transitions: Callable[[State], Sequence[Distribution]]
    initial_states: Tuple[State, ...]
    label: str = ""
    exact: bool = True

    def __post_init__(self):
        if self.arity < 1:
            raise ModelError("arity must be positive")
        if not self.initial_states:
            raise ModelError("a system needs at least one initial state")
        object.__setattr__(self, "initial_states", tuple(tuple(s) for s in self.initial_states))
        for s in self.initial_states:
            if len(s) != self.arity:
                raise ArityError(f"initial state {s} does not have arity {self.arity}")

    def step(self, state: State) -> List[Distribution]:
        """Checked access to T(s): refuses targets, validates arity and non-emptiness."""
        if self.is_target(state):
            raise ModelError(f"transitions queried on target state {state}")
        options = list(self.transitions(state))
        if not options:
            raise UncoveredStateError(state)
        for d in options:
            if d.arity != self.arity:
                raise ArityError(f"successor arity {d.arity} from {state}, expected {self.arity}")
        return options

    def with_initial(self, *states: State) -> "TransitionSystem":
        return TransitionSystem(self.arity, self.is_target, self.transitions, tuple(states), self.label, self.exact)


@dataclass(frozen=True)
class Variant:
    """Non-negative state function, zero exactly on the target set.

    ``declared_sup`` is an optional claimed upper bound, used when the variant
    serves as a refutation certificate.
    """

    eval: Callable[[State], Number]
    declared_sup: Optional[Number] = None
    arity: Optional[int] = None
    label: str = ""

    def __call__(self, state: State) -> Number:
        if self.arity is not None and len(state) != self.arity:
            raise ArityError(f"state {state} has arity {len(state)}, variant expects {self.arity}")
        return self.eval(state)

    def scaled(self, c: Number) -> "Variant":
        sup = None if self.declared_sup is None else self.declared_sup * c
        f = self.eval
        return Variant(lambda s: f(s) * c, sup, self.arity, self.label)

    def with_sup(self, bound: Number) -> "Variant":
        return Variant(self.eval, bound, self.arity, self.label)


def expected_value(delta: Distribution, v: Variant) -> Number:
    """Exp_delta V: the probability-weighted sum of V over the support."""
    if v.arity is not None and delta.arity != v.arity:
        raise ArityError(f"distribution arity {delta.arity} does not match variant arity {v.arity}")
    return sum((p * v(s) for s, p in delta.support), 0)


# ---------------------------------------------------------------------------
# Witness functions


@dataclass(frozen=True)
class MonotoneStepFn:
    """Non-increasing, strictly positive step function on the positive reals.

    With breakpoints ``b1 < ... < bk`` the function takes ``values[0]`` on
    ``(0, b1]``, ``values[i]`` on ``(b_i, b_{i+1}]`` and ``values[k]`` on
    ``(bk, inf)``.
    """

    breakpoints: Tuple[Number, ...]
    values: Tuple[Number, ...]

    def __post_init__(self):
        bps = tuple(self.breakpoints)
        vals = tuple(self.values)
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "values", vals)
        if len(vals) != len(bps) + 1:
            raise ModelError(f"{len(bps)} breakpoints need {len(bps) + 1} values, got {len(vals)}")
        for b in bps:
            if not (b > 0 and math.isfinite(b)):
                raise ModelError(f"breakpoint {fmt_number(b)} is not a positive finite real")
        for a, b in zip(bps, bps[1:]):
            if not a < b:
                raise ModelError("breakpoints must be strictly increasing")
        for x in vals:
            if not (x > 0 and math.isfinite(x)):
                raise ModelError(f"step value {fmt_number(x)} is not strictly positive and finite")
        for i, (a, b) in enumerate(zip(vals, vals[1:])):
            if b > a:
                raise ModelError(
                    f"step function increases from {fmt_number(a)} to {fmt_number(b)} "
                    f"after breakpoint {fmt_number(bps[i])}"
                )

    @classmethod
    def constant(cls, c: Number) -> "MonotoneStepFn":
        return cls((), (c,))

    def __call__(self, v: Number) -> Number:
        if not v > 0:
            raise ModelError(f"step functions are defined on positive reals only, got {fmt_number(v)}")
        return self.values[bisect_left(self.breakpoints, v)]

    @property
    def exact(self) -> bool:
        return all(is_exact_number(x) for x in self.breakpoints + self.values)

    def intervals(self):
        """Yield ``(left, right, value)``; ``right`` is ``None`` for the unbounded tail."""
        left = 0
        for b, val in zip(self.breakpoints, self.values):
            yield left, b, val
            left = b
        yield left, None, self.values[-1]

    def rescaled(self, arg_factor: Number, value_factor: Number = 1) -> "MonotoneStepFn":
        """The function ``v -> value_factor * f(v / arg_factor)``."""
        return MonotoneStepFn(
            tuple(b * arg_factor for b in self.breakpoints),
            tuple(x * value_factor for x in self.values),
        )

    def probe_points(self, beyond: Optional[Number] = None) -> List[Number]:
        """Points at which the step function is re-validated, including past ``beyond``."""
        pts = list(self.breakpoints)
        top = max([b for b in pts] + ([beyond] if beyond is not None and beyond > 0 else []) + [1])
        pts.extend([top + 1, 2 * top + 1, 1000 * top + 1])
        return pts


def pointwise_min(*fns: MonotoneStepFn) -> MonotoneStepFn:
    """Pointwise minimum of step functions, on the union of their breakpoints."""
    if not fns:
        raise ModelError("pointwise_min of no functions")
    bps = sorted(set(b for f in fns for b in f.breakpoints))
    values = [min(f(b) for f in fns) for b in bps]
    values.append(min(f.values[-1] for f in fns))
    # merge equal neighbouring pieces
    out_b: List[Number] = []
    out_v: List[Number] = [values[0]]
    for b, val in zip(bps, values[1:]):
        if val == out_v[-1]:
            continue
        out_b.append(b)
        out_v.append(val)
    return MonotoneStepFn(tuple(out_b), tuple(out_v))


@dataclass(frozen=True)
class PdWitness:
    p: MonotoneStepFn
    d: MonotoneStepFn

    def __post_init__(self):
        for x in self.p.values:
            if x > 1:
                raise ModelError(f"probability step value {fmt_number(x)} exceeds 1")


@dataclass(frozen=True)
class NablaWitness:
    nabla: MonotoneStepFn


@dataclass(frozen=True)
class RefutationWitness:
    """A bounded sub-martingale (or exact martingale) claimed to refute ACT."""

    v: Variant
    mode: str = "sub-martingale"

    def __post_init__(self):
        if self.mode not in ("sub-martingale", "exact-martingale"):
            raise ModelError(f"unknown refutation mode {self.mode!r}")
        sup = self.v.declared_sup
        if sup is None or not (sup > 0 and math.isfinite(sup)):
            raise ModelError("refutation witness needs a finite positive declared_sup")

    @property
    def bound(self) -> Number:
        return self.v.declared_sup


# ---------------------------------------------------------------------------
# Reports


PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive-window"


@dataclass
class Condition:
    name: str
    passed: bool
    worst_slack: Optional[Number] = None


@dataclass
class Counterexample:
    condition: str
    state: State
    distribution_index: Optional[int]
    lhs: Number
    rhs: Number


@dataclass
class WindowInfo:
    horizon: Number
    states_visited: int
    frontier_truncated: bool


@dataclass
class Bounds:
    escape_lower_bound: Number
    termination_lower_bound: Optional[Number]
    start_state: Optional[State] = None


@dataclass
class CheckReport:
    verdict: str
    conditions: List[Condition]
    counterexamples: List[Counterexample]
    window: WindowInfo
    bounds: Optional[Bounds] = None
    warnings: List[str] = field(default_factory=list)
    conclusion: str = ""

    def __post_init__(self):
        if self.verdict not in (PASS, FAIL, INCONCLUSIVE):
            raise ModelError(f"unknown verdict {self.verdict!r}")
        if self.verdict == FAIL and not self.counterexamples:
            raise ModelError("a failing report needs at least one counterexample")
        if self.bounds is not None and self.verdict != PASS:
            raise ModelError("bounds are only reported on a pass")

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def condition(self, name: str) -> Condition:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)


# ---------------------------------------------------------------------------
# Window enumeration


@dataclass
class Window:
    """States explored for a check at variant horizon ``horizon``.

    ``interior`` holds non-target states with V <= horizon in BFS order; these
    are the states whose transitions were expanded.  ``frontier`` holds the
    target states and the states above the horizon that were reached.
    ``pending`` holds states discovered but left unexpanded because the node
    budget ran out.
    """

    horizon: Number
    interior: Tuple[State, ...]
    frontier: Tuple[State, ...]
    pending: Tuple[State, ...]
    values: Dict[State, Number]
    transitions: Dict[State, Tuple[Distribution, ...]]
    truncated: bool
    undefined: Tuple[State, ...] = ()
    uncovered: Tuple[State, ...] = ()

    @property
    def states_visited(self) -> int:
        return len(self.interior) + len(self.frontier) + len(self.pending) + len(self.undefined)

    @property
    def conclusive(self) -> bool:
        return not self.truncated and len(self.interior) > 0

    def info(self) -> WindowInfo:
        return WindowInfo(self.horizon, self.states_visited, self.truncated)

    def max_value(self) -> Optional[Number]:
        vals = [self.values[s] for s in self.interior]
        return max(vals) if vals else None


def enumerate_window(
    sys: TransitionSystem, v: Variant, horizon: Number, node_budget: int, strict: bool = False
) -> Window:
    """Breadth-first closure of the initial states inside ``{s : V(s) <= horizon}``.

    With ``strict`` the window is ``{s : V(s) < horizon}`` instead, so states
    sitting exactly on the horizon count as escaped.  Successors of interior
    states are always evaluated, so every check over the window sees the
    variant on the full one-step image.
    """
    if not horizon > 0:
        raise ModelError("horizon must be positive")
    if node_budget <= 0:
        raise ModelError("node_budget must be positive")

    values: Dict[State, Number] = {}
    transitions: Dict[State, Tuple[Distribution, ...]] = {}
    interior: List[State] = []
    frontier: List[State] = []
    undefined: List[State] = []
    uncovered: List[State] = []
    seen = set()
    queue = deque()
    for s in sys.initial_states:
        if s not in seen:
            seen.add(s)
            queue.append(s)

    truncated = False
    while queue:
        s = queue.popleft()
        try:
            val = v(s)
        except VariantDomainError:
            undefined.append(s)
            continue
        values[s] = val
        if sys.is_target(s) or not (val < horizon if strict else val <= horizon):
            frontier.append(s)
            continue
        if len(interior) >= node_budget:
            queue.appendleft(s)
            truncated = True
            break
        interior.append(s)
        try:
            options = tuple(sys.step(s))
        except UncoveredStateError:
            uncovered.append(s)
            transitions[s] = ()
            continue
        transitions[s] = options
        for delta in options:
            for t, _ in delta.support:
                if t not in seen:
                    seen.add(t)
                    queue.append(t)

    pending = tuple(queue)
    # successors of interior states must carry a variant value even if unexpanded
    for s in pending:
        if s not in values:
            try:
                values[s] = v(s)
            except VariantDomainError:
                undefined.append(s)
    if undefined:
        truncated = True
    return Window(
        horizon=horizon,
        interior=tuple(interior),
        frontier=tuple(frontier),
        pending=pending,
        values=values,
        transitions=transitions,
        truncated=truncated,
        undefined=tuple(undefined),
        uncovered=tuple(uncovered),
    )


# ---------------------------------------------------------------------------
# Report rendering


def _jnum(x):
    if x is None:
        return None
    if isinstance(x, bool):
        return x
    return float(x)


def report_to_dict(report: CheckReport) -> dict:
    """JSON-ready view of a report; the top-level keys are a stable contract."""
    out = {
        "verdict": report.verdict,
        "conditions": [
            {"name": c.name, "passed": c.passed, "worst_slack": _jnum(c.worst_slack)} for c in report.conditions
        ],
        "counterexamples": [
            {
                "condition": c.condition,
                "state": list(c.state),
                "distribution_index": c.distribution_index,
                "lhs": _jnum(c.lhs),
                "rhs": _jnum(c.rhs),
            }
            for c in report.counterexamples
        ],
        "window": {
            "horizon": _jnum(report.window.horizon),
            "states_visited": report.window.states_visited,
            "frontier_truncated": report.window.frontier_truncated,
        },
        "bounds": None,
        "warnings": list(report.warnings),
    }
    if report.bounds is not None:
        b = report.bounds
        out["bounds"] = {
            "escape_lower_bound": _jnum(b.escape_lower_bound),
            "escape_lower_bound_exact": fmt_number(b.escape_lower_bound),
            "termination_lower_bound": _jnum(b.termination_lower_bound),
            "termination_lower_bound_exact": (
                None if b.termination_lower_bound is None else fmt_number(b.termination_lower_bound)
            ),
            "start_state": None if b.start_state is None else list(b.start_state),
        }
    if report.conclusion:
        out["conclusion"] = report.conclusion
    return out


def _short(x) -> str:
    if isinstance(x, Fraction) and (x.denominator > 10**6 or x.numerator > 10**12):
        return f"{float(x):.6g}"
    return fmt_number(x) if is_exact_number(x) else f"{x:.6g}"


def format_report(report: CheckReport, max_counterexamples: int = 5) -> str:
    """Human-readable rendering (not a stable format)."""
    w = report.window
    lines = [
        f"verdict: {report.verdict}",
        f"window: H = {_short(w.horizon)}, {w.states_visited} states visited"
        + (", frontier truncated by node budget" if w.frontier_truncated else ""),
    ]
    if report.conclusion:
        lines.append(report.conclusion)
    for c in report.conditions:
        slack = "n/a" if c.worst_slack is None else _short(c.worst_slack)
        lines.append(f"  [{'ok' if c.passed else 'FAIL'}] {c.name} (worst slack {slack})")
    for c in report.counterexamples[:max_counterexamples]:
        idx = "" if c.distribution_index is None else f", choice {c.distribution_index}"
        lines.append(f"  counterexample {c.condition}: state {c.state}{idx}: lhs {_short(c.lhs)} vs rhs {_short(c.rhs)}")
    if len(report.counterexamples) > max_counterexamples:
        lines.append(f"  ... {len(report.counterexamples) - max_counterexamples} more counterexamples")
    if report.bounds is not None:
        b = report.bounds
        lines.append(f"bounds: escape from the window is at least {_short(b.escape_lower_bound)} per attempt")
        if b.termination_lower_bound is not None:
            lines.append(
                f"bounds: from {b.start_state}, z >= {_short(b.termination_lower_bound)} (valid for this H only)"
            )
    for msg in report.warnings:
        lines.append(f"warning: {msg}")
    return "\n".join(lines)
