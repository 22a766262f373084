"""Constructors for the example processes, each bundled with its certificate.

Every bundle records the verdict it is expected to produce: ``pd-pass`` and
``nabla-pass`` under the checker, ``refute-pass`` under the refuter, or
``no-certificate``.  Bundles whose system and certificate fit the DSL also
carry DSL source; the rest are programmatic only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Tuple

from actcert.model import (
    Distribution,
    MonotoneStepFn,
    NablaWitness,
    Number,
    PdWitness,
    RefutationWitness,
    State,
    TransitionSystem,
    Variant,
    VariantDomainError,
)
from actcert.procdsl import step_to_piecewise_text
from actcert.synth import (
    TreeSpec,
    birth_death_martingale,
    spline_variant,
    staircase_witness,
    tree_variant,
    tree_walk_system,
)

PD_PASS = "pd-pass"
NABLA_PASS = "nabla-pass"
REFUTE_PASS = "refute-pass"
NO_CERTIFICATE = "no-certificate"

HALF = Fraction(1, 2)


@dataclass(frozen=True)
class Bundle:
    name: str
    system: TransitionSystem
    variant: Optional[Variant]
    expected: str
    horizon: Number
    node_budget: int = 100_000
    mode: str = "exact"
    pd: Optional[PdWitness] = None
    nabla: Optional[NablaWitness] = None
    refutation: Optional[RefutationWitness] = None
    dsl: Optional[str] = None
    description: str = ""

    @property
    def start(self) -> State:
        return self.system.initial_states[0]


def _walk_step(s: State, q, up_shift: int = 1):
    n = s[0]
    sign = 1 if n > 0 else -1
    return Distribution((((n - sign,), q), ((n + sign * up_shift,), 1 - q)))


def _abs_variant(label: str) -> Variant:
    return Variant(lambda s: abs(s[0]), None, 1, label)


# ---------------------------------------------------------------------------
# Walks on the integers


SYMMETRIC_WALK_DSL = """\
# symmetric random walk on the integers, absorbed at 0
system symmetric_walk
var s : int
target : s == 0
rule when true :
  choice :
    1/2 -> s := s + 1
    1/2 -> s := s - 1
variant : abs(s)
pd : p = piecewise { else : 1/2 }, d = piecewise { else : 1 }
init : 1
"""


def symmetric_walk(horizon: Number = 100) -> Bundle:
    sys = TransitionSystem(
        1, lambda s: s[0] == 0, lambda s: [_walk_step(s, HALF)], ((1,),), "symmetric-walk"
    )
    pd = PdWitness(MonotoneStepFn.constant(HALF), MonotoneStepFn.constant(Fraction(1)))
    return Bundle(
        "symmetric-walk", sys, _abs_variant("|s|"), PD_PASS, horizon, pd=pd, dsl=SYMMETRIC_WALK_DSL,
        description="two-sided symmetric walk, V = |s|, p = 1/2, d = 1",
    )


DEMONIC_WALK_DSL = """\
# symmetric walk where an adversary may instead take a symmetric double step
system symmetric_walk_demonic
var s : int
target : s == 0
rule when abs(s) >= 2 :
  choice :
    1/2 -> s := s + 1
    1/2 -> s := s - 1
  choice :
    1/2 -> s := s + 2
    1/2 -> s := s - 2
rule when true :
  choice :
    1/2 -> s := s + 1
    1/2 -> s := s - 1
  choice :
    1/2 -> s := 0
    1/2 -> s := 2 * s
variant : abs(s)
pd : p = piecewise { else : 1/2 }, d = piecewise { else : 1 }
init : 1
"""


def symmetric_walk_demonic(horizon: Number = 100) -> Bundle:
    def transitions(s):
        n = s[0]
        first = _walk_step(s, HALF)
        if abs(n) >= 2:
            second = Distribution((((n + 2,), HALF), ((n - 2,), HALF)))
        else:
            second = Distribution((((0,), HALF), ((2 * n,), HALF)))
        return [first, second]

    sys = TransitionSystem(1, lambda s: s[0] == 0, transitions, ((1,),), "symmetric-walk-demonic")
    pd = PdWitness(MonotoneStepFn.constant(HALF), MonotoneStepFn.constant(Fraction(1)))
    return Bundle(
        "symmetric-walk-demonic", sys, _abs_variant("|s|"), PD_PASS, horizon, pd=pd, dsl=DEMONIC_WALK_DSL,
        description="symmetric walk with a second, also symmetric, demonic option",
    )


def log_walk_nabla(m_max: int) -> NablaWitness:
    """Step nabla with value ``log(m^2/(m^2-1))/2`` on ``(log(m-1), log m]`` for ``2 <= m <= m_max``."""
    bps = tuple(math.log(m) for m in range(2, m_max + 1))
    vals = tuple(0.5 * math.log(m * m / (m * m - 1)) for m in range(2, m_max + 2))
    return NablaWitness(MonotoneStepFn(bps, vals))


def symmetric_walk_log(max_distance: int = 100) -> Bundle:
    """Two-sided walk with ``V(n) = log(1 + |n|)``.

    At distance ``|n| = m - 1 >= 1`` the expected decrease is exactly
    ``log(m^2/(m^2-1))/2``; the step nabla takes that value on the interval
    ending at ``V = log m``.
    """
    sys = TransitionSystem(
        1, lambda s: s[0] == 0, lambda s: [_walk_step(s, 0.5)], ((1,),), "symmetric-walk-log", exact=False
    )
    v = Variant(lambda s: math.log1p(abs(s[0])), None, 1, "log(1+|s|)")
    return Bundle(
        "symmetric-walk-log", sys, v, NABLA_PASS, math.log1p(max_distance), mode="float",
        nabla=log_walk_nabla(max_distance + 1),
        description="two-sided symmetric walk, V = log(1+|s|), nabla from the exact expected decrease",
    )


def _two_minus_pow(n: int) -> Fraction:
    return 2 - Fraction(1, 2 ** (n - 1)) if n >= 1 else Fraction(0)


CONSTANT_BIAS_DSL = """\
# walk biased away from 0: one third toward, two thirds away
system constant_bias_walk
var s : int
target : s == 0
rule when s >= 1 :
  choice :
    1/3 -> s := s - 1
    2/3 -> s := s + 1
variant : 2 - 1/pow(2, s - 1)
init : 1
"""


def constant_bias_walk(depth: int = 1000) -> Bundle:
    """One-sided walk moving toward 0 with probability 1/3, refuted by ``V(n) = 2 - 2^(1-n)``."""
    q = Fraction(1, 3)
    sys = TransitionSystem(
        1, lambda s: s[0] == 0, lambda s: [_walk_step(s, q)] if s[0] >= 1 else [], ((1,),), "constant-bias-walk"
    )
    v = birth_death_martingale(lambda n: q)
    v = Variant(v.eval, Fraction(2), 1, "2 - 2^(1-s)")
    return Bundle(
        "constant-bias-walk", sys, v, REFUTE_PASS, _two_minus_pow(depth), node_budget=depth + 10,
        refutation=RefutationWitness(v, "exact-martingale"), dsl=CONSTANT_BIAS_DSL,
        description="walk biased away from 0; bounded exact martingale refutes almost-certain termination",
    )


def harmonic(n: int) -> Fraction:
    return sum((Fraction(1, k) for k in range(1, n + 1)), Fraction(0))


def harmonic_bias_walk(depth: int = 100) -> Bundle:
    """Walk stepping toward 0 with ``q_s = s/(2s+1)``, the unique choice making ``H_s`` an exact martingale."""

    def q(n):
        return Fraction(n, 2 * n + 1)

    sys = TransitionSystem(
        1, lambda s: s[0] == 0, lambda s: [_walk_step(s, q(s[0]))] if s[0] >= 1 else [], ((1,),),
        "harmonic-bias-walk",
    )
    v = birth_death_martingale(q)
    v = Variant(v.eval, None, 1, "H_s")
    hs = [harmonic(k) for k in range(1, depth + 2)]
    d = MonotoneStepFn(tuple(hs[:-1]), tuple(Fraction(1, k) for k in range(1, depth + 2)))
    pd = PdWitness(MonotoneStepFn.constant(Fraction(1, 3)), d)
    return Bundle(
        "harmonic-bias-walk", sys, v, PD_PASS, hs[depth - 1], pd=pd,
        description="walk biased away from 0 with vanishing bias; V = H_s, p = 1/3, d = 1/s",
    )


# ---------------------------------------------------------------------------
# Ribbons and runs


def _band_value(top: int, steps: int, band_len: Callable[[int], int], bottom: int) -> Fraction:
    """Variant after ``steps`` steps down from ``top``, where band ``(k-1, k]`` is crossed in ``band_len(k)`` equal steps."""
    for k in range(top, bottom, -1):
        m = band_len(k)
        if steps < m:
            return k - Fraction(steps, m)
        steps -= m
    return Fraction(bottom - steps)


def tinsel(ribbons: int = 12) -> Bundle:
    """Root branching with probability ``2^-n`` into ribbon ``n`` of ``2^n - 1`` nodes.

    The root is ``(0, 1)`` with ``V = 2`` and the target is ``(0, 0)``.
    Ribbon ``n`` starts at ``V = n`` and crosses band ``(k-1, k]`` in
    ``2^(k-1)`` steps of ``2^(1-k)`` (one step of 1 for the lowest band).
    The last ribbon takes the leftover mass ``2^(1-N)`` so the root keeps
    ``Exp V = 2 - 2^(1-N) <= 2``.
    """
    N = ribbons

    def length(n):
        return 2**n - 1

    def band(k):
        return 2 ** (k - 1)

    def is_target(s):
        return s == (0, 0)

    def transitions(s):
        n, j = s
        if n == 0:
            pairs = [((m, 1), Fraction(1, 2**m)) for m in range(1, N)]
            pairs.append(((N, 1), Fraction(1, 2 ** (N - 1))))
            return [Distribution(tuple(pairs))]
        nxt = (n, j + 1) if j < length(n) else (0, 0)
        return [Distribution.point(nxt)]

    def value(s):
        n, j = s
        if n == 0:
            if j in (0, 1):
                return Fraction(2 * j)
            raise VariantDomainError(f"{s} is not a tinsel node")
        if not (1 <= n <= N and 1 <= j <= length(n)):
            raise VariantDomainError(f"{s} is not a tinsel node")
        return _band_value(n, j - 1, band, 0)

    sys = TransitionSystem(2, is_target, transitions, ((0, 1),), "tinsel")
    p = MonotoneStepFn((Fraction(1),), (Fraction(1), HALF))
    d = MonotoneStepFn(tuple(Fraction(k) for k in range(1, N)), tuple(Fraction(1, 2 ** (k - 1)) for k in range(1, N + 1)))
    return Bundle(
        "tinsel", sys, Variant(value, None, 2, "tinsel"), PD_PASS, Fraction(N), pd=PdWitness(p, d),
        description=f"root into {N} ribbons of length 2^n - 1; infinite expected stopping time in the limit",
    )


def curtain(runs: int = 12) -> Bundle:
    """A spine that drops with probability 1/2 at each node into ever longer runs.

    Spine node ``(0, m)`` has ``V = m + 1`` and moves to run ``m`` (top
    ``V = m``) or to spine ``m + 1`` with probability 1/2 each; the last
    spine node drops for certain.  Run ``n`` has ``2^n - n`` nodes, crossing
    band ``(k-1, k]`` for ``k >= 3`` in ``2^(k-1) - 1`` steps and ``(0, 2]``
    in steps of 1.  The target is ``(0, 0)``.
    """
    M = runs

    def length(n):
        return 2**n - n

    def band(k):
        return 2 ** (k - 1) - 1 if k >= 3 else 1

    def transitions(s):
        a, b = s
        if a == 0:
            if b < M:
                return [Distribution((((b, 1), HALF), ((0, b + 1), HALF)))]
            return [Distribution.point((b, 1))]
        nxt = (a, b + 1) if b < length(a) else (0, 0)
        return [Distribution.point(nxt)]

    def value(s):
        a, b = s
        if a == 0:
            if b == 0:
                return Fraction(0)
            if 1 <= b <= M:
                return Fraction(b + 1)
            raise VariantDomainError(f"{s} is past the last spine node")
        if not (1 <= a <= M and 1 <= b <= length(a)):
            raise VariantDomainError(f"{s} is not a curtain node")
        return _band_value(a, b - 1, band, 0)

    sys = TransitionSystem(2, lambda s: s == (0, 0), transitions, ((0, 1),), "curtain")
    d_vals = [Fraction(1)] + [Fraction(1, 2 ** (k - 1) - 1) for k in range(3, M + 2)]
    d = MonotoneStepFn(tuple(Fraction(k) for k in range(2, M + 1)), tuple(d_vals))
    pd = PdWitness(MonotoneStepFn.constant(HALF), d)
    return Bundle(
        "curtain", sys, Variant(value, None, 2, "curtain"), PD_PASS, Fraction(M + 1), pd=pd,
        description=f"spine with {M} runs of length 2^n - n; infinite expected stopping time in the limit",
    )


# ---------------------------------------------------------------------------
# Splines


def spline_system(escape: Callable[[int], Fraction], label: str) -> TransitionSystem:
    def transitions(s):
        n = s[0]
        if n < 1:
            return []
        e = escape(n)
        return [Distribution((((0,), e), ((n + 1,), 1 - e)))]

    return TransitionSystem(1, lambda s: s[0] == 0, transitions, ((1,),), label)


def _spline_dsl(name: str, escape_expr: str, variant_expr: str, witness: str) -> str:
    return (
        f"system {name}\n"
        "var n : int\n"
        "target : n == 0\n"
        "rule when n >= 1 :\n"
        "  choice :\n"
        f"    {escape_expr} -> n := 0\n"
        f"    1 - {escape_expr} -> n := n + 1\n"
        f"variant : {variant_expr}\n"
        f"{witness}"
        "init : 1\n"
    )


def escaping_spline(depth: int = 100) -> Bundle:
    """Spline leaving to the target with probability ``1/(n+1)`` at node ``n``; ``V = n``."""

    def esc(n):
        return Fraction(1, n + 1)

    sys = spline_system(esc, "escaping-spline")
    v = spline_variant(esc)
    p = MonotoneStepFn(tuple(Fraction(k) for k in range(1, depth + 1)), tuple(Fraction(1, k + 1) for k in range(1, depth + 2)))
    pd = PdWitness(p, MonotoneStepFn.constant(Fraction(1)))
    witness = f"pd : p = {step_to_piecewise_text(p)}, d = piecewise {{ else : 1 }}\n"
    return Bundle(
        "escaping-spline", sys, Variant(v.eval, None, 1, "n"), PD_PASS, Fraction(depth), pd=pd,
        dsl=_spline_dsl("escaping_spline", "1/(n + 1)", "n", witness),
        description="spline with escape 1/(n+1); V = n, p(v) = 1/(v+1), d = 1",
    )


def captured_spline(depth: int = 1000, witness_depth: int = 20) -> Bundle:
    """Spline with escape ``1/(n+1)^2``: the bounded martingale ``2n/(n+1)`` refutes termination.

    A p,d witness matching the realized probabilities on the first
    ``witness_depth`` nodes is attached so that checking the p,d rule shows
    how it must fail: the step function's tail cannot follow ``p -> 0``.
    """

    def esc(n):
        return Fraction(1, (n + 1) ** 2)

    sys = spline_system(esc, "captured-spline")
    base = spline_variant(esc)
    v = Variant(base.eval, Fraction(2), 1, "2n/(n+1)")
    ps = MonotoneStepFn(
        tuple(Fraction(2 * k, k + 1) for k in range(1, witness_depth + 1)),
        tuple(Fraction(1, (k + 1) ** 2) for k in range(1, witness_depth + 2)),
    )
    pd = PdWitness(ps, MonotoneStepFn.constant(Fraction(1)))
    witness = f"pd : p = {step_to_piecewise_text(ps)}, d = piecewise {{ else : 1 }}\n"
    return Bundle(
        "captured-spline", sys, v, REFUTE_PASS, Fraction(2 * depth, depth + 1), node_budget=depth + 10,
        pd=pd, refutation=RefutationWitness(v, "exact-martingale"),
        dsl=_spline_dsl("captured_spline", "1/((n + 1) * (n + 1))", "2 * n/(n + 1)", witness),
        description="spline with escape 1/(n+1)^2; bounded martingale 2n/(n+1) refutes termination",
    )


# ---------------------------------------------------------------------------
# Trees and the plane


def powers_of_two_tree() -> TreeSpec:
    """Two children exactly at depths 1, 2, 4, 8, ...; one child elsewhere."""
    return TreeSpec(lambda d: 2 if d >= 1 and d & (d - 1) == 0 else 1)


def blackwell_tree(log_depth: int = 8) -> Bundle:
    """Tree walk on the powers-of-two tree with the tree-formula variant.

    The variant at depth ``2^k`` is ``1 + k/2``; the window stops at
    ``H = 1 + log_depth/2``.  ``p = 1/3`` is the smallest parent-move
    probability and ``d`` is the staircase below the realized decreases.
    """
    tree = powers_of_two_tree()
    v = tree_variant(tree)
    top = 2**log_depth + 2
    d = staircase_witness([(v((k,)), v((k,)) - v((k - 1,))) for k in range(1, top + 1)])
    pd = PdWitness(MonotoneStepFn.constant(Fraction(1, 3)), d)
    sys = tree_walk_system(tree)
    sys = TransitionSystem(1, sys.is_target, sys.transitions, sys.initial_states, "blackwell-tree")
    return Bundle(
        "blackwell-tree", sys, Variant(v.eval, None, 1, "tree"), PD_PASS, 1 + Fraction(log_depth, 2), pd=pd,
        description="walk on the radially symmetric tree with two children at powers-of-two depths",
    )


WALK_2D_DSL = """\
# symmetric walk in the plane; terminates almost certainly but no certificate is bundled
system walk_2d
var x : int
var y : int
target : x == 0 and y == 0
rule when true :
  choice :
    1/4 -> x := x + 1
    1/4 -> x := x - 1
    1/4 -> y := y + 1
    1/4 -> y := y - 1
variant : abs(x) + abs(y)
init : 1, 0
"""


def walk_2d(horizon: Number = 10) -> Bundle:
    def transitions(s):
        x, y = s
        q = Fraction(1, 4)
        return [Distribution((((x + 1, y), q), ((x - 1, y), q), ((x, y + 1), q), ((x, y - 1), q)))]

    sys = TransitionSystem(2, lambda s: s == (0, 0), transitions, ((1, 0),), "walk-2d")
    v = Variant(lambda s: abs(s[0]) + abs(s[1]), None, 2, "manhattan")
    return Bundle(
        "walk-2d", sys, v, NO_CERTIFICATE, horizon, dsl=WALK_2D_DSL,
        description="two-dimensional symmetric walk; the Manhattan distance is only used as an escape horizon",
    )


BUILDERS: Dict[str, Callable[[], Bundle]] = {
    "symmetric-walk": symmetric_walk,
    "symmetric-walk-demonic": symmetric_walk_demonic,
    "symmetric-walk-log": symmetric_walk_log,
    "constant-bias-walk": constant_bias_walk,
    "harmonic-bias-walk": harmonic_bias_walk,
    "tinsel": tinsel,
    "curtain": curtain,
    "escaping-spline": escaping_spline,
    "captured-spline": captured_spline,
    "blackwell-tree": blackwell_tree,
    "walk-2d": walk_2d,
}


def names() -> List[str]:
    return list(BUILDERS)


def build(name: str) -> Bundle:
    try:
        builder = BUILDERS[name]
    except KeyError:
        raise KeyError(f"unknown gallery bundle {name!r}; known: {', '.join(BUILDERS)}") from None
    return builder()
