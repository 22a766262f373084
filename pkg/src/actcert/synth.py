"""Variant and witness synthesis.

The constructions here are the computable halves of the classical arguments:
the Markov-style tail bound and the decrease lemma that turn an expected
decrease into a p,d witness, closed-form martingales for trees, birth-death
chains and splines, Foster's first-passage variant for deterministic chains,
and the pasting of finitely many nabla-certified systems into one.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from actcert.model import (
    Distribution,
    ModelError,
    MonotoneStepFn,
    NablaWitness,
    Number,
    PdWitness,
    State,
    TransitionSystem,
    Variant,
    VariantDomainError,
    is_exact_number,
    pointwise_min,
)


# ---------------------------------------------------------------------------
# The two lemmas


def markov_bound(y: Number, y_prime: Number) -> Number:
    """Guaranteed mass on ``{f < y'}`` when ``Exp f <= y`` and ``f >= 0``: ``max(0, 1 - y/y')``."""
    if y < 0:
        raise ValueError("y must be non-negative")
    if not y_prime > 0:
        raise ValueError("y' must be positive")
    if is_exact_number(y) and is_exact_number(y_prime):
        r = 1 - Fraction(y) / Fraction(y_prime)
    else:
        r = 1 - y / y_prime
    return max(r, 0)


def pd_from_epsilon(v_s: Number, epsilon: Number) -> Tuple[Number, Number]:
    """(p, d) guaranteed at a state with variant ``v_s`` and expected decrease ``epsilon``.

    ``d = epsilon/2`` and ``p = d/(v_s - d)``, clamped to 1.  An expected
    decrease of ``epsilon >= v_s`` is only possible when all mass reaches 0,
    so the clamp is harmless; ``epsilon >= 2 v_s`` is flagged as degenerate.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not v_s > 0:
        raise ValueError("v_s must be positive")
    exact = is_exact_number(v_s) and is_exact_number(epsilon)
    d = Fraction(epsilon) / 2 if exact else epsilon / 2
    if epsilon >= 2 * v_s:
        warnings.warn(f"epsilon {epsilon} >= 2*V(s) = {2 * v_s}: degenerate decrease, p clamped to 1", stacklevel=2)
        return (Fraction(1) if exact else 1.0), d
    p = d / (v_s - d)
    if p > 1:
        p = Fraction(1) if exact else 1.0
    return p, d


def pd_witness_from_nabla(w: NablaWitness, v_max_hint: Number, grid: Optional[Sequence[Number]] = None) -> PdWitness:
    """Discretize the decrease lemma into step functions valid for ``0 < v <= v_max_hint``.

    Each interval ``(a, b]`` uses its right endpoint as the worst case:
    ``d = nabla(b)/2`` and ``p = d/(b - d)``.  Beyond ``v_max_hint`` the last
    values are repeated, which is only sound while the window stays below it.
    """
    if not v_max_hint > 0:
        raise ValueError("v_max_hint must be positive")
    nab = w.nabla
    exact = nab.exact and is_exact_number(v_max_hint)
    pts = set(b for b in nab.breakpoints if b < v_max_hint)
    pts.add(v_max_hint)
    if grid is None:
        floor = nab(v_max_hint) / 2
        x = Fraction(v_max_hint) if exact else float(v_max_hint)
        for _ in range(48):
            x = x / 2
            if x <= floor:
                break
            pts.add(x)
    else:
        pts.update(g for g in grid if 0 < g < v_max_hint)
    bps = sorted(pts)
    ps, ds = [], []
    for b in bps:
        eps = nab(b)
        d = Fraction(eps) / 2 if exact else eps / 2
        p = 1 if b <= d else min(1, d / (b - d))
        ps.append(Fraction(p) if exact else float(p))
        ds.append(d)
    # (b_k, inf) repeats the last finite interval
    ps.append(ps[-1])
    ds.append(ds[-1])
    return PdWitness(_compress(bps, ps), _compress(bps, ds))


def _compress(bps, vals) -> MonotoneStepFn:
    """Step function from values per interval, merging equal neighbours."""
    out_b, out_v = [], [vals[0]]
    for b, v in zip(bps, vals[1:]):
        if v == out_v[-1]:
            continue
        out_b.append(b)
        out_v.append(v)
    return MonotoneStepFn(tuple(out_b), tuple(out_v))


def staircase_witness(samples: Sequence[Tuple[Number, Number]]) -> MonotoneStepFn:
    """Largest non-increasing step function lying below every sample ``(v, value)``.

    The value on ``(v_{i-1}, v_i]`` is the running minimum of the sample
    values up to ``v_i``; the tail repeats the overall minimum.
    """
    if not samples:
        raise ValueError("no samples")
    pts: Dict[Number, Number] = {}
    for v, c in samples:
        if not v > 0 or not c > 0:
            raise ValueError(f"samples must be positive, got ({v}, {c})")
        pts[v] = min(c, pts.get(v, c))
    bps = sorted(pts)
    run, vals = None, []
    for b in bps:
        run = pts[b] if run is None else min(run, pts[b])
        vals.append(run)
    vals.append(run)
    return _compress(bps, vals)


# ---------------------------------------------------------------------------
# Closed-form variants on lazily extended sequences


class _LazySequence:
    """Memoized ``n -> value`` with a step function computing entry ``n`` from the prefix."""

    def __init__(self, start: List[Number], extend: Callable[[List[Number]], Number], limit: Optional[int]):
        self.vals = list(start)
        self.extend = extend
        self.limit = limit

    def __call__(self, n: int) -> Number:
        if n < 0 or (self.limit is not None and n > self.limit):
            raise VariantDomainError(f"index {n} outside 0..{self.limit}")
        while len(self.vals) <= n:
            self.vals.append(self.extend(self.vals))
        return self.vals[n]


def _seq_variant(seq: _LazySequence, label: str, exact: bool) -> Variant:
    def ev(s):
        return seq(s[0])

    return Variant(ev, None, 1, label)


@dataclass(frozen=True)
class TreeSpec:
    """Radially symmetric tree: each node at depth ``d`` has ``children(d)`` children."""

    children: Callable[[int], int]

    def c(self, d: int) -> int:
        k = self.children(d)
        if not isinstance(k, int) or k < 1:
            raise ModelError(f"c_{d} = {k!r} must be a positive integer")
        return k


def tree_variant(tree: TreeSpec, max_depth: Optional[int] = None) -> Variant:
    """``V(d) = sum_{i<d} 1/(c_0 ... c_i)`` on depth states ``(d,)``; exact rationals."""
    if max_depth is not None and max_depth < 0:
        raise ValueError("max_depth must be non-negative")
    prods = [Fraction(tree.c(0))]

    def extend(vals):
        d = len(vals)  # computing V(d) needs the product c_0..c_{d-1}
        while len(prods) < d:
            prods.append(prods[-1] * tree.c(len(prods)))
        return vals[-1] + 1 / prods[d - 1]

    return _seq_variant(_LazySequence([Fraction(0)], extend, max_depth), "tree", True)


def tree_walk_system(tree: TreeSpec, start: int = 1) -> TransitionSystem:
    """Uniform walk on the tree lumped by depth: up with ``1/(c_d+1)``, down otherwise; root is the target."""

    def transitions(s):
        d = s[0]
        c = tree.c(d)
        return [Distribution((((d - 1,), Fraction(1, c + 1)), ((d + 1,), Fraction(c, c + 1))))]

    return TransitionSystem(1, lambda s: s[0] == 0, transitions, ((start,),), "tree-walk", True)


def birth_death_martingale(q: Callable[[int], Number], max_n: Optional[int] = None) -> Variant:
    """Exact martingale of the chain stepping down with ``q(n)`` and up with ``1 - q(n)``.

    Solves ``V(n) = q_n V(n-1) + p_n V(n+1)`` forward from ``V(0)=0, V(1)=1``.
    With ``max_n`` set, ``q`` is validated on ``1..max_n`` up front and V is
    defined on ``0..max_n``; otherwise V extends lazily.
    """

    def qn(n):
        x = q(n)
        if not 0 < x < 1:
            raise ModelError(f"q({n}) = {x} is not in (0, 1)")
        return Fraction(x) if is_exact_number(x) else x

    if max_n is not None:
        if max_n < 1:
            raise ValueError("max_n must be at least 1")
        for n in range(1, max_n + 1):
            qn(n)

    def extend(vals):
        n = len(vals) - 1  # V(n+1) from V(n), V(n-1)
        qv = qn(n)
        return (vals[n] - qv * vals[n - 1]) / (1 - qv)

    one = Fraction(1)
    return _seq_variant(_LazySequence([Fraction(0), one], extend, max_n), "birth-death", True)


def spline_variant(escape: Callable[[int], Number], max_n: Optional[int] = None) -> Variant:
    """``V(n) = 1 / prod_{k<n} (1 - escape(k))`` on spline nodes ``n >= 1``; ``V(0) = 0``.

    Node ``n`` falls to the target with probability ``escape(n)`` and moves
    on to ``n+1`` otherwise, so each node's value is its predecessor's divided
    by the probability of the edge leading in.
    """

    def en(n):
        x = escape(n)
        if not 0 < x < 1:
            raise ModelError(f"escape({n}) = {x} is not in (0, 1)")
        return Fraction(x) if is_exact_number(x) else x

    def extend(vals):
        n = len(vals)  # V(n) = V(n-1) / (1 - escape(n-1))
        return vals[-1] / (1 - en(n - 1))

    return _seq_variant(_LazySequence([Fraction(0), Fraction(1)], extend, max_n), "spline", True)


# ---------------------------------------------------------------------------
# Foster's first-passage construction


@dataclass
class FirstPassageTable:
    """``f[t-1, i-1]`` is the probability of first reaching the target at step ``t`` from ``s_i``."""

    f: np.ndarray
    tail1: np.ndarray
    next_f: np.ndarray
    tail_remainder: float

    @property
    def t_max(self) -> int:
        return self.f.shape[0]

    @property
    def i_max(self) -> int:
        return self.f.shape[1]


def first_passage_table(
    sys: TransitionSystem,
    t_max: int,
    i_max: int,
    index: Callable[[int], State] = lambda i: (i,),
    tail: str = "midpoint",
) -> FirstPassageTable:
    """Dynamic programme for first-passage probabilities of a deterministic chain.

    ``f^(1)_x`` is the one-step mass into the target and ``f^(t+1) = P f^(t)``
    with ``P`` restricted to non-target states.  States are explored
    breadth-first from ``s_1..s_I`` to depth ``t_max``, which is exactly what
    the first ``t_max`` entries need.  The unknown tail of column 1 beyond
    ``t_max`` lies in ``[0, 1 - sum f_1]``; ``tail`` picks the midpoint or
    either end.
    """
    if t_max < 1 or i_max < 1:
        raise ValueError("t_max and i_max must be positive")
    if not sys.is_target(index(0)):
        raise ModelError(f"index(0) = {index(0)} must be a target state")
    starts = [index(i) for i in range(1, i_max + 1)]
    pos: Dict[State, int] = {}
    order: List[State] = []
    depth: Dict[State, int] = {}
    queue = deque()
    for s in starts:
        if sys.is_target(s):
            raise ModelError(f"s_i = {s} is a target state")
        if s not in pos:
            pos[s] = len(order)
            order.append(s)
            depth[s] = 0
            queue.append(s)
    rows, cols, data = [], [], []
    b_rows, b_data = [], []
    while queue:
        s = queue.popleft()
        if depth[s] > t_max:
            continue
        options = sys.step(s)
        if len(options) != 1:
            raise ModelError(f"state {s} has {len(options)} options; Foster's construction needs a deterministic chain")
        r = pos[s]
        for t, p in options[0].support:
            p = float(p)
            if sys.is_target(t):
                b_rows.append(r)
                b_data.append(p)
                continue
            if t not in pos:
                pos[t] = len(order)
                order.append(t)
                depth[t] = depth[s] + 1
                queue.append(t)
            rows.append(r)
            cols.append(pos[t])
            data.append(p)
    n = len(order)
    P = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    b = np.zeros(n)
    np.add.at(b, np.asarray(b_rows, dtype=np.int64), np.asarray(b_data, dtype=float))

    idx = np.array([pos[s] for s in starts])
    f = np.empty((t_max, i_max))
    cur = b
    for t in range(t_max):
        f[t] = cur[idx]
        cur = P @ cur
    next_f = cur[idx]

    col1 = f[:, 0]
    r_max = max(0.0, 1.0 - float(col1.sum()))
    r = {"midpoint": r_max / 2, "upper": r_max, "lower": 0.0}[tail]
    tail1 = r + np.cumsum(col1[::-1])[::-1]
    zero = np.nonzero(tail1 <= 0)[0]
    if zero.size:
        raise ModelError(
            f"tail of the first-passage distribution from s_1 vanishes at t = {zero[0] + 1} <= T_max; "
            "s_1 cannot reach the target after that step"
        )
    if r_max > 0.01:
        warnings.warn(f"first-passage mass beyond T_max is {r_max:.3g}; the variant is a coarse approximation", stacklevel=2)
    return FirstPassageTable(f, tail1, next_f, r_max)


def _foster_values(table: FirstPassageTable, alpha: float = 0.5) -> np.ndarray:
    """``V_i = sum_t f_i^(t) / tail_1(t) ** alpha`` (alpha = 0 gives total first-passage mass)."""
    w = table.tail1 ** (-alpha)
    return w @ table.f


@dataclass
class FosterResult:
    variant: Variant
    table: FirstPassageTable
    values: np.ndarray
    interval: np.ndarray
    smart_excess_bound: np.ndarray
    tail_remainder: float


def foster_construction(
    sys: TransitionSystem,
    t_max: int,
    i_max: int,
    index: Callable[[int], State] = lambda i: (i,),
) -> FosterResult:
    """Foster's variant ``V(s_i) = sum_t f_i^(t) / sqrt(f_1^(t) + f_1^(t+1) + ...)``.

    Besides the float variant this reports, per ``s_i``:

    * ``interval[i-1]``: the range of ``V(s_i)`` when the column-1 tail
      beyond ``t_max`` ranges over ``[0, 1 - sum f_1]``; the upper end adds
      the unseen first-passage mass ``m_i`` divided by the square root of the
      midpoint tail.
    * ``smart_excess_bound[i-1]``: ``f_i^(t_max+1) / sqrt(tail_1(t_max))``,
      an upper bound on how far ``Exp V`` may exceed ``V(s_i)`` because the
      series stops at ``t_max``.
    """
    table = first_passage_table(sys, t_max, i_max, index)
    values = _foster_values(table)
    r_max = table.tail_remainder
    col1 = table.f[:, 0]
    hi_tail = r_max + np.cumsum(col1[::-1])[::-1]
    low = (hi_tail ** -0.5) @ table.f
    r_mid = r_max / 2
    missing = np.clip(1.0 - table.f.sum(axis=0), 0.0, None)
    high = values + (missing / math.sqrt(r_mid) if r_mid > 0 else 0.0)
    interval = np.stack([low, high], axis=1)
    excess = table.next_f / math.sqrt(table.tail1[-1])

    lookup = {index(i): float(values[i - 1]) for i in range(1, i_max + 1)}
    zero = index(0)

    def ev(s):
        if s in lookup:
            return lookup[s]
        if sys.is_target(s):
            return 0.0
        raise VariantDomainError(f"state {s} is not among s_0..s_{i_max}")

    variant = Variant(ev, None, len(zero), "foster")
    return FosterResult(variant, table, values, interval, excess, r_max)


def foster_variant(sys: TransitionSystem, t_max: int, i_max: int, index: Callable[[int], State] = lambda i: (i,)) -> Variant:
    return foster_construction(sys, t_max, i_max, index).variant


def diamond_index(i_max: int) -> Callable[[int], State]:
    """Enumerate the integer plane by Manhattan rings: (0,0), then ring 1, ring 2, ..."""
    order: List[State] = [(0, 0)]
    r = 1
    while len(order) <= i_max:
        ring = []
        for k in range(r):
            ring += [(r - k, k), (-k, r - k), (k - r, -k), (k, k - r)]
        order.extend(sorted(ring, key=lambda s: (math.atan2(s[1], s[0]) % (2 * math.pi))))
        r += 1

    def index(i: int) -> State:
        if not 0 <= i < len(order):
            raise IndexError(i)
        return order[i]

    return index


# ---------------------------------------------------------------------------
# Composition


@dataclass(frozen=True)
class CertifiedSystem:
    system: TransitionSystem
    variant: Variant
    nabla: NablaWitness


@dataclass(frozen=True)
class Component:
    """A certified system pasted into the master at target state ``attach``, entered at ``start``."""

    part: CertifiedSystem
    start: State
    attach: State


def compose_nabla(master: CertifiedSystem, components: Sequence[Component]) -> CertifiedSystem:
    """Paste finitely many certified components into the master's terminal states.

    Composite states are ``(tag, *coords)`` padded with zeros, tag 0 for the
    master and ``n`` for component ``n``.  Master variant values are raised
    by ``v_C``, the largest component start value, and the composite nabla is
    the pointwise minimum of all parts.
    """
    if not isinstance(components, Sequence):
        raise ValueError("components must be a finite sequence; an unbounded family has no finite v_C")
    if len(components) == 0:
        return master
    parts = [master] + [c.part for c in components]
    arity = 1 + max(p.system.arity for p in parts)
    attach = {}
    for n, c in enumerate(components, start=1):
        if not master.system.is_target(c.attach):
            raise ModelError(f"attachment point {c.attach} is not a master target")
        if c.attach in attach:
            raise ModelError(f"two components attached at {c.attach}")
        if c.part.system.is_target(c.start):
            raise ModelError(f"component {n} starts at a target")
        attach[c.attach] = (n, c.start)
    v_c = max(c.part.variant(c.start) for c in components)

    def wrap(tag, s):
        return (tag,) + tuple(s) + (0,) * (arity - 1 - len(s))

    def unwrap(s):
        tag = s[0]
        return tag, tuple(s[1 : 1 + parts[tag].system.arity])

    def lift(tag, t):
        if tag == 0 and t in attach:
            n, start = attach[t]
            return wrap(n, start)
        return wrap(tag, t)

    def is_target(s):
        tag, t = unwrap(s)
        if tag == 0:
            return master.system.is_target(t) and t not in attach
        return parts[tag].system.is_target(t)

    def transitions(s):
        tag, t = unwrap(s)
        return [
            Distribution.from_pairs((lift(tag, u), p) for u, p in delta.support)
            for delta in parts[tag].system.step(t)
        ]

    def ev(s):
        tag, t = unwrap(s)
        val = parts[tag].variant(t)
        if tag == 0 and not master.system.is_target(t):
            return val + v_c
        return val

    system = TransitionSystem(
        arity,
        is_target,
        transitions,
        tuple(lift(0, s) for s in master.system.initial_states),
        f"{master.system.label}+{len(components)}",
        all(p.system.exact for p in parts),
    )
    nabla = NablaWitness(pointwise_min(*(p.nabla.nabla for p in parts)))
    return CertifiedSystem(system, Variant(ev, None, arity, "composite"), nabla)
