"""Monte Carlo escape-window simulation and exact window reachability.

``simulate`` runs all trials in lockstep with numpy.  Random numbers are a
pure function of ``(seed, trial, step, purpose)``, so a run replays bit for
bit, trials can be split across workers without changing results, and two
runs that differ only in their stopping rule follow identical paths.

``exact_reachability`` is the independent oracle: the minimum over demonic
resolutions of the probability of reaching a target before the variant
climbs to ``H``.  Both functions treat a state with ``V >= H`` as an escape
by default (the window ``{V < H}``); ``closed_window`` switches to ``V > H``.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from actcert.model import (
    ModelError,
    Number,
    State,
    TransitionSystem,
    Variant,
    enumerate_window,
    is_exact_number,
)

RUNNING, TARGET, HIGH = 0, 1, 2
_LIVE_UNEXPANDED, _LIVE = 3, 4

ADVERSARIES = ("uniform", "first", "scripted")


# ---------------------------------------------------------------------------
# Counter-based uniforms


_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _mix64(x: np.ndarray) -> np.ndarray:
    """The splitmix64 finalizer, applied elementwise with wrap-around arithmetic."""
    x = x ^ (x >> np.uint64(30))
    x = x * _M1
    x = x ^ (x >> np.uint64(27))
    x = x * _M2
    return x ^ (x >> np.uint64(31))


def uniforms(seed: int, trials: np.ndarray, step: int, salt: int) -> np.ndarray:
    """Uniform doubles in [0, 1) keyed by (seed, trial, step, salt)."""
    with np.errstate(over="ignore"):
        base = _mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + _GOLDEN)
        key = _mix64(base ^ trials.astype(np.uint64))
        h = _mix64(key + np.uint64(step) * _GOLDEN + np.uint64(salt))
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


# ---------------------------------------------------------------------------
# Simulation


@dataclass(frozen=True)
class SimConfig:
    """Trial count, escape horizon, step cap, adversary policy and seed.

    A walk escapes high once ``V >= escape_horizon``; with ``closed_window``
    it escapes only once ``V > escape_horizon``.
    """

    trials: int
    escape_horizon: Number = math.inf
    max_steps: int = 1_000_000
    adversary: str = "uniform"
    script: Tuple[int, ...] = ()
    seed: int = 0
    closed_window: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.max_steps < 0:
            raise ValueError("max_steps must be non-negative")
        if self.adversary not in ADVERSARIES:
            raise ValueError(f"adversary must be one of {ADVERSARIES}")
        if self.adversary == "scripted" and not self.script:
            raise ValueError("a scripted adversary needs a non-empty index sequence")


@dataclass
class SimResult:
    trials: int
    hits_target: int
    escaped_high: int
    still_running: int
    mean_steps: float
    max_steps: int
    truncated_mean_steps: float
    z_hat: float
    half_width: float
    outcomes: np.ndarray = field(repr=False)
    steps: np.ndarray = field(repr=False)
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "hits_target": self.hits_target,
            "escaped_high": self.escaped_high,
            "still_running": self.still_running,
            "mean_steps": self.mean_steps,
            "max_steps": self.max_steps,
            "truncated_mean_steps": self.truncated_mean_steps,
            "z_hat": self.z_hat,
            "half_width": self.half_width,
            "warnings": list(self.warnings),
        }


class _StateTable:
    """Lazily grown table of visited states with padded cumulative-probability rows."""

    def __init__(self, sys: TransitionSystem, v: Variant, horizon, closed: bool):
        self.sys, self.v, self.horizon, self.closed = sys, v, horizon, closed
        self.index: Dict[State, int] = {}
        self.states: List[State] = []
        self.status = np.zeros(16, dtype=np.int8)
        self.opt_start = np.zeros(16, dtype=np.int64)
        self.n_opts = np.zeros(16, dtype=np.int64)
        self.width = 1
        self.cum = np.full((16, 1), np.inf)
        self.succ = np.zeros((16, 1), dtype=np.int64)
        self.n_rows = 0

    def register(self, s: State) -> int:
        k = self.index.get(s)
        if k is not None:
            return k
        k = len(self.states)
        self.index[s] = k
        self.states.append(s)
        if k >= len(self.status):
            grow = len(self.status)
            self.status = np.concatenate([self.status, np.zeros(grow, dtype=np.int8)])
            self.opt_start = np.concatenate([self.opt_start, np.zeros(grow, dtype=np.int64)])
            self.n_opts = np.concatenate([self.n_opts, np.zeros(grow, dtype=np.int64)])
        if self.sys.is_target(s):
            self.status[k] = TARGET
        elif self.v is not None and self._high(self.v(s)):
            self.status[k] = HIGH
        else:
            self.status[k] = _LIVE_UNEXPANDED
        return k

    def _high(self, val) -> bool:
        return val > self.horizon if self.closed else val >= self.horizon

    def _add_row(self, pairs):
        if len(pairs) > self.width:
            extra = len(pairs) - self.width
            self.cum = np.hstack([self.cum, np.full((self.cum.shape[0], extra), np.inf)])
            self.succ = np.hstack([self.succ, np.zeros((self.succ.shape[0], extra), dtype=np.int64)])
            self.width = len(pairs)
        if self.n_rows >= self.cum.shape[0]:
            rows = self.cum.shape[0]
            self.cum = np.vstack([self.cum, np.full((rows, self.width), np.inf)])
            self.succ = np.vstack([self.succ, np.zeros((rows, self.width), dtype=np.int64)])
        acc = 0.0
        for j, (t, p) in enumerate(pairs):
            acc += float(p)
            self.cum[self.n_rows, j] = acc
            self.succ[self.n_rows, j] = t
        self.cum[self.n_rows, len(pairs) - 1] = np.inf  # absorbs rounding in the last bucket
        self.n_rows += 1

    def expand(self, k: int):
        s = self.states[k]
        options = self.sys.step(s)
        self.opt_start[k] = self.n_rows
        self.n_opts[k] = len(options)
        for delta in options:
            self._add_row([(self.register(t), p) for t, p in delta.support])
        self.status[k] = _LIVE


def simulate(sys: TransitionSystem, v: Optional[Variant], cfg: SimConfig, start: State) -> SimResult:
    """Run ``cfg.trials`` walks from ``start`` until a target, escape above H, or ``max_steps``."""
    start = tuple(start)
    if sys.is_target(start):
        raise ModelError("simulation must start at a non-target state")
    table = _StateTable(sys, v, cfg.escape_horizon, cfg.closed_window)
    k0 = table.register(start)
    n = cfg.trials
    outcome = np.full(n, RUNNING, dtype=np.int8)
    steps = np.zeros(n, dtype=np.int64)
    if table.status[k0] == HIGH:
        outcome[:] = HIGH
    alive = np.nonzero(outcome == RUNNING)[0]
    cur = np.full(alive.size, k0, dtype=np.int64)
    script = np.asarray(cfg.script, dtype=np.int64) if cfg.script else None

    t = 0
    while alive.size and t < cfg.max_steps:
        todo = np.unique(cur[table.status[cur] == _LIVE_UNEXPANDED])
        for k in todo:
            table.expand(int(k))
        nopt = table.n_opts[cur]
        if cfg.adversary == "uniform":
            choice = np.minimum((uniforms(cfg.seed, alive, t, 1) * nopt).astype(np.int64), nopt - 1)
        elif cfg.adversary == "first":
            choice = np.zeros_like(cur)
        else:
            choice = np.full_like(cur, script[t % script.size]) % nopt
        rows = table.opt_start[cur] + choice
        u = uniforms(cfg.seed, alive, t, 2)
        j = (table.cum[rows] <= u[:, None]).sum(axis=1)
        cur = table.succ[rows, j]
        t += 1
        st = table.status[cur]
        done = (st == TARGET) | (st == HIGH)
        if done.any():
            ids = alive[done]
            outcome[ids] = st[done]
            steps[ids] = t
            keep = ~done
            alive, cur = alive[keep], cur[keep]
    steps[alive] = t

    hits = int((outcome == TARGET).sum())
    esc = int((outcome == HIGH).sum())
    running = int((outcome == RUNNING).sum())
    finished = steps[outcome != RUNNING]
    decided = hits + esc
    z = hits / decided if decided else math.nan
    hw = 1.96 * math.sqrt(z * (1 - z) / decided) if decided else math.nan
    warnings = []
    if running > 0.01 * n:
        warnings.append(f"{running} of {n} trials still running after {cfg.max_steps} steps")
    return SimResult(
        trials=n,
        hits_target=hits,
        escaped_high=esc,
        still_running=running,
        mean_steps=float(finished.mean()) if finished.size else math.nan,
        max_steps=int(finished.max()) if finished.size else 0,
        truncated_mean_steps=float(np.minimum(steps, cfg.max_steps).mean()),
        z_hat=z,
        half_width=hw,
        outcomes=outcome,
        steps=steps,
        warnings=warnings,
    )


def write_trace(result: SimResult, path) -> None:
    """CSV with one row per trial: trial, outcome, steps."""
    names = {RUNNING: "running", TARGET: "target", HIGH: "escaped"}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "outcome", "steps"])
        for i, (o, s) in enumerate(zip(result.outcomes.tolist(), result.steps.tolist())):
            w.writerow([i, names[o], s])


# ---------------------------------------------------------------------------
# Exact oracle


@dataclass
class Reachability:
    z_min: Number
    z_max: Optional[Number]
    method: str
    states: int
    iterations: int = 0
    residual: float = 0.0


EXACT_SOLVE_LIMIT = 5000


def _can_reach(interior, succ, is_goal) -> set:
    """States of the interior that reach a goal under some resolution of the choices."""
    preds = defaultdict(set)
    frontier = []
    for s in interior:
        for t in succ[s]:
            preds[t].add(s)
            if is_goal(t):
                frontier.append(s)
    seen = set(frontier)
    while frontier:
        t = frontier.pop()
        for s in preds[t]:
            if s not in seen:
                seen.add(s)
                frontier.append(s)
    return seen


def _exact_solve(interior, transitions, is_target) -> Dict[State, Fraction]:
    """Sparse Gaussian elimination over the rationals for a deterministic chain."""
    succ = {s: [t for t, _ in transitions[s][0].support] for s in interior}
    live = _can_reach(interior, succ, is_target)
    order = [s for s in interior if s in live]
    rows: Dict[State, Dict[State, Fraction]] = {}
    rhs: Dict[State, Fraction] = {}
    for s in order:
        row = {s: Fraction(1)}
        b = Fraction(0)
        for t, p in transitions[s][0].support:
            if t in live:
                row[t] = row.get(t, Fraction(0)) - p
            elif is_target(t):
                b += p
        rows[s], rhs[s] = row, b
    # forward elimination in BFS order; the matrix is a non-singular M-matrix so pivots stay positive
    users = defaultdict(set)
    for s, row in rows.items():
        for t in row:
            if t != s:
                users[t].add(s)
    pos = {s: i for i, s in enumerate(order)}
    for s in order:
        piv_row = rows[s]
        piv = piv_row[s]
        for r in sorted(users[s], key=pos.get):
            if pos[r] <= pos[s]:
                continue
            row = rows[r]
            f = row.pop(s, None)
            if not f:
                continue
            f = f / piv
            for t, a in piv_row.items():
                if t == s:
                    continue
                new = row.get(t, Fraction(0)) - f * a
                if new:
                    row[t] = new
                    if t != r:
                        users[t].add(r)
                else:
                    row.pop(t, None)
            rhs[r] -= f * rhs[s]
    x: Dict[State, Fraction] = {}
    for s in reversed(order):
        row = rows[s]
        acc = rhs[s]
        for t, a in row.items():
            if t != s:
                acc -= a * x[t]
        x[s] = acc / row[s]
    return x


def _value_iteration(interior, transitions, is_target, values_known, sense, tol, max_iter):
    idx = {s: i for i, s in enumerate(interior)}
    n = len(interior)
    rows, cols, data, b, owner = [], [], [], [], []
    r = 0
    for s in interior:
        for delta in transitions[s]:
            bb = 0.0
            for t, p in delta.support:
                if t in idx:
                    rows.append(r)
                    cols.append(idx[t])
                    data.append(float(p))
                elif is_target(t):
                    bb += float(p)
            b.append(bb)
            owner.append(idx[s])
            r += 1
    M = sp.csr_matrix((data, (rows, cols)), shape=(r, n))
    b = np.asarray(b)
    starts = np.searchsorted(np.asarray(owner), np.arange(n))
    reduce = np.minimum.reduceat if sense == "min" else np.maximum.reduceat
    x = np.zeros(n)
    res = math.inf
    it = 0
    while it < max_iter:
        it += 1
        new = reduce(M @ x + b, starts)
        res = float(np.max(np.abs(new - x))) if n else 0.0
        x = new
        if res <= tol:
            break
    else:
        raise ModelError(f"value iteration did not reach residual {tol} in {max_iter} sweeps (last {res:.3g})")
    return {s: float(x[i]) for s, i in idx.items()}, it, res


def exact_reachability(
    sys: TransitionSystem,
    v: Variant,
    H: Number,
    start: State,
    node_budget: int = 1_000_000,
    want_max: bool = False,
    tol: float = 1e-12,
    max_iter: int = 10_000_000,
    closed_window: bool = False,
    method: str = "auto",
) -> Reachability:
    """Minimum (and optionally maximum) probability of hitting a target before escaping high.

    The walk escapes once ``V >= H``, i.e. the window is ``{V < H}``; with
    ``closed_window`` the window is ``{V <= H}`` and escape needs ``V > H``.
    For the symmetric walk from 1 with ``H = 100`` these give 99/100 and
    100/101 respectively; both respect the bound ``1 - V(s)/H``.

    Deterministic exact systems with at most ``EXACT_SOLVE_LIMIT`` window
    states are solved over the rationals; otherwise value iteration runs from
    zero to a sup-norm residual of ``tol``.  ``method`` may force either
    route: ``"exact"`` or ``"iterate"``.
    """
    if method not in ("auto", "exact", "iterate"):
        raise ValueError(f"unknown method {method!r}")
    start = tuple(start)
    win = enumerate_window(sys.with_initial(start), v, H, node_budget, strict=not closed_window)
    if win.truncated or win.uncovered:
        raise ModelError("window is not closed under the node budget; the oracle refuses to approximate")
    if sys.is_target(start):
        return Reachability(Fraction(1), Fraction(1) if want_max else None, "trivial", 0)
    if start not in win.transitions:
        return Reachability(Fraction(0), Fraction(0) if want_max else None, "trivial", 0)
    interior = list(win.interior)
    deterministic = all(len(win.transitions[s]) == 1 for s in interior)
    exact = deterministic and all(
        is_exact_number(p) for s in interior for t, p in win.transitions[s][0].support
    )
    if method == "exact" and not exact:
        raise ModelError("the exact solve needs a deterministic window with rational probabilities")
    if exact and (method == "exact" or (method == "auto" and len(interior) <= EXACT_SOLVE_LIMIT)):
        x = _exact_solve(interior, win.transitions, sys.is_target)
        z = x.get(start, Fraction(0))
        return Reachability(z, z if want_max else None, "exact-linear-solve", len(interior))
    xmin, it, res = _value_iteration(interior, win.transitions, sys.is_target, win.values, "min", tol, max_iter)
    zmax = None
    if want_max:
        xmax, it2, res2 = _value_iteration(interior, win.transitions, sys.is_target, win.values, "max", tol, max_iter)
        zmax = xmax[start]
        it, res = max(it, it2), max(res, res2)
    return Reachability(xmin[start], zmax, "value-iteration", len(interior), it, res)


def truncated_stopping_mean(sys: TransitionSystem, start: State, max_steps: int) -> float:
    """``E[min(tau, max_steps)]`` for a deterministic chain, by propagating the distribution."""
    dist = {tuple(start): 1.0}
    total = 0.0
    cache: Dict[State, list] = {}
    for _ in range(max_steps):
        alive = sum(dist.values())
        if alive == 0:
            break
        total += alive
        nxt: Dict[State, float] = defaultdict(float)
        for s, m in dist.items():
            if s not in cache:
                opts = sys.step(s)
                if len(opts) != 1:
                    raise ModelError("truncated_stopping_mean needs a deterministic chain")
                cache[s] = [(t, float(p), sys.is_target(t)) for t, p in opts[0].support]
            for t, p, tgt in cache[s]:
                if not tgt:
                    nxt[t] += m * p
        dist = nxt
    return total
