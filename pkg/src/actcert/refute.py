"""Refuting almost-certain termination with a bounded sub-martingale.

If ``V`` is bounded by ``B``, vanishes exactly on the targets and satisfies
``Exp_delta V >= V(s)`` for every option at every non-target state, then the
probability of reaching a target from ``s`` is at most ``1 - V(s)/B`` under
any adversary, so termination is not almost certain.
"""

from __future__ import annotations

from typing import Optional

from actcert.checker import CheckConfig, _expect, _guard, _report, _scan_wellformed, _Tally
from actcert.model import (
    PASS,
    CheckReport,
    RefutationWitness,
    TransitionSystem,
    Window,
    enumerate_window,
)

REFUTED = "ACT refuted (window-relative certificate)"


def _scan_bound(window: Window, bound, cfg: CheckConfig) -> _Tally:
    tally = _Tally("bounded")
    for s, val in window.values.items():
        _guard(val, cfg, "variant value")
        tally.record(bound - val, cfg.tolerance, s, None, val, bound)
    return tally


def _scan_sub(window: Window, exact_martingale: bool, cfg: CheckConfig) -> _Tally:
    tally = _Tally("exact-martingale" if exact_martingale else "sub-martingale")
    for s in window.interior:
        vs = window.values[s]
        for i, delta in enumerate(window.transitions[s]):
            e = _expect(window, delta, cfg)
            if e is None:
                continue
            # every adversary choice must keep the expectation up
            tally.record(e - vs, cfg.tolerance, s, i, e, vs)
            if exact_martingale:
                tally.record(vs - e, cfg.tolerance, s, i, e, vs)
    return tally


def refute_act(sys: TransitionSystem, w: RefutationWitness, cfg: CheckConfig, window: Optional[Window] = None) -> CheckReport:
    """Check the refutation certificate on the window ``{V <= cfg.horizon}``.

    To cover a bounded variant the horizon should sit at or just below the
    declared bound; every state seen, frontier included, is tested against it.
    """
    if window is None:
        window = enumerate_window(sys, w.v, cfg.horizon, cfg.node_budget)
    tallies = [
        _scan_bound(window, w.bound, cfg),
        _scan_wellformed(sys, window, cfg),
        _scan_sub(window, w.mode == "exact-martingale", cfg),
    ]
    report = _report(tallies, window)
    if report.verdict == PASS:
        report.conclusion = f"{REFUTED}: bounded by {w.bound} on the window"
        start = sys.initial_states[0]
        if start in window.values and not sys.is_target(start):
            vs = window.values[start]
            report.conclusion += (
                f"; from {start} a target is reached with probability at most 1 - V/B = {float(1 - vs / w.bound):.6g}"
            )
    return report
