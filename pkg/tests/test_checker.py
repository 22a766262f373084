from __future__ import annotations

import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from actcert import gallery
from actcert.checker import (
    CheckConfig,
    bounded_variant_diagnostic,
    check_nabla,
    check_nabla_rule,
    check_pd_rule,
    check_progress,
    check_supermartingale,
    check_variant_wellformed,
    escape_bound,
    termination_lower_bound,
)
from actcert.model import (
    FAIL,
    INCONCLUSIVE,
    PASS,
    Distribution,
    ModelError,
    MonotoneStepFn,
    NablaWitness,
    PdWitness,
    TransitionSystem,
    Variant,
    enumerate_window,
)
from actcert.synth import pd_witness_from_nabla

HALF = Fraction(1, 2)
PD_HALF_ONE = PdWitness(MonotoneStepFn.constant(HALF), MonotoneStepFn.constant(Fraction(1)))


def line_system(options, top):
    """Walk on 0..top: at state s each q in ``options[s]`` is a demonic option stepping down with probability q."""

    def transitions(s):
        n = s[0]
        if n >= top:
            return [Distribution.point((n - 1,))]
        return [
            Distribution.from_pairs([((n - 1,), q), ((n + 1,), 1 - q)]) for q in options[n]
        ]

    return TransitionSystem(1, lambda s: s[0] == 0, transitions, ((1,),), "line")


IDENTITY = Variant(lambda s: s[0], None, 1, "s")


def test_symmetric_walk_pd_pass_with_bounds():
    b = gallery.build("symmetric-walk")
    r = check_pd_rule(b.system, b.variant, b.pd, CheckConfig(100))
    assert r.verdict == PASS
    assert r.bounds.termination_lower_bound == Fraction(99, 100)
    assert r.bounds.escape_lower_bound == HALF**100
    assert r.bounds.start_state == (1,)


def test_symmetric_walk_zero_slack():
    b = gallery.build("symmetric-walk")
    r = check_supermartingale(b.system, b.variant, CheckConfig(10))
    assert r.verdict == PASS and r.condition("supermartingale").worst_slack == 0


def test_supermartingale_failure_has_counterexample():
    sys = line_system({n: [Fraction(1, 3)] for n in range(20)}, 20)
    r = check_supermartingale(sys, IDENTITY, CheckConfig(10))
    assert r.verdict == FAIL
    c = r.counterexamples[0]
    assert c.condition == "supermartingale"
    assert c.lhs - c.rhs == Fraction(1, 3)


def test_progress_failure():
    b = gallery.build("symmetric-walk")
    w = PdWitness(MonotoneStepFn.constant(Fraction(2, 3)), MonotoneStepFn.constant(Fraction(1)))
    r = check_progress(b.system, b.variant, w, CheckConfig(10))
    assert r.verdict == FAIL
    assert r.condition("progress").worst_slack == HALF - Fraction(2, 3)


def test_wellformed_failure_on_zero_outside_target():
    b = gallery.build("symmetric-walk")
    v = Variant(lambda s: max(abs(s[0]) - 1, 0), None, 1)
    r = check_variant_wellformed(b.system, v, CheckConfig(10))
    assert r.verdict == FAIL and r.counterexamples[0].state == (1,)


def test_truncated_window_is_inconclusive_without_bounds():
    b = gallery.build("symmetric-walk")
    r = check_pd_rule(b.system, b.variant, b.pd, CheckConfig(100, node_budget=20))
    assert r.verdict == INCONCLUSIVE and r.bounds is None


def test_exact_mode_rejects_floats():
    b = gallery.build("symmetric-walk-log")
    with pytest.raises(ModelError):
        check_nabla_rule(b.system, b.variant, b.nabla, CheckConfig(b.horizon))
    with pytest.raises(ValueError):
        CheckConfig(10, tolerance=1e-9)


def test_log_walk_nabla_pass_and_fail():
    b = gallery.build("symmetric-walk-log")
    cfg = CheckConfig(b.horizon, mode="float")
    r = check_nabla_rule(b.system, b.variant, b.nabla, cfg)
    assert r.verdict == PASS and r.bounds is not None
    # ask for twice the decrease: fails near the start
    greedy = NablaWitness(b.nabla.nabla.rescaled(1, 2))
    r = check_nabla(b.system, b.variant, greedy, cfg)
    assert r.verdict == FAIL


def test_log_walk_nabla_first_value():
    # at |n| = 1 the expected decrease of log(1+|n|) is log(4/3)/2
    b = gallery.build("symmetric-walk-log")
    assert b.nabla.nabla(math.log(2)) == pytest.approx(0.143841036, abs=1e-9)


def test_bound_helpers():
    assert termination_lower_bound(1, 100) == Fraction(99, 100)
    assert termination_lower_bound(1.0, 4.0) == 0.75
    with pytest.raises(ValueError):
        termination_lower_bound(0, 10)
    with pytest.raises(ValueError):
        termination_lower_bound(11, 10)
    assert escape_bound(Fraction(5, 2), PD_HALF_ONE) == Fraction(1, 8)


def test_captured_spline_diagnostic():
    b = gallery.build("captured-spline")
    r = check_pd_rule(b.system, b.variant, b.pd, CheckConfig(2, node_budget=20_000))
    assert r.verdict in (FAIL, INCONCLUSIVE)
    assert any("bounded variant" in w for w in r.warnings)
    d = bounded_variant_diagnostic(b.system, b.variant, CheckConfig(2, node_budget=5_000))
    assert d.warns and d.sup_v < 2


def test_diagnostic_quiet_on_unbounded_variant():
    b = gallery.build("symmetric-walk")
    d = bounded_variant_diagnostic(b.system, b.variant, CheckConfig(10**6, node_budget=2_000))
    assert not d.warns


QS = [Fraction(1, 4), Fraction(1, 3), HALF, Fraction(2, 3), Fraction(3, 4)]
option_sets = st.dictionaries(
    st.integers(1, 7), st.lists(st.sampled_from(QS), min_size=1, max_size=3, unique=True), min_size=7, max_size=7
)


@settings(max_examples=60, deadline=None)
@given(option_sets, st.data())
def test_fewer_demonic_options_never_break_a_pass(options, data):
    """Removing options keeps a pass; the verdict is exactly 'every q >= 1/2'."""
    sub = {n: data.draw(st.lists(st.sampled_from(qs), min_size=1, max_size=len(qs), unique=True)) for n, qs in options.items()}
    cfg = CheckConfig(7)
    full = check_pd_rule(line_system(options, 8), IDENTITY, PD_HALF_ONE, cfg)
    part = check_pd_rule(line_system(sub, 8), IDENTITY, PD_HALF_ONE, cfg)
    assert full.verdict == (PASS if all(q >= HALF for qs in options.values() for q in qs) else FAIL)
    if full.verdict == PASS:
        assert part.verdict == PASS


@settings(max_examples=40, deadline=None)
@given(option_sets, st.fractions(min_value=Fraction(1, 8), max_value=8, max_denominator=8))
def test_scaling_variant_and_witness_preserves_verdict(options, c):
    sys = line_system(options, 8)
    base = check_pd_rule(sys, IDENTITY, PD_HALF_ONE, CheckConfig(7))
    scaled_v = IDENTITY.scaled(c)
    scaled_w = PdWitness(PD_HALF_ONE.p.rescaled(c, 1), PD_HALF_ONE.d.rescaled(c, c))
    scaled = check_pd_rule(sys, scaled_v, scaled_w, CheckConfig(7 * c))
    assert scaled.verdict == base.verdict
    s0 = base.condition("supermartingale").worst_slack
    s1 = scaled.condition("supermartingale").worst_slack
    assert s1 == c * s0


@pytest.mark.parametrize("name", ["symmetric-walk-log"])
def test_nabla_pass_implies_synthesized_progress_pass(name):
    b = gallery.build(name)
    cfg = CheckConfig(b.horizon, mode=b.mode)
    window = enumerate_window(b.system, b.variant, cfg.horizon, cfg.node_budget)
    assert check_nabla(b.system, b.variant, b.nabla, cfg, window).verdict == PASS
    pd = pd_witness_from_nabla(b.nabla, b.horizon)
    assert check_progress(b.system, b.variant, pd, cfg, window).verdict == PASS


def test_nabla_pass_implies_progress_pass_exact():
    # symmetric walk with V = |s| has expected decrease 0, so use the drift walk with q = 2/3 and nabla 1/3
    sys = line_system({n: [Fraction(2, 3)] for n in range(1, 30)}, 30)
    nabla = NablaWitness(MonotoneStepFn.constant(Fraction(1, 3)))
    cfg = CheckConfig(29)
    window = enumerate_window(sys, IDENTITY, cfg.horizon, cfg.node_budget)
    assert check_nabla(sys, IDENTITY, nabla, cfg, window).verdict == PASS
    pd = pd_witness_from_nabla(nabla, 29)
    assert check_progress(sys, IDENTITY, pd, cfg, window).verdict == PASS
