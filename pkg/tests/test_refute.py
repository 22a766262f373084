from __future__ import annotations

from fractions import Fraction

import pytest

from actcert import gallery
from actcert.checker import CheckConfig, check_nabla_rule, check_pd_rule
from actcert.model import FAIL, INCONCLUSIVE, PASS, RefutationWitness, Variant
from actcert.refute import REFUTED, refute_act


def _refute(name, **over):
    b = gallery.build(name)
    cfg = CheckConfig(over.get("horizon", b.horizon), over.get("budget", b.node_budget))
    return refute_act(b.system, over.get("witness", b.refutation), cfg)


def test_constant_bias_refuted():
    r = _refute("constant-bias-walk")
    assert r.verdict == PASS
    assert r.conclusion.startswith(REFUTED)
    assert "1 - V/B = 0.5" in r.conclusion
    assert r.window.states_visited >= 1000


def test_captured_spline_refuted():
    r = _refute("captured-spline")
    assert r.verdict == PASS and r.condition("exact-martingale").worst_slack == 0


def test_symmetric_walk_not_refuted():
    b = gallery.build("symmetric-walk")
    w = RefutationWitness(b.variant.with_sup(Fraction(50)))
    r = refute_act(b.system, w, CheckConfig(100))
    assert r.verdict == FAIL
    bad = [c for c in r.counterexamples if c.condition == "bounded"]
    assert bad and all(c.lhs > 50 for c in bad)
    assert not r.conclusion


def test_declared_bound_violated_is_a_failure():
    b = gallery.build("constant-bias-walk")
    w = RefutationWitness(b.variant.with_sup(Fraction(3, 2)), "exact-martingale")
    r = refute_act(b.system, w, CheckConfig(b.horizon, b.node_budget))
    assert r.verdict == FAIL and r.counterexamples[0].condition == "bounded"


def test_truncated_window_inconclusive():
    r = _refute("constant-bias-walk", budget=50)
    assert r.verdict == INCONCLUSIVE


def test_sub_martingale_failure():
    # V = s on the constant-bias walk is a strict sub-martingale, so exact mode fails but sub mode holds
    b = gallery.build("constant-bias-walk")
    v = Variant(lambda s: Fraction(s[0]), Fraction(10), 1)
    cfg = CheckConfig(9)
    assert refute_act(b.system, RefutationWitness(v), cfg).verdict == PASS
    assert refute_act(b.system, RefutationWitness(v, "exact-martingale"), cfg).verdict == FAIL


def test_unbounded_variant_fails_once_the_window_reaches_the_bound():
    # V = n is an exact martingale of the escaping spline but is not bounded by 10
    spline = gallery.build("escaping-spline")
    v = Variant(lambda s: Fraction(s[0]), Fraction(10), 1)
    # below the bound the window cannot tell: the certificate is window-relative
    assert refute_act(spline.system, RefutationWitness(v), CheckConfig(9)).verdict == PASS
    r = refute_act(spline.system, RefutationWitness(v), CheckConfig(10))
    assert r.verdict == FAIL and r.counterexamples[0].state == (11,)


@pytest.mark.parametrize("c", [Fraction(1, 3), Fraction(2), Fraction(7, 5)])
def test_scaling_preserves_verdict(c):
    b = gallery.build("captured-spline")
    base = refute_act(b.system, b.refutation, CheckConfig(b.horizon, b.node_budget))
    w = RefutationWitness(b.variant.scaled(c).with_sup(2 * c), "exact-martingale")
    scaled = refute_act(b.system, w, CheckConfig(b.horizon * c, b.node_budget))
    assert scaled.verdict == base.verdict == PASS


def test_mutual_exclusion_on_gallery():
    for name in gallery.names():
        b = gallery.build(name)
        cfg = CheckConfig(b.horizon, b.node_budget, mode=b.mode)
        certified = False
        if b.pd is not None:
            certified |= check_pd_rule(b.system, b.variant, b.pd, cfg).verdict == PASS
        if b.nabla is not None:
            certified |= check_nabla_rule(b.system, b.variant, b.nabla, cfg).verdict == PASS
        refuted = b.refutation is not None and refute_act(b.system, b.refutation, cfg).verdict == PASS
        assert not (certified and refuted), name
