from __future__ import annotations

import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from actcert import gallery
from actcert.checker import CheckConfig, check_nabla, check_supermartingale
from actcert.model import (
    PASS,
    Distribution,
    ModelError,
    MonotoneStepFn,
    NablaWitness,
    TransitionSystem,
    Variant,
    VariantDomainError,
    expected_value,
)
from actcert.synth import (
    CertifiedSystem,
    Component,
    TreeSpec,
    _foster_values,
    birth_death_martingale,
    compose_nabla,
    diamond_index,
    first_passage_table,
    foster_construction,
    markov_bound,
    pd_from_epsilon,
    pd_witness_from_nabla,
    spline_variant,
    staircase_witness,
    tree_variant,
    tree_walk_system,
)

HALF = Fraction(1, 2)


def catalan_first_passage(t: int) -> float:
    """P(first hit of 0 at step t from 1) for the symmetric walk: C_m / 2^(2m+1) at t = 2m+1."""
    if t % 2 == 0:
        return 0.0
    m = (t - 1) // 2
    return math.exp(math.lgamma(2 * m + 1) - math.lgamma(m + 1) - math.lgamma(m + 2) - (2 * m + 1) * math.log(2))


def test_markov_bound_examples():
    assert markov_bound(1, 4) == Fraction(3, 4)
    assert markov_bound(5, 4) == 0
    assert markov_bound(0.5, 1.0) == 0.5
    with pytest.raises(ValueError):
        markov_bound(1, 0)


def test_pd_from_epsilon_examples():
    assert pd_from_epsilon(Fraction(3), Fraction(2)) == (HALF, Fraction(1))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        pd_from_epsilon(Fraction(3), Fraction(5))
    with pytest.warns(UserWarning, match="degenerate"):
        assert pd_from_epsilon(Fraction(1), Fraction(2))[0] == 1


def test_tree_variant_uniform_trees():
    line = tree_variant(TreeSpec(lambda d: 1))
    assert [line((d,)) for d in range(5)] == [0, 1, 2, 3, 4]
    binary = tree_variant(TreeSpec(lambda d: 2))
    assert binary((3,)) == HALF + Fraction(1, 4) + Fraction(1, 8)


def test_tree_variant_is_exact_martingale_off_root():
    tree = TreeSpec(lambda d: 3 if d % 3 == 0 else 1)
    sys = tree_walk_system(tree)
    v = tree_variant(tree)
    for d in range(1, 40):
        (delta,) = sys.step((d,))
        assert expected_value(delta, v) == v((d,))


def test_tree_variant_depth_limit():
    v = tree_variant(TreeSpec(lambda d: 2), max_depth=5)
    with pytest.raises(VariantDomainError):
        v((6,))


@settings(max_examples=50)
@given(st.lists(st.fractions(min_value=Fraction(1, 10), max_value=Fraction(9, 10), max_denominator=20), min_size=12, max_size=12))
def test_birth_death_martingale_is_exact(qs):
    v = birth_death_martingale(lambda n: qs[n - 1], max_n=12)
    for n in range(1, 11):
        q = qs[n - 1]
        assert q * v((n - 1,)) + (1 - q) * v((n + 1,)) == v((n,))


def test_birth_death_rejects_bad_q():
    with pytest.raises((ValueError, ModelError)):
        birth_death_martingale(lambda n: Fraction(0))((3,))


def test_spline_variant_is_exact_martingale():
    esc = lambda n: Fraction(1, (n + 1) ** 2)  # noqa: E731
    v = spline_variant(esc)
    for n in range(1, 30):
        assert esc(n) * 0 + (1 - esc(n)) * v((n + 1,)) == v((n,))
        assert v((n,)) == Fraction(2 * n, n + 1)


def test_staircase_is_below_samples_and_monotone():
    samples = [(Fraction(1), Fraction(1)), (Fraction(2), Fraction(1, 3)), (Fraction(3), HALF), (Fraction(5), Fraction(1, 4))]
    f = staircase_witness(samples)
    for v, c in samples:
        assert f(v) <= c
    assert f(Fraction(3)) == Fraction(1, 3)


def test_pd_witness_from_nabla_constant():
    w = pd_witness_from_nabla(NablaWitness(MonotoneStepFn.constant(Fraction(1))), Fraction(8))
    assert w.d(Fraction(8)) == HALF
    assert w.p(Fraction(8)) == HALF / (8 - HALF)
    assert w.p(Fraction(1, 2)) == 1


def test_first_passage_catalan_small():
    b = gallery.build("symmetric-walk")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        table = first_passage_table(b.system, 400, 3)
    for t in range(1, 401):
        assert table.f[t - 1, 0] == pytest.approx(catalan_first_passage(t), abs=1e-15)
    # from 2 the first passage is the convolution of two passages from 1
    conv = np.convolve(table.f[:, 0], table.f[:, 0])[:399]
    assert np.allclose(table.f[1:, 1], conv, atol=1e-15)


def test_first_passage_needs_deterministic_chain():
    b = gallery.build("symmetric-walk-demonic")
    with pytest.raises(ModelError, match="deterministic"):
        first_passage_table(b.system, 10, 2)


def test_foster_all_ones_regression():
    # with exponent 0 each V_i is the total first-passage mass, i.e. 1 up to truncation
    b = gallery.build("symmetric-walk")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        table = first_passage_table(b.system, 4000, 5)
    ones = _foster_values(table, alpha=0.0)
    missing = 1 - table.f.sum(axis=0)
    assert np.allclose(ones + missing, 1.0, atol=1e-12)
    assert np.all(np.diff(ones) < 0)


def test_foster_small_is_increasing_and_nearly_smart():
    b = gallery.build("symmetric-walk")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = foster_construction(b.system, 4000, 8)
    assert np.all(np.diff(res.values) > 0)
    assert res.variant((0,)) == 0.0
    assert np.all(res.interval[:, 0] <= res.values) and np.all(res.values <= res.interval[:, 1])
    for i in range(1, 8):
        (delta,) = b.system.step((i,))
        e = sum(float(p) * res.variant(s) for s, p in delta.support)
        assert e - res.variant((i,)) <= 1e-9 + res.smart_excess_bound[i - 1]


def test_diamond_index_rings():
    idx = diamond_index(12)
    assert idx(0) == (0, 0)
    assert {idx(i) for i in range(1, 5)} == {(1, 0), (0, 1), (-1, 0), (0, -1)}
    assert all(abs(idx(i)[0]) + abs(idx(i)[1]) == 2 for i in range(5, 13))


def _one_step(label, q):
    """From (1,) reach (0,) with probability q, otherwise stay; V = s, nabla = q."""

    def transitions(s):
        if q == 1:
            return [Distribution.point((0,))]
        return [Distribution((((0,), q), ((1,), 1 - q)))]

    sys = TransitionSystem(1, lambda s: s[0] == 0, transitions, ((1,),), label)
    return CertifiedSystem(sys, Variant(lambda s: s[0], None, 1), NablaWitness(MonotoneStepFn.constant(q)))


def _fork():
    """From (1,) move to target (0,) or target (-1,) with probability 1/2 each."""
    sys = TransitionSystem(
        1, lambda s: s[0] <= 0, lambda s: [Distribution((((0,), HALF), ((-1,), HALF)))], ((1,),), "fork"
    )
    return CertifiedSystem(sys, Variant(lambda s: max(s[0], 0), None, 1), NablaWitness(MonotoneStepFn.constant(Fraction(1))))


def test_compose_identity():
    master = _fork()
    assert compose_nabla(master, []) is master
    with pytest.raises(ValueError):
        compose_nabla(master, (c for c in []))


def test_compose_two_components():
    comp = compose_nabla(
        _fork(), [Component(_one_step("a", Fraction(1)), (1,), (0,)), Component(_one_step("b", HALF), (1,), (-1,))]
    )
    assert comp.nabla.nabla.breakpoints == () and comp.nabla.nabla.values == (HALF,)
    r = check_nabla(comp.system, comp.variant, comp.nabla, CheckConfig(10))
    assert r.verdict == PASS
    assert check_supermartingale(comp.system, comp.variant, CheckConfig(10)).verdict == PASS
    start = comp.system.initial_states[0]
    assert comp.variant(start) == 2
