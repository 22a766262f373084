"""End-to-end acceptance criteria, each printed as one PASS/FAIL line."""

from __future__ import annotations

import json
import math
import random
import time
import warnings
from fractions import Fraction

import numpy as np
import pytest

from actcert import gallery
from actcert.checker import CheckConfig, check_supermartingale, termination_lower_bound
from actcert.cli import main
from actcert.model import PASS, expected_value
from actcert.refute import refute_act
from actcert.sim import SimConfig, exact_reachability, simulate, truncated_stopping_mean
from actcert.synth import (
    TreeSpec,
    birth_death_martingale,
    foster_construction,
    markov_bound,
    pd_from_epsilon,
    tree_variant,
    tree_walk_system,
)


@pytest.fixture
def report(capsys):
    """Print one line per criterion and then fail the test if the criterion failed."""

    def emit(number: int, title: str, ok: bool, detail: str, elapsed: float, limit: float = math.inf):
        in_time = elapsed < limit
        verdict = "PASS" if ok and in_time else "FAIL"
        budget = f" (limit {limit:g} s)" if math.isfinite(limit) else ""
        with capsys.disabled():
            print(f"\n[acceptance {number}] {verdict} {title}: {detail}; {elapsed:.2f} s{budget}")
        assert ok, detail
        assert in_time, f"took {elapsed:.2f} s, limit {limit} s"

    return emit


def cli(argv, capsys):
    code = main([str(a) for a in argv])
    out, _ = capsys.readouterr()
    return code, out


def test_1_tree_table(report):
    t0 = time.perf_counter()
    tree = TreeSpec(lambda d: 2 if d > 0 and d & (d - 1) == 0 else 1)
    v = tree_variant(tree)
    got = [v((d,)) for d in range(9)]
    want = [0, 1, Fraction(3, 2), Fraction(7, 4), 2, Fraction(17, 8), Fraction(9, 4), Fraction(19, 8), Fraction(5, 2)]
    sys = tree_walk_system(tree)
    r = check_supermartingale(sys, v, CheckConfig(Fraction(5, 2)))
    slack = r.condition("supermartingale").worst_slack
    (delta,) = sys.step((4,))
    identity = expected_value(delta, v) == Fraction(1, 3) * Fraction(7, 4) + Fraction(2, 3) * Fraction(17, 8) == 2
    ok = got == want and r.verdict == PASS and slack == 0 and identity
    detail = f"V(0..8) = {', '.join(map(str, got))}; SMart {r.verdict}, worst slack {slack}"
    report(1, "tree variant table", ok, detail, time.perf_counter() - t0, 1.0)


def test_2_symmetric_walk_bound(report):
    t0 = time.perf_counter()
    b = gallery.build("symmetric-walk")
    exact = exact_reachability(b.system, b.variant, 100, (1,), method="exact")
    iterated = exact_reachability(b.system, b.variant, 100, (1,), method="iterate")
    bound = termination_lower_bound(1, 100)
    mc = simulate(b.system, b.variant, SimConfig(100_000, escape_horizon=100, seed=2024), (1,))
    ok = (
        exact.z_min == Fraction(99, 100)
        and bound == Fraction(99, 100)
        and float(bound) == 0.99
        and iterated.residual <= 1e-12
        and abs(float(iterated.z_min) - 0.99) <= 1e-9
        and abs(mc.z_hat - 0.99) <= 0.01
    )
    detail = (
        f"oracle z = {exact.z_min}, value iteration {float(iterated.z_min):.12f} (residual {iterated.residual:.1e}), "
        f"bound {bound}, Monte Carlo {mc.z_hat:.4f} over 1e5 trials"
    )
    report(2, "symmetric walk bound", ok, detail, time.perf_counter() - t0, 10.0)


def test_3_birth_death_and_refutation(report):
    t0 = time.perf_counter()
    v = birth_death_martingale(lambda n: Fraction(1, 3))
    values_ok = all(v((n,)) == Fraction(2**n - 1, 2 ** (n - 1)) for n in range(1, 21)) and v((0,)) == 0
    b = gallery.build("constant-bias-walk")
    r = refute_act(b.system, b.refutation, CheckConfig(b.horizon, b.node_budget))
    ok = values_ok and r.verdict == PASS and r.window.states_visited >= 1000
    detail = f"V(n) = (2^n - 1)/2^(n-1) for n <= 20: {values_ok}; refutation {r.verdict} on {r.window.states_visited} states"
    report(3, "birth-death martingale", ok, detail, time.perf_counter() - t0, 1.0)


def test_4_captured_spline(report):
    t0 = time.perf_counter()
    b = gallery.build("captured-spline")
    k = 1000
    z = exact_reachability(b.system, b.variant, b.variant((k + 1,)), b.start).z_min
    # independent closed form of the partial product 1 - prod_{m=2}^{k+1} (1 - 1/m^2)
    closed = 1 - Fraction(k + 2, 2 * (k + 1))
    r = refute_act(b.system, b.refutation, CheckConfig(b.horizon, b.node_budget))
    ok = z == closed and abs(float(z) - 0.5) < 1e-3 and r.verdict == PASS
    detail = f"escape probability at depth 1000 = {float(z):.6f}; refutation {r.verdict}"
    report(4, "captured spline", ok, detail, time.perf_counter() - t0, 5.0)


def test_5_lgg_scan(report, capsys):
    t0 = time.perf_counter()
    code, out = cli(["scan-lgg", "--max", "1000", "--function", "loglog", "--json"], capsys)
    clean = json.loads(out)
    code_log, out_log = cli(["scan-lgg", "--max", "100", "--function", "log", "--json"], capsys)
    bad = json.loads(out_log)
    near_diagonal = [v for v in bad["violations"] if abs(math.degrees(math.atan2(abs(v[1]), abs(v[0]))) - 45) <= 22.5]
    ok = (
        code == 0
        and clean["violation_count"] == 0
        and code_log == 1
        and bad["violation_count"] >= 1
        and len(near_diagonal) == len(bad["violations"])
    )
    detail = (
        f"loglog N=1000: {clean['violation_count']} violations over {clean['points_scanned']} points; "
        f"log N=100: {bad['violation_count']} violations, {len(near_diagonal)} of the "
        f"{len(bad['violations'])} listed within 22.5 degrees of |x| = |y|"
    )
    report(5, "lgg scan", ok, detail, time.perf_counter() - t0, 60.0)


def _random_distribution(rng: random.Random, scale: float):
    k = rng.randint(4, 8)
    values = np.array([rng.uniform(0, scale) for _ in range(k)])
    weights = np.array([rng.random() + 1e-3 for _ in range(k)])
    return values, weights / weights.sum()


def test_6_lemma_properties(report):
    t0 = time.perf_counter()
    rng = random.Random(6)
    worst_markov = math.inf
    for _ in range(10_000):
        values, probs = _random_distribution(rng, rng.uniform(0.1, 100))
        y = float(values @ probs) * rng.uniform(1.0, 1.5)
        y_prime = rng.uniform(1e-3, 2 * values.max())
        mass = float(probs[values < y_prime].sum())
        worst_markov = min(worst_markov, mass - markov_bound(y, y_prime))
    worst_progress = math.inf
    for _ in range(10_000):
        v_s = rng.uniform(0.1, 100)
        while True:
            values, probs = _random_distribution(rng, 2 * v_s)
            epsilon = v_s - float(values @ probs)
            if epsilon > 1e-9:
                break
        p, d = pd_from_epsilon(v_s, epsilon)
        mass = float(probs[values <= v_s - d].sum())
        worst_progress = min(worst_progress, mass - p)
    ok = worst_markov >= -1e-12 and worst_progress >= -1e-12
    detail = f"min(mass - bound) = {worst_markov:.3g} for markov_bound, {worst_progress:.3g} for pd_from_epsilon, 1e4 instances each"
    report(6, "lemma property suites", ok, detail, time.perf_counter() - t0)


def catalan_first_passage(t: int) -> float:
    if t % 2 == 0:
        return 0.0
    m = (t - 1) // 2
    return math.exp(math.lgamma(2 * m + 1) - math.lgamma(m + 1) - math.lgamma(m + 2) - (2 * m + 1) * math.log(2))


def test_7_foster_construction(report):
    t0 = time.perf_counter()
    b = gallery.build("symmetric-walk")
    i_max = 50
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = foster_construction(b.system, 50_000, i_max)
    v = res.variant
    values = np.array([v((i,)) for i in range(i_max + 1)])
    shape_ok = values[0] == 0 and np.all(values >= 0) and np.all(np.diff(values) > 0)
    # per state: E V - V <= 1e-6 + the reported truncation excess
    worst = -math.inf
    for i in range(1, i_max):
        (delta,) = b.system.step((i,))
        e = sum(float(p) * v(s) for s, p in delta.support)
        worst = max(worst, e - v((i,)) - res.smart_excess_bound[i - 1])
    excess = float(res.smart_excess_bound[: i_max - 1].max())
    r = check_supermartingale(b.system, v, CheckConfig(float(values[i_max - 1]), mode="float", tolerance=1e-6 + excess))
    col1 = res.table.f[:, 0]
    catalan = np.array([catalan_first_passage(t) for t in range(1, col1.size + 1)])
    catalan_err = float(np.abs(col1 - catalan).max())
    ok = shape_ok and worst <= 1e-6 and r.verdict == PASS and catalan_err <= 1e-12
    detail = (
        f"V(1) = {values[1]:.6f}, V(50) = {values[i_max]:.4f}, max(E V - V - excess) = {worst:.2e}, "
        f"SMart {r.verdict} at tolerance 1e-6 + {excess:.2e}, Catalan error {catalan_err:.1e}"
    )
    report(7, "Foster construction", ok, detail, time.perf_counter() - t0, 60.0)


def _cli_verdict(b, tmp_path, capsys):
    if b.expected == gallery.NO_CERTIFICATE:
        code, _ = cli(["check", f"gallery:{b.name}"], capsys)
        return code == 3
    if b.dsl is not None:
        code, text = cli(["examples", "emit", b.name], capsys)
        assert code == 0
        target = tmp_path / f"{b.name}.acts"
        target.write_text(text)
        common = ["--horizon", str(b.horizon), "--budget", b.node_budget]
    else:
        target = f"gallery:{b.name}"
        common = []
    if b.expected == gallery.REFUTE_PASS:
        argv = ["refute", target, *common, "--json"]
        if b.dsl is not None:
            argv += ["--bound", str(b.refutation.v.declared_sup)]
            if b.refutation.mode == "exact-martingale":
                argv.append("--exact-martingale")
    else:
        rule = "pd" if b.expected == gallery.PD_PASS else "nabla"
        argv = ["check", target, "--rule", rule, *common, "--json"]
    code, out = cli(argv, capsys)
    return code == 0 and json.loads(out)["verdict"] == PASS


def test_8_gallery_regression(report, tmp_path, capsys):
    t0 = time.perf_counter()
    outcomes = {b.name: _cli_verdict(b, tmp_path, capsys) for b in map(gallery.build, gallery.names())}
    failed = [name for name, ok in outcomes.items() if not ok]
    caps = [2**k for k in range(3, 11)]
    means = {}
    for name in ("tinsel", "curtain"):
        b = gallery.build(name)
        sim_means, oracle = [], []
        for cap in caps:
            code, out = cli(["simulate", f"gallery:{name}", "--trials", 4000, "--max-steps", cap, "--seed", 8, "--json"], capsys)
            assert code == 0
            sim_means.append(json.loads(out)["truncated_mean_steps"])
            oracle.append(truncated_stopping_mean(b.system, b.start, cap))
        means[name] = (sim_means, oracle)
    monotone = all(
        np.all(np.diff(sim) > 0) and np.all(np.diff(orc) > 0) for sim, orc in means.values()
    )
    ok = not failed and outcomes["symmetric-walk-demonic"] and monotone
    detail = (
        f"{len(outcomes) - len(failed)}/{len(outcomes)} bundles reproduce their verdicts"
        + (f" (failed: {', '.join(failed)})" if failed else "")
        + "; truncated means over caps 2^3..2^10: "
        + "; ".join(f"{n} {', '.join(f'{m:.1f}' for m in orc)}" for n, (_, orc) in means.items())
    )
    report(8, "gallery regression", ok, detail, time.perf_counter() - t0)
