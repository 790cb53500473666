"""Acceptance report: one PASS/FAIL line per criterion, printed to the
terminal even under output capture."""
import time

import numpy as np
import pytest

from robustcps import scenarios
from robustcps.abstraction import operator_norm
from robustcps.relations import BallProfile, check_acsr, gamma_bounds
from robustcps.synthesis import SynthesisTarget, synthesize


@pytest.fixture
def report(capsys):
    def emit(label, ok, detail=""):
        with capsys.disabled():
            print(f"\nACCEPTANCE {label}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
        return ok
    return emit


# ---------------------------------------------------------------------------
# 1. one-dimensional example
# ---------------------------------------------------------------------------


def test_c1_example1_pipeline(report):
    t0 = time.perf_counter()
    sc = scenarios.example1()
    states = sc.cs_hat.system.n_states
    v = check_acsr(sc.plant, sc.cs_hat, scenarios._plain(sc.profile), sc.gains)
    kd = gamma_bounds(BallProfile(0.2, 0.6, 1.0), 0.8)[0]
    rep = scenarios.run_e1(runs=1000, seed=0)
    elapsed = time.perf_counter() - t0
    r = rep["runs"]
    ok = (states == 5 and sc.profile.params() == (0.2, 0.6, 1.0) and v.passed
          and abs(kd - 0.5) < 1e-12 and r["count"] == 1000 and r["failures"] == 0
          and r["min_margin"] >= -1e-9 and elapsed < 5.0)
    report("1 example-1 pipeline", ok,
           f"(states={states}, relation={v.passed}, kappa_delta={kd:.6g}, runs={r['count']}, "
           f"min margin={r['min_margin']:.4g}, {elapsed:.2f}s)")
    assert ok


# ---------------------------------------------------------------------------
# 2. boost converter
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def boost_run():
    t0 = time.perf_counter()
    sc = scenarios.boost(20.0)
    build = time.perf_counter() - t0
    return sc, build


def test_c2_boost_norms_and_build(report, boost_run):
    sc, build = boost_run
    A1, A2 = np.array(scenarios.BOOST_A1), np.array(scenarios.BOOST_A2)
    n1, n2 = operator_norm(A1, "2"), operator_norm(A2, "2")
    ok = n1 <= 0.997 and n2 <= 0.997 and abs(n1 - 0.9964) <= 1e-4 and build < 60.0
    report("2a boost norms and coarse build", ok,
           f"(|A1|={n1:.6f}, |A2|={n2:.6f}, {sc.cs_hat.system.n_states} states in {build:.2f}s)")
    assert ok


@pytest.mark.xfail(strict=True, reason="no invariance controller exists for the printed boost "
                   "matrices and target box: the duty ratios holding x1 and x2 are disjoint")
def test_c2_boost_invariance_controller(report, boost_run):
    sc, _ = boost_run
    ctl = synthesize(sc.cs_hat, SynthesisTarget(0.0, 1.0, 0.0))
    report("2b boost invariance controller", ctl.realizable,
           f"(losing initial states: {len(ctl.losing_initial)})" if not ctl.realizable else "")
    assert ctl.realizable


@pytest.mark.xfail(strict=True, reason="the closed-loop runs need the invariance controller of 2b")
def test_c2_boost_closed_loop_runs(report):
    rep = scenarios.run_boost(20.0, runs=100, seed=0)
    r = rep.get("runs")
    ok = bool(r) and r["count"] == 100 and r["failures"] == 0 and r["min_margin"] >= -1e-9
    report("2c boost closed-loop runs", ok, "" if r else "(no controller to run)")
    assert ok


# ---------------------------------------------------------------------------
# 3. robot at scale 4
# ---------------------------------------------------------------------------


def test_c3_robot_pipeline(report):
    rep = scenarios.run_robot(4.0, runs=1000, seed=0)
    prof, v, syn, r = rep["profile"], rep["relation"], rep["synthesis"], rep["runs"]
    params_ok = (abs(prof["kappa"] - 4 * scenarios.ROBOT_KAPPA) < 1e-12 and prof["beta"] == 0.8
                 and prof["lambda"] == 1.0)
    ok = (params_ok and v["passed"] and syn["verified"] and syn["target"]["rho"] == 0.0
          and r["count"] == 1000 and r["failures"] == 0 and r["blocked"] == 0)
    front = ", ".join(f"({row['gamma_min']}, {row['eta']})" for row in rep["frontier"])
    report("3 robot pipeline at scale 4", ok,
           f"(profile=({prof['kappa']:.3g}, {prof['beta']}, {prof['lambda']}), relation={v['passed']}, "
           f"target=({syn['target']['gamma']}, {syn['target']['eta']}), verified={syn['verified']}, "
           f"runs={r['count']}, failures={r['failures']}, frontier (gamma, eta): {front})")
    assert ok


# ---------------------------------------------------------------------------
# 4. and 5. randomized suites
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("name", ["kld", "combinators", "monitor", "eps", "composition",
                                  "synthesis", "nonblocking"])
def test_c4_property_suites(report, suite_results, name):
    r = suite_results(name)
    report(f"4 {r.name}", r.passed, f"({r.cases} cases, {r.n_failed} failures)")
    assert r.passed, r.failures


def test_c5_transport(report, suite_results):
    r = suite_results("transport")
    report("5 certificate transport", r.passed, f"({r.cases} cases, {r.n_failed} failures)")
    assert r.passed, r.failures
