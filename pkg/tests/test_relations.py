from dataclasses import replace

import numpy as np
import pytest

from robustcps.compare import PIodsCertificate, k_sat_linear, kld_linear_decay
from robustcps.core import CostedSystem, CostFn, System, simulate
from robustcps.relations import (BallProfile, CostGains, ExplicitRelation, MatchFailure,
                                 PreconditionError, check_acasr, check_acsr, check_iosr, check_sr,
                                 eps_trace_bound, gamma_bounds, match_trace, max_asr,
                                 mismatch_gamma, transport_acsr)
from robustcps.scenarios import (BOOST_BETA, BOOST_KAPPA, ROBOT_BETA, ROBOT_KAPPA, _plain, boost,
                                 example1)


def _identity(s, orientation="plain"):
    return ExplicitRelation([(s.states[a], s.states[a], s.inputs[u], s.inputs[u])
                             for a, u, _ in s.transitions()], orientation)


def test_sr_identity(dropout):
    assert check_sr(dropout.system, dropout.system, _identity(dropout.system)).passed


def test_sr_missing_initial(dropout):
    s = dropout.system
    rel = ExplicitRelation([t for t in _identity(s).tuples if t[0] != "a1"])
    v = check_sr(s, s, rel)
    assert not v.passed and v.counterexample["clause"] == "1"


def test_sr_to_one_state_abstraction(dropout):
    s = dropout.system
    one = System(["q"], ["q"], s.inputs, [("q", u, "q") for u in s.inputs])
    rel = ExplicitRelation([("q", x, u, u) for x in s.states for u in s.inputs])
    assert check_sr(s, one, rel).passed


def test_iosr_costs(dropout):
    s = dropout.system
    rel = _identity(s)
    zero = CostedSystem.zero_costs(s)
    assert check_iosr(zero, zero, rel, 0.0).passed
    ones = CostedSystem(s, CostFn.zero(), CostFn(lambda x, u: 1.0))
    v = check_iosr(ones, zero, rel, 0.0)
    assert not v.passed and v.counterexample["clause"] == "cost_O"
    assert check_iosr(ones, zero, rel, 1.0).passed


def test_e1_acsr_and_wrong_beta():
    sc = example1()
    p = _plain(sc.profile)
    assert p.params() == (0.2, 0.6, 1.0)
    assert check_acsr(sc.plant, sc.cs_hat, p, sc.gains).passed
    v = check_acsr(sc.plant, sc.cs_hat, replace(p, beta=0.5), sc.gains)
    assert not v.passed and v.counterexample["clause"] == "2"


def test_e1_small_kappa_fails_clause1():
    sc = example1()
    v = check_acsr(sc.plant, sc.cs_hat, replace(_plain(sc.profile), kappa=0.1), sc.gains)
    assert not v.passed and v.counterexample["clause"] == "1"


def test_boost_wrong_beta():
    sc = boost(20.0, beta=0.9)
    v = check_acasr(sc.plant, sc.cs_hat, sc.profile, sc.gains)
    assert not v.passed and v.counterexample["clause"] == "2"


def test_acasr_zero_profile_identity(dropout):
    s = dropout.system
    assert check_acasr(dropout, dropout, _identity(s, "alternating")).passed


def test_orientation_preconditions():
    sc = example1()
    with pytest.raises(PreconditionError):
        check_acsr(sc.plant, sc.cs_hat, sc.profile, sc.gains)
    with pytest.raises(PreconditionError):
        check_acasr(sc.plant, sc.cs_hat, _plain(sc.profile), sc.gains)


def test_max_asr_identity_contains_diagonal(dropout):
    s = dropout.system
    rel, rep = max_asr(s, s)
    assert {(x, x) for x in s.states} <= rel.pairs
    assert not rep["empty"]


def test_max_asr_merged(dropout):
    s = dropout.system
    one = System(["q"], ["q"], s.inputs, [("q", u, "q") for u in s.inputs])
    rel, _ = max_asr(one, s)
    assert rel.pairs == {("q", "a0"), ("q", "a1")}


def test_max_asr_empty_without_concrete_control():
    a = System(["p"], ["p"], None, [("p", ("c", "d"), "p")], controls=["c"], disturbances=["d"])
    b = System(["q"], ["q"], None, [], controls=["e"], disturbances=["d"])
    rel, rep = max_asr(a, b)
    assert len(rel) == 0 and rep["empty"]


def test_match_trace_e1():
    sc = example1()
    p = _plain(sc.profile)
    g = sc.plant.system
    zero = simulate(g, np.array([0.0]), [(np.zeros(0), np.array([0.0]))] * 8)
    m = match_trace(sc.plant, sc.cs_hat, p, zero)
    want = [0.2 * (1 - 0.6 ** (t + 1)) / 0.4 for t in range(8)]
    assert m.eps == pytest.approx(want)
    assert m.eps[0] == 0.2 and m.eps[1] == pytest.approx(0.32)
    kick = simulate(g, np.array([0.0]), [(np.zeros(0), np.array([v])) for v in (1.0, 0.0, 0.0)])
    m = match_trace(sc.plant, sc.cs_hat, p, kick)
    assert m.eps[1] == pytest.approx(1.32)
    assert np.all(m.dist <= m.eps + 1e-9)
    assert np.all(m.eps <= eps_trace_bound(p, 0.8, m.sd)[:-1] + 1e-9)


def test_match_trace_fails_outside_kappa():
    sc = example1()
    beh = simulate(sc.plant.system, np.array([1.5]), [(np.zeros(0), np.array([0.0]))])
    with pytest.raises(MatchFailure):
        match_trace(sc.plant, sc.cs_hat, _plain(sc.profile), beh)


def test_gamma_bounds():
    kd, gd, mu = gamma_bounds(BallProfile(0.2, 0.6, 1.0), 0.8)
    assert kd == pytest.approx(0.5) and gd == pytest.approx(5.0)
    assert mu(1.0, 2) == pytest.approx(0.64)
    assert gamma_bounds(BallProfile(ROBOT_KAPPA, ROBOT_BETA, 1.0), 0.9)[0] == pytest.approx(0.25)
    kd, _, _ = gamma_bounds(BallProfile(BOOST_KAPPA, BOOST_BETA, 1.0), 0.999)
    assert kd == pytest.approx(BOOST_KAPPA / 0.003) and kd == pytest.approx(0.0589, abs=1e-4)
    with pytest.raises(ValueError):
        gamma_bounds(BallProfile(0.2, 0.6, 1.0), 0.5)


def test_eps_trace_bound_zero_input():
    p = BallProfile(0.2, 0.6, 1.0)
    b = eps_trace_bound(p, 0.8, np.zeros(5))
    assert b[0] == 0.2 and np.allclose(b[1:], 0.5)


def test_mismatch_gamma():
    sc = boost(20.0)
    G = mismatch_gamma(sc.profile)
    assert G(None, (np.array([1.0]), np.array([3e-3, 4e-3]))) == pytest.approx(5e-3)
    assert G(None, (np.array([2.0]), np.zeros(2))) == 0.0
    table = [("a", "u"), ("b", "u"), ("a", "v")]
    sd = {("a", "u"): 0.1, ("b", "u"): 0.7, ("a", "v"): 0.2}
    Gf = mismatch_gamma(None, pairs=table, sd=lambda uh, u: sd[(uh, u)])
    assert Gf(None, "u") == 0.7 and Gf(None, "v") == 0.2
    with pytest.raises(PreconditionError):
        mismatch_gamma(None)


def test_transport_zero_trace():
    p = BallProfile(0.05, 0.8, 1.0)
    gains = CostGains(k_sat_linear(0.05), k_sat_linear(0.05))
    cert = PIodsCertificate(k_sat_linear(0.05), kld_linear_decay(1.4), 0.1)
    ev = transport_acsr(cert, p, gains, 0.9)
    b = ev(np.zeros(6), np.zeros(6))
    assert np.allclose(b, float(gains.gamma_O(0.25)) + 0.1)
    on = ev.online()
    I = np.array([0.0, 1.0, 0.0, 0.0])
    G = np.array([0.02, 0.0, 0.05, 0.0])
    assert [on.push(i, g) for i, g in zip(I, G)] == pytest.approx(ev(I, G).tolist(), abs=1e-12)


def test_transport_e1_reduces_to_ex1_form():
    sc = example1()
    from robustcps.compare import k_zero, kld_zero
    ev = transport_acsr(PIodsCertificate(k_zero(), kld_zero(), 0.0), sc.profile, sc.gains, 0.8)
    nu = np.array([1.0, 0.0, 0.5, 0.0])
    want = [max(0.8 ** (t - s) * 5 * nu[s] for s in range(t + 1)) + 0.5 for t in range(4)]
    assert ev(np.zeros(4), nu) == pytest.approx(want)
