import numpy as np
import pytest

from robustcps.compare import (PIodsCertificate, k_identity, k_linear, k_zero, kld_exponential,
                               kld_iterated, kld_linear_decay)
from robustcps.monitor import (eval_bound, eval_piods, fit_gamma, fit_rho, incremental_bound,
                               rhs_values)


def test_zero_input_gives_rho():
    cert = PIodsCertificate(k_identity(), kld_exponential(0.5), 0.3)
    ev = eval_piods(np.zeros(6), np.zeros(6), cert)
    assert np.allclose(ev.rhs, 0.3) and ev.passed


def test_single_disturbance():
    I = np.zeros(6)
    I[3] = 1.0
    cert = PIodsCertificate(k_identity(), kld_exponential(0.5), 0.0)
    ev = eval_piods(I, np.zeros(6), cert)
    assert ev.rhs[5] == pytest.approx(0.25)
    assert ev.rhs[:3].tolist() == [0.0, 0.0, 0.0]


def test_violation_located():
    cert = PIodsCertificate(k_identity(), kld_exponential(0.5), 0.0)
    ev = eval_piods([1.0, 0.0, 0.0], [0.0, 0.4, 0.3], cert)
    assert not ev.passed and ev.argmin_t == 2 and ev.min_margin == pytest.approx(-0.05)
    assert ev.summary()["verdict"] == "fail"


def test_incremental_examples():
    inc = incremental_bound(kld_exponential(0.5), k_identity())
    assert [inc.push(v) for v in [1, 0, 0]] == pytest.approx([1, 0.5, 0.25])
    inc = incremental_bound(kld_linear_decay(1.4), k_linear(1.4))
    assert [inc.push(v) for v in [0, 1, 0]] == pytest.approx([0, 1.4, 0])


def test_incremental_fallback_matches_bruteforce():
    mu = kld_iterated(lambda c: 0.5 * c * c / (1 + c))
    inc = incremental_bound(mu, k_identity(), 0.1)
    assert inc.note is not None
    I = [0.3, 2.0, 0.0, 0.7, 0.0]
    on = [inc.push(v) for v in I]
    assert on == pytest.approx((rhs_values(np.array(I), mu) + 0.1).tolist(), abs=1e-12)


def test_fast_path_matches_bruteforce(rng):
    for mu in (kld_exponential(0.7), kld_linear_decay(0.3)):
        g = rng.uniform(0, 2, 50)
        assert np.allclose(rhs_values(g, mu, fast=True), rhs_values(g, mu), atol=1e-12)


def test_fit_rho():
    assert fit_rho([([0.0], [1.0])], k_identity(), kld_exponential(0.5)) == 1.0
    traces = [([1.0, 0.0, 0.0], [0.5, 0.2, 0.1])]
    assert fit_rho(traces, k_identity(), kld_exponential(0.5)) <= 0.0 + 1e-12
    assert fit_rho([([1.0, 0.0], [1.5, 0.0])], k_identity(), kld_exponential(0.5)) == pytest.approx(0.5)


def test_fit_gamma():
    traces = [([1.0, 0.0, 0.0], [2.0, 1.0, 0.5])]
    g = fit_gamma(traces, kld_exponential(0.5))
    assert g == pytest.approx(2.0, abs=1e-5)
    assert fit_gamma([([0.0], [1.0])], kld_exponential(0.5)) == float("inf")
    assert fit_gamma([([1.0], [0.0])], kld_exponential(0.5)) == 0.0


def test_eval_bound_and_rows():
    ev = eval_bound([1.0, 1.0], [0.5, 1.0])
    assert ev.passed and ev.min_margin == 0.0
    rows = ev.margin_rows([0.0, 0.0], [0.5, 1.0])
    assert rows[0] == [0, 0.0, 0.5, 1.0, 0.5]


def test_e1_fitted_rho_below_kappa_delta():
    from robustcps.refine import RandomDisturbance, refine, run_batch
    from robustcps.scenarios import example1
    from robustcps.synthesis import SynthesisTarget, synthesize
    sc = example1()
    rc = refine(synthesize(sc.cs_hat, SynthesisTarget(0.0, 1.0)), sc.profile, sc.plant, sc.cs_hat,
                validate=False)
    rng = np.random.default_rng(5)
    logs = run_batch(rc, rng.uniform(-1, 1, (100, 1)),
                     [RandomDisturbance(1.0, 1, seed=i) for i in range(100)], 25)
    traces = [(log.column("I"), log.column("O")) for log in logs]
    rho = fit_rho(traces, k_linear(5.0), kld_exponential(0.8))
    assert rho <= 0.5 + 1e-9
    cert = PIodsCertificate(k_linear(5.0), kld_exponential(0.8), 0.5)
    assert all(eval_piods(I, O, cert).passed for I, O in traces)
    assert k_zero()(3.0) == 0.0
