import numpy as np
import pytest

from robustcps.compare import (PIodsCertificate, amplify_bound, check_k, check_kld, is_subadditive,
                               k_identity, k_linear, k_power, k_sat_linear, k_table, k_zero,
                               kld_exponential, kld_iterated, kld_linear_decay, kld_zero,
                               max_sum_bound, transform_kld, transport_aiosr)


def test_exponential_values():
    assert kld_exponential(0.8)(1.0, 0) == 1.0
    mu = kld_exponential(0.5)
    assert mu(8.0, 3) == pytest.approx(1.0)
    assert mu(mu(8.0, 1), 2) == pytest.approx(1.0)


def test_linear_decay_values():
    mu = kld_linear_decay(1.4)
    assert mu(1.4, 1) == 0.0
    assert mu(1.4, 0) == 1.4
    mu = kld_linear_decay(0.5)
    assert mu(mu(2.0, 1), 1) == pytest.approx(mu(2.0, 2)) == pytest.approx(1.0)


@pytest.mark.parametrize("mu", [kld_exponential(0.5), kld_exponential(0.99), kld_linear_decay(0.3),
                                kld_zero(), kld_iterated(lambda c: 0.7 * c)])
def test_kld_axioms_on_grid(mu):
    assert check_kld(mu) == []


def test_check_kld_flags_broken_function():
    from robustcps.compare import KldFunction
    bad = KldFunction(lambda c, t: c / (1.0 + t), "harmonic", {})
    assert any("semigroup" in v for v in check_kld(bad))


def test_k_functions():
    for g in (k_identity(), k_linear(2.5), k_power(2.0), k_sat_linear(0.2),
              k_table([0, 1, 2], [0, 3, 4])):
        assert check_k(g) == []
    assert k_sat_linear(0.2)(0.5) == pytest.approx(0.7)
    assert k_table([0, 1, 2], [0, 3, 4])(3.0) == pytest.approx(5.0)
    assert k_linear(3.0).slope == 3.0 and k_zero().slope == 0.0
    assert k_power(2.0).slope is None
    with pytest.raises(ValueError):
        k_linear(0.0)


def test_subadditivity():
    assert is_subadditive(k_sat_linear(0.2))[0]
    ok, wit = is_subadditive(k_power(2.0))
    assert not ok and wit is not None


def test_amplify_bound_examples():
    mu = kld_exponential(0.5)
    gp, sigma = amplify_bound(mu, k_identity(), 1.0)
    assert gp(1.0) == pytest.approx(4.0) and sigma == pytest.approx(4.0)
    _, sigma0 = amplify_bound(mu, k_power(2.0), 0.0)
    assert sigma0 == 0.0
    gp, sigma = amplify_bound(mu, k_power(2.0), 1.0)
    lhs = mu(k_power(2.0)(2.0), 1)
    assert lhs == pytest.approx(2.0)
    assert lhs <= mu(gp(1.0), 1) + sigma


def test_transform_kld_examples():
    mu = kld_exponential(0.5)
    same = transform_kld(mu, k_identity())
    for c in (0.0, 0.3, 2.0):
        for t in range(5):
            assert same(c, t) == pytest.approx(mu(c, t))
    sq = k_power(2.0)
    mp = transform_kld(mu, sq)
    assert mp(sq(2.0), 1) == pytest.approx(sq(mu(2.0, 1))) == pytest.approx(1.0)
    assert mp(sq(1.7), 0) == pytest.approx(sq(1.7))


def test_max_sum_bound_examples():
    e = kld_exponential(0.5)
    m = max_sum_bound(e, e)
    assert m(1.3, 4) == pytest.approx(1.3)
    assert max_sum_bound(kld_zero(), kld_zero())(2.0, 3) == 0.0
    m = max_sum_bound(e, kld_linear_decay(1.0))
    assert m(2.0, 0) == pytest.approx(2.0)


def test_transport_aiosr_examples():
    c0 = transport_aiosr(PIodsCertificate(k_identity(), kld_exponential(0.5), 0.0), 0.0)
    assert c0.rho == 0.0 and c0.gamma(1.5) == pytest.approx(6.0)
    c1 = transport_aiosr(PIodsCertificate(k_identity(), kld_exponential(0.5), 0.0), 0.1)
    assert c1.gamma(1.0) == pytest.approx(4.0) and c1.rho == pytest.approx(0.5)
    c2 = transport_aiosr(PIodsCertificate(k_identity(), kld_linear_decay(1.0), 0.2), 1.0)
    assert c2.rho == pytest.approx(5.2)


def test_certificate_json_roundtrip():
    cert = PIodsCertificate(k_sat_linear(0.05), kld_linear_decay(1.4), 0.25)
    back = PIodsCertificate.from_json(cert.to_json())
    I = np.linspace(0, 3, 7)
    assert np.allclose(back.gamma(I), cert.gamma(I))
    assert back.rho == 0.25 and back.mu(2.0, 1) == pytest.approx(0.6)
    with pytest.raises(ValueError):
        PIodsCertificate(k_identity(), kld_zero(), -1.0)
