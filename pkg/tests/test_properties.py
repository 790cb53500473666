import pytest

import suites


@pytest.mark.parametrize("name", sorted(suites.ALL))
def test_randomized_suite(name, suite_results):
    r = suite_results(name)
    assert r.cases >= r.required, r.line()
    assert r.n_failed == 0, r.failures
