import numpy as np
import pytest

from robustcps.core import System
from robustcps.formats import load_data_system


@pytest.fixture
def dropout():
    return load_data_system("dropout")


@pytest.fixture
def chain():
    return System(["x0", "x1", "x2"], ["x0"], ["u"],
                  [("x0", "u", "x1"), ("x1", "u", "x2"), ("x2", "u", "x2")])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def suite_results():
    """Randomized suites run once per session, shared with the acceptance report."""
    import suites
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = suites.ALL[name]()
        return cache[name]
    return get
