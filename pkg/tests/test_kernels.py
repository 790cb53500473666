import importlib

import numpy as np
import pytest

from robustcps import _kernels_py, kernels

compiled = pytest.importorskip("robustcps._kernels")


def test_dispatch_prefers_compiled():
    assert kernels.IMPL == compiled.IMPL != "python"


def test_pure_override(monkeypatch):
    monkeypatch.setenv("ROBUSTCPS_PURE", "1")
    mod = importlib.reload(kernels)
    try:
        assert mod.IMPL == "python"
    finally:
        monkeypatch.delenv("ROBUSTCPS_PURE")
        importlib.reload(kernels)


@pytest.mark.parametrize("norm_inf", [True, False])
def test_ball_successors_equal(rng, norm_inf):
    centers = rng.uniform(-1.2, 1.2, (200, 2))
    args = (np.array([-3, -2]), np.array([0.4, 0.5]), np.array([7, 5]), 0.45, norm_inf, 1e-9)
    p1, i1 = compiled.ball_successors(centers, *args)
    p2, i2 = _kernels_py.ball_successors(centers, *args)
    assert np.array_equal(np.asarray(p1), p2) and np.array_equal(np.asarray(i1), i2)


def test_rhs_bruteforce_equal(rng):
    g = rng.uniform(0, 3, 80)
    for kind, p in ((0, 0.7), (1, 0.4), (2, 0.0)):
        a = np.asarray(compiled.rhs_bruteforce(g, kind, p))
        b = np.asarray(_kernels_py.rhs_bruteforce(g, kind, p))
        assert np.allclose(a, b, atol=1e-12, rtol=0)


def test_safety_rounds_equal():
    from robustcps.scenarios import robot
    from robustcps.synthesis import SynthesisTarget, _build_game
    sc = robot(8.0)
    game = _build_game(sc.cs_hat, SynthesisTarget(2.0, 0.7), 1_000_000)
    import robustcps.synthesis as syn
    out = []
    for impl in (compiled, _kernels_py):
        syn.kernels.safety_rounds, saved = impl.safety_rounds, syn.kernels.safety_rounds
        try:
            win, rounds, _ = syn._solve(sc.cs_hat, game)
        finally:
            syn.kernels.safety_rounds = saved
        out.append((np.asarray(win).copy(), rounds))
    assert np.array_equal(out[0][0], out[1][0]) and out[0][1] == out[1][1]
