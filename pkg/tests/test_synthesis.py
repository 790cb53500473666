import numpy as np
import pytest

from robustcps.core import CostedSystem, CostFn, System
from robustcps.formats import load_data_system
from robustcps.refine import controller_controls
from robustcps.synthesis import (SynthesisError, SynthesisTarget, Unrealizable, bound_levels,
                                 closed_loop, frontier, synthesize, verify_closed_loop)


def _dropout_io():
    d = load_data_system("dropout")
    return CostedSystem(d.system, d.I, d.I)


def test_bound_levels():
    cs = _dropout_io()
    assert bound_levels(cs, SynthesisTarget(1.4, 1.4)).tolist() == [1.4, 0.0]
    assert bound_levels(cs, SynthesisTarget(1.4, 0.5)).tolist() == pytest.approx([1.4, 0.9, 0.4, 0.0])
    zero = CostedSystem.zero_costs(cs.system)
    assert bound_levels(zero, SynthesisTarget(1.4, 1.4)).tolist() == [0.0]


def test_level_cap():
    with pytest.raises(SynthesisError):
        bound_levels(_dropout_io(), SynthesisTarget(1.0, 1e-4), cap=100)


def test_zero_output_always_realizable(dropout):
    ctl = synthesize(CostedSystem.zero_costs(dropout.system), SynthesisTarget(0.0, 1.0))
    assert ctl.realizable
    assert ctl.winning_initial == ["a0", "a1"] and ctl.losing_initial == []
    cl = closed_loop(ctl, CostedSystem.zero_costs(dropout.system)).system
    assert all(len(controller_controls(cl, k)) for k in range(cl.n_states))


def test_unrealizable_two_state():
    s = System(["x0", "x1"], ["x0"], None,
               [("x0", ("c", "d0"), "x0"), ("x0", ("c", "d1"), "x1"),
                ("x1", ("c", "d0"), "x1"), ("x1", ("c", "d1"), "x1")],
               controls=["c"], disturbances=["d0", "d1"])
    cs = CostedSystem(s, CostFn.zero(), CostFn.state_array(s, [0.0, 1.0]))
    res = synthesize(cs, SynthesisTarget(1.0, 1.0))
    assert isinstance(res, Unrealizable) and not res.realizable
    assert res.losing_initial == ["x0"]
    assert res.report()["realizable"] is False


def test_controller_avoids_bad_control():
    s = System(["x0", "x1"], ["x0"], None,
               [("x0", ("safe", "d"), "x0"), ("x0", ("risky", "d"), "x1"),
                ("x1", ("safe", "d"), "x1"), ("x1", ("risky", "d"), "x1")],
               controls=["safe", "risky"], disturbances=["d"])
    cs = CostedSystem(s, CostFn.zero(), CostFn.state_array(s, [0.0, 1.0]))
    ctl = synthesize(cs, SynthesisTarget(1.0, 1.0))
    assert ctl.realizable
    assert ctl.control_for("x0", 0.0) == "safe"
    assert verify_closed_loop(closed_loop(ctl, cs), ctl.target).passed


def test_verify_dropout():
    cs = _dropout_io()
    assert verify_closed_loop(cs, SynthesisTarget(1.0, 1.0)).passed
    v = verify_closed_loop(cs, SynthesisTarget(0.5, 1.0))
    assert not v.passed
    assert v.path[-1][0] == "a1" and len(v.path) == 1


def test_synthesis_dropout_sound():
    cs = _dropout_io()
    for g in (1.0, 2.0):
        ctl = synthesize(cs, SynthesisTarget(g, 1.0))
        assert ctl.realizable
        assert verify_closed_loop(closed_loop(ctl, cs), ctl.target).passed
    assert not synthesize(cs, SynthesisTarget(0.5, 1.0)).realizable


def test_frontier_monotone():
    cs = _dropout_io()
    rows = frontier(cs, [0.5, 1.0], [0.25, 0.5, 1.0, 2.0])
    assert rows == [(0.5, 1.0), (1.0, 1.0)]


def test_target_validation():
    with pytest.raises(ValueError):
        SynthesisTarget(1.0, 0.0)
    t = SynthesisTarget(1.4, 1.4)
    assert t.update(1.4, 0.0) == 0.0 and t.update(0.0, 1.0) == 1.4
    cert = t.certificate()
    assert cert.mu(1.4, 1) == 0.0 and cert.gamma(1.0) == pytest.approx(1.4)
    assert SynthesisTarget.from_json(t.to_json()) == t
