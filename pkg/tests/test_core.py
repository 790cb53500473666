import numpy as np
import pytest

from robustcps.core import (Behavior, BehaviorError, BlockedExecution, CostedSystem, CostFn,
                            Policy, System, is_nonblocking, reachable_states, simulate, step,
                            validate_behavior)
from robustcps.scenarios import example1


def test_self_loop_reachable_and_nonblocking():
    s = System(["x0"], ["x0"], ["u"], [("x0", "u", "x0")])
    assert reachable_states(s) == ["x0"]
    assert is_nonblocking(s) == (True, None)


def test_dropout_reachable_from_a0(dropout):
    d = dropout.system
    s = System(d.states, ["a0"], d.inputs, [(d.states[a], d.inputs[u], d.states[b])
                                            for a, u, b in d.transitions()])
    assert reachable_states(s) == ["a0", "a1"]


def test_chain_horizon(chain):
    assert reachable_states(chain, 1) == ["x0", "x1"]
    assert reachable_states(chain) == ["x0", "x1", "x2"]


def test_blocking_witness():
    s = System(["x0", "x1"], ["x0"], ["u", "v"],
               [("x0", "u", "x1"), ("x0", "v", "x0"), ("x1", "u", "x1")])
    ok, wit = is_nonblocking(s)
    assert not ok
    assert wit == ("x1", "v")


def test_example1_abstraction_nonblocking():
    sc = example1()
    assert sc.cs_hat.system.n_states == 5
    assert is_nonblocking(sc.cs_hat.system)[0]


def test_step_deterministic(chain):
    assert step(chain, "x0", "u") == "x1"


def test_step_example1_concrete():
    sc = example1()
    y = step(sc.plant.system, np.array([0.5]), (np.zeros(0), np.array([0.1])))
    assert y == pytest.approx([0.4])


def test_step_blocked():
    s = System(["x0"], ["x0"], ["u", "v"], [("x0", "u", "x0")])
    with pytest.raises(BlockedExecution):
        step(s, "x0", "v")


def test_seeded_choice_reproducible():
    s = System(["x0", "x1", "x2"], ["x0"], ["u"],
               [("x0", "u", "x1"), ("x0", "u", "x2"), ("x1", "u", "x0"), ("x2", "u", "x0")])
    runs = [simulate(s, "x0", ["u"] * 30, Policy("uniform", seed=7)).states for _ in range(2)]
    assert runs[0] == runs[1]
    assert {"x1", "x2"} <= set(runs[0])


def test_validate_behavior(chain):
    validate_behavior(chain, Behavior(["x0", "x1", "x2"], ["u", "u", "u"]))
    with pytest.raises(BehaviorError):
        validate_behavior(chain, Behavior(["x0", "x2"], ["u", "u"]))
    with pytest.raises(BehaviorError):
        validate_behavior(chain, Behavior(["x1"], ["u"]))


def test_costs_on_behavior(dropout):
    beh = simulate(dropout.system, "a0", ["top", "bot", "bot"]).with_costs(dropout)
    assert beh.states == ["a0", "a1", "a0"]
    assert beh.I.tolist() == [0.0, 1.0, 0.0]
    assert beh.O.tolist() == [0.0, 0.0, 0.0]


def test_cost_table_and_state_array(chain):
    I = CostFn.table(chain, {("x1", "u"): 2.0})
    O = CostFn.state_array(chain, [0.0, 1.0, 3.0])
    cs = CostedSystem(chain, I, O)
    Ik, Ok = cs.key_costs()
    assert Ik.tolist() == [0.0, 2.0, 0.0]
    assert Ok.tolist() == [0.0, 1.0, 3.0]
