import numpy as np
import pytest

from robustcps.abstraction import GridSpec, SwitchedAffinePlant, abstract_plant
from robustcps.core import Box, CostedSystem, System, reachable_states, simulate
from robustcps.compose import (CompositionError, ExplicitSync, FullSync, ProfileSync,
                               ZeroControlWhen, attach_reference, compose, identity_profile,
                               lift_interconnection, part_costs, project_behavior)
from robustcps.formats import load_data_system
from robustcps.relations import BallProfile, ExplicitRelation, check_acasr
from robustcps.scenarios import robot


@pytest.fixture(scope="module")
def coarse_robot():
    return robot(8.0)


def _identity(s):
    return ExplicitRelation([(s.states[a], s.states[a], s.inputs[u], s.inputs[u])
                             for a, u, _ in s.transitions()], "alternating")


def test_dropout_forces_zero_control(coarse_robot):
    s = coarse_robot.cs_hat.system
    dropped = np.nonzero(s.coords[:, 2] == 1.0)[0]
    assert len(dropped)
    for k in dropped:
        for c in s.enabled_controls(k):
            assert np.all(s.control_coords[c][:2] == 0.0)
    free = np.nonzero(s.coords[:, 2] == 0.0)[0][0]
    assert len(s.enabled_controls(free)) > 1


def test_full_sync_is_parallel_composition(chain, dropout):
    d = dropout.system
    comp = compose(chain, d, FullSync())
    assert comp.n_states == 3 * 2
    assert comp.n_transitions == chain.n_transitions * d.n_transitions
    assert reachable_states(comp, 1) == [("x0", "a0"), ("x0", "a1"), ("x1", "a0"), ("x1", "a1")]


def test_profile_sync_contracts():
    D = Box([-1.0], [1.0])
    plant = SwitchedAffinePlant([([[0.6]], [0.0])], D, norm="inf")
    coarse, _, _ = abstract_plant(plant, GridSpec(D, 0.2))
    fine, _, _ = abstract_plant(plant, GridSpec(D, 0.05))
    prof = BallProfile(0.2, 0.6, 1.0, norm="inf", state_dims=1, dist_free=())
    comp = compose(coarse.system, fine.system, ProfileSync(prof), reachable_only=False)
    assert comp.n_transitions > 0
    for k, _, y in comp.transitions():
        e = abs(comp.coords[k, 0] - comp.coords[k, 1])
        assert abs(comp.coords[y, 0] - comp.coords[y, 1]) <= 0.2 + 0.6 * e + 1e-9


def test_robot_lift_parameters(coarse_robot):
    p = coarse_robot.profile
    assert p.params() == (0.4, 0.8, 1.0)
    assert all(r["assumption_ok"] for r in coarse_robot.extras["lift"])


def test_lift_without_zero_control_rejected():
    D = Box([-1.0], [1.0])
    plant = SwitchedAffinePlant([([[0.5]], [0.0])], D, norm="inf", control_box=Box([0.2], [0.6]))
    sh, p, _ = abstract_plant(plant, GridSpec(D, 0.2), control_eta=0.2)
    drop = load_data_system("dropout").system
    with pytest.raises(CompositionError):
        lift_interconnection(ZeroControlWhen("a1"), p, identity_profile(), abstract=(sh.system, drop))


def test_identity_components_keep_H(dropout, chain):
    s1, s2 = dropout.system, chain
    H = [(s1.states[a], s2.states[b], s1.inputs[u], s2.inputs[v])
         for a, u, _ in s1.transitions() for b, v, _ in s2.transitions() if (a + b) % 2 == 0 or u == 0]
    H_hat, prof, rep = lift_interconnection(ExplicitSync(H), _identity(s1), _identity(s2),
                                            abstract=(s1, s2), concrete=(s1, s2))
    assert set(H_hat.tuples) == set(H)
    assert prof.params() == (0.0, 0.0, 0.0)
    cc = CostedSystem.zero_costs(compose(s1, s2, ExplicitSync(H)))
    ch = CostedSystem.zero_costs(compose(s1, s2, H_hat))
    assert check_acasr(cc, ch, prof).passed


def test_lift_assumption_violation(dropout):
    s = dropout.system
    one = System(["q"], ["q"], s.inputs, [("q", u, "q") for u in s.inputs])
    rel = ExplicitRelation([("q", x, u, u) for x in s.states for u in s.inputs], "alternating")
    # H_X contains (a1, q) but H allows no input there
    H = [("a0", "q", "bot", "bot")]
    sync = ExplicitSync(H)
    sync.state_ok = lambda i, j: True
    with pytest.raises(CompositionError):
        lift_interconnection(sync, rel, _identity(one), abstract=(one, one), concrete=(s, one))


def test_reference_cycle():
    ref = load_data_system("reference").system
    beh = simulate(ref, "r0", [ref.inputs[0]] * 10)
    assert beh.states == [f"r{i % 8}" for i in range(10)]


def test_robot_output_at_start(coarse_robot):
    cs = coarse_robot.plant
    x = np.zeros(5)
    assert cs.O(x, (np.zeros(3), np.zeros(3))) == 0.0
    assert coarse_robot.cs_hat.system.states[0] == (((0.0, 0.0), "a0"), "r0")


def test_part_costs_and_projection(dropout, chain):
    comp = attach_reference(dropout.system, System(["r"], ["r"], ["e"], [("r", "e", "r")]))
    costed = part_costs(comp, dropout, side=0)
    beh = simulate(comp, ("a0", "r"), [(("bot", "bot"), ("top", "e")), (("bot", "bot"), ("bot", "e"))])
    assert beh.states[1] == ("a1", "r")
    assert costed.I(beh.states[1], beh.inputs[1]) == 1.0
    b1, b2 = project_behavior(comp, beh)
    assert b1.states == ["a0", "a1"] and b1.inputs == ["top", "bot"] and b2.states == ["r", "r"]
