"""The three worked instances: the scalar contraction (``e1``), the boost
converter (``boost``) and the mobile robot with package dropouts and a
reference cycle (``robot``).

Builders return a :class:`Scenario` with the concrete costed system, the
finite abstraction, the relation profile and the constants; ``run_*``
functions execute the full pipeline and return a JSON-ready report.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .abstraction import GridSpec, SwitchedAffinePlant, abstract_plant, operator_norm
from .compare import PIodsCertificate, k_identity, k_sat_linear, k_zero, kld_zero
from .compose import (FullSync, ZeroControlWhen, compose, compose_hybrid, identity_profile,
                      lift_interconnection)
from .core import BlockedExecution, Box, CostedSystem, CostFn
from .formats import load_data_system
from .monitor import eval_bound
from .refine import DropoutDisturbance, JointDisturbance, RandomDisturbance, refine, run_batch
from .relations import CostGains, Sampling, check_acasr, check_acsr, gamma_bounds, transport_acsr
from .synthesis import (SynthesisTarget, Unrealizable, closed_loop, frontier, synthesize,
                        verify_closed_loop)

BOOST_A1 = [[0.9917, 0.0], [0.0, 0.9964]]
BOOST_B1 = [0.1660, 0.0]
BOOST_A2 = [[0.9903, -0.0330], [0.0354, 0.9959]]
BOOST_B2 = [0.1659, 0.0030]
BOOST_DOMAIN = Box([1.3, 5.7], [1.7, 5.8])
BOOST_KAPPA = 0.25e-3 / math.sqrt(2)
BOOST_BETA = 0.997

ROBOT_KAPPA = 0.05
ROBOT_BETA = 0.8
ROBOT_X10 = (0.0, 0.0)


@dataclass
class Scenario:
    name: str
    scale: float
    plant: CostedSystem            # concrete system with costs
    cs_hat: CostedSystem           # finite abstraction with costs
    profile: object                # relation from the abstraction to the plant
    gains: CostGains
    constants: dict = field(default_factory=dict)
    reference: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)


def _dist_to_box(X, box: Box, norm="2"):
    X = np.atleast_2d(X)
    gap = np.maximum(box.lo - X, 0) + np.maximum(X - box.hi, 0)
    return np.linalg.norm(gap, ord=np.inf if norm == "inf" else 2, axis=1)


# ---------------------------------------------------------------------------
# scalar contraction x+ = 0.6 x + u
# ---------------------------------------------------------------------------


def example1(scale: float = 1.0, *, disturbance_bound: float = 1.0) -> Scenario:
    eta = 0.2 * scale
    kappa = eta
    D = Box([-1.0], [1.0])
    plant = SwitchedAffinePlant([([[0.6]], [0.0])], D, norm="inf",
                                disturbance_bound=disturbance_bound, name="e1")
    # 0.6 is the declared contraction; it equals the operator norm here
    cs_hat, prof, rep = abstract_plant(plant, GridSpec(D, eta, kappa=kappa), name="e1-abstraction")
    prof = prof.with_params(beta=0.6)
    gen = plant.generator()
    I = CostFn(lambda x, u: float(np.abs(u[1]).max()),
               batch_fn=lambda X, UC, UD: np.abs(UD).max(axis=1), name="|u|")
    O = CostFn(lambda x, u: float(_dist_to_box(x, D)[0]),
               batch_fn=lambda X, UC, UD: _dist_to_box(X, D), name="|x|_D")
    cs = CostedSystem(gen, I, O)
    kd, gd, _ = gamma_bounds(prof, 0.8)
    return Scenario("e1", scale, cs, cs_hat, prof, CostGains(k_zero(), k_identity()),
                    constants={"kappa": kappa, "beta": 0.6, "lambda": 1.0, "eta": eta,
                               "states": cs_hat.system.n_states, "beta_prime": 0.8,
                               "kappa_delta": kd, "gamma_delta": gd},
                    reference={"kappa": 0.2, "beta": 0.6, "lambda": 1.0, "kappa_delta": 0.5,
                           "states": 5},
                    extras={"report": rep.to_json(), "domain": D})


def run_e1(scale=1.0, *, runs=1000, horizon=20, seed=0, threads=1) -> dict:
    """Abstraction, relation check, bound constants and seeded disturbed runs
    checked against max_{t'} (beta')^{t-t'} gamma_D |u_t'| + kappa_D."""
    t0 = time.perf_counter()
    sc = example1(scale)
    verdict = check_acsr(sc.plant, sc.cs_hat, _plain(sc.profile), sc.gains, threads=threads)
    c = sc.constants
    ctl = synthesize(sc.cs_hat, SynthesisTarget(0.0, 1.0, 0.0))
    rc = refine(ctl, sc.profile, sc.plant, sc.cs_hat, validate=False)
    cert_hat = PIodsCertificate(k_zero(), kld_zero(), 0.0)
    ev = transport_acsr(cert_hat, sc.profile, sc.gains, c["beta_prime"])
    rng = np.random.default_rng(seed)
    x0s = rng.uniform(-1.0, 1.0, size=(runs, 1))
    seeds = rng.integers(0, 2**31, size=runs)
    logs = run_batch(rc, x0s, [RandomDisturbance(1.0, 1, seed=int(s)) for s in seeds], horizon)
    worst, fails, blocked = _score(logs, lambda log: ev(np.zeros(len(log)), log.column("I")))
    elapsed = time.perf_counter() - t0
    return {
        "scenario": "e1", "scale": scale,
        "abstraction": {"states": c["states"]},
        "relation": verdict.to_json(),
        "constants": {k: c[k] for k in ("kappa", "beta", "lambda", "beta_prime", "kappa_delta",
                                        "gamma_delta")},
        "reference": sc.reference,
        "runs": {"count": runs, "horizon": horizon, "failures": fails, "blocked": blocked,
                 "min_margin": worst},
        "inequality": f"|x_t|_D <= max_t' {c['beta_prime']}^(t-t') * {c['gamma_delta']:.6g} |u_t'| "
                      f"+ {c['kappa_delta']:.6g}",
        "passed": bool(verdict.passed and fails == 0 and blocked == 0),
        "elapsed_s": elapsed,
    }


def _score(logs, bound_fn, *, with_argmin=False):
    """(min margin, failed runs, blocked runs[, worst run index]) of batch
    run logs against the bound computed by ``bound_fn(log)``."""
    worst, fails, blocked, arg = math.inf, 0, 0, None
    for r, log in enumerate(logs):
        if isinstance(log, BlockedExecution):
            blocked += 1
            continue
        res = eval_bound(bound_fn(log), log.column("O"))
        if res.min_margin < worst:
            worst, arg = res.min_margin, r
        fails += not res.passed
    return (worst, fails, blocked, arg) if with_argmin else (worst, fails, blocked)


def _plain(profile):
    """The same ball profile read concrete-to-abstract (plain orientation)."""
    from dataclasses import replace
    return replace(profile, orientation="plain")


# ---------------------------------------------------------------------------
# boost converter
# ---------------------------------------------------------------------------


def boost(scale: float = 20.0, *, beta: float = BOOST_BETA, disturbance_bound=None) -> Scenario:
    kappa = BOOST_KAPPA * scale
    D = BOOST_DOMAIN
    bound = kappa if disturbance_bound is None else disturbance_bound
    plant = SwitchedAffinePlant([(BOOST_A1, BOOST_B1), (BOOST_A2, BOOST_B2)], D, norm="2",
                                disturbance_bound=bound, name="boost")
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        cs_hat, prof, rep = abstract_plant(plant, GridSpec(D, kappa / math.sqrt(2), kappa=kappa),
                                           name="boost-abstraction")
    build = time.perf_counter() - t0
    prof = prof.with_params(beta=beta)
    I = CostFn(lambda x, u: float(np.linalg.norm(u[1])),
               batch_fn=lambda X, UC, UD: np.linalg.norm(UD, axis=1), name="|u^d|_2")
    O = CostFn(lambda x, u: float(_dist_to_box(x, D)[0]),
               batch_fn=lambda X, UC, UD: _dist_to_box(X, D), name="|x|_D")
    cs = CostedSystem(plant.generator(), I, O)
    n1 = operator_norm(np.array(BOOST_A1))
    n2 = operator_norm(np.array(BOOST_A2))
    return Scenario("boost", scale, cs, cs_hat, prof, CostGains(k_zero(), k_identity()),
                    constants={"kappa": kappa, "beta": beta, "lambda": 1.0, "norm_A1": n1,
                               "norm_A2": n2, "states": cs_hat.system.n_states,
                               "transitions": cs_hat.system.n_transitions,
                               "kappa_delta": kappa / (1 - beta), "build_s": build},
                    reference={"kappa": BOOST_KAPPA, "beta": BOOST_BETA, "kappa_delta": BOOST_KAPPA / (1 - BOOST_BETA)},
                    extras={"report": rep.to_json(), "warnings": [str(w.message) for w in caught],
                            "domain": D, "plant": plant})


def boost_drift_analysis() -> dict:
    """Why no switching policy keeps the printed boost model inside D.

    Over D the per-step drifts f_m(x) = A_m x + B_m - x have sign-definite
    components: a bounded trajectory needs a mode-1 duty ratio p with
    p f_1 + (1 - p) f_2 = 0 on average, and the two coordinates demand
    disjoint ranges of p.
    """
    D = BOOST_DOMAIN
    corners = np.array([[a, b] for a in (D.lo[0], D.hi[0]) for b in (D.lo[1], D.hi[1])])
    A1, B1 = np.array(BOOST_A1), np.array(BOOST_B1)
    A2, B2 = np.array(BOOST_A2), np.array(BOOST_B2)
    f1 = corners @ (A1 - np.eye(2)).T + B1
    f2 = corners @ (A2 - np.eye(2)).T + B2
    # affine drifts: the extremes over the box are attained at corners
    ranges = {}
    for i, name in enumerate(("x1", "x2")):
        a_lo, a_hi = f1[:, i].min(), f1[:, i].max()
        b_lo, b_hi = f2[:, i].min(), f2[:, i].max()
        # p a + (1-p) b = 0  <=>  p = b / (b - a) for opposite signs
        cands = [b / (b - a) for a in (a_lo, a_hi) for b in (b_lo, b_hi) if (b - a) != 0]
        ranges[name] = [float(min(cands)), float(max(cands))]
    overlap = max(ranges["x1"][0], ranges["x2"][0]) <= min(ranges["x1"][1], ranges["x2"][1])
    return {"duty_ratio_x1": ranges["x1"], "duty_ratio_x2": ranges["x2"],
            "compatible": bool(overlap),
            "drift_mode1": [f1.min(axis=0).tolist(), f1.max(axis=0).tolist()],
            "drift_mode2": [f2.min(axis=0).tolist(), f2.max(axis=0).tolist()]}


def run_boost(scale=20.0, *, runs=100, horizon=200, seed=0, threads=1, beta=BOOST_BETA,
              check=True) -> dict:
    sc = boost(scale, beta=beta)
    c = sc.constants
    out = {"scenario": "boost", "scale": scale,
           "norms": {"A1": c["norm_A1"], "A2": c["norm_A2"], "beta": beta},
           "abstraction": {"states": c["states"], "transitions": c["transitions"],
                           "build_s": c["build_s"], **sc.extras["report"]},
           "constants": {"kappa": c["kappa"], "kappa_delta": c["kappa_delta"]},
           "reference": sc.reference}
    if check:
        v = check_acasr(sc.plant, sc.cs_hat, sc.profile, sc.gains, threads=threads)
        out["relation"] = v.to_json()
    else:
        v = None
    target = SynthesisTarget(0.0, 1.0, 0.0)
    res = synthesize(sc.cs_hat, target)
    out["synthesis"] = res.report()
    if isinstance(res, Unrealizable):
        out["synthesis"]["analysis"] = boost_drift_analysis()
        out["runs"] = None
        out["passed"] = False
        return out
    rc = refine(res, sc.profile, sc.plant, sc.cs_hat, validate=False)
    cert_hat = target.certificate()
    ev = transport_acsr(cert_hat, sc.profile, sc.gains, (beta + 1) / 2)
    rng = np.random.default_rng(seed)
    init = res.system.coords[res.winning_initial_ids, :2] if hasattr(res, "winning_initial_ids") \
        else sc.cs_hat.system.coords
    x0s = init[rng.integers(len(init), size=runs)]
    oracles = [RandomDisturbance(c["kappa"], 2, norm="2", seed=int(s))
               for s in rng.integers(2**31, size=runs)]
    logs = run_batch(rc, x0s, oracles, horizon)
    worst, fails, blocked = _score(logs, lambda log: ev(np.zeros(len(log)), log.column("I")))
    out["runs"] = {"count": runs, "horizon": horizon, "failures": fails, "blocked": blocked,
                   "min_margin": worst}
    out["passed"] = bool((v is None or v.passed) and fails == 0 and blocked == 0)
    return out


# ---------------------------------------------------------------------------
# robot with package dropouts and a reference cycle
# ---------------------------------------------------------------------------


# full offset lattice times disturbance grid is too large for the composite;
# a seeded subset per (state, control) keeps the check within memory
ROBOT_SAMPLING = Sampling(max_per_pair=32, chunk=8)


def robot(scale: float = 4.0) -> Scenario:
    kappa = ROBOT_KAPPA * scale
    eta = kappa
    domain = Box([-1.0, -1.0], [4.0, 4.0])
    cbox = Box([-3.0, -3.0], [3.0, 3.0])
    plant = SwitchedAffinePlant([(0.8 * np.eye(2), np.zeros(2))], domain, norm="inf",
                                control_box=cbox, initial=np.array([ROBOT_X10]),
                                disturbance_bound=kappa, name="robot")
    grid = GridSpec(domain, eta, kappa=kappa)
    x10 = np.array(ROBOT_X10)
    pts = grid.points()
    init = np.nonzero(np.max(np.abs(pts - x10), axis=1) <= kappa + 1e-9)[0]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sh1, p1, rep = abstract_plant(plant, grid, control_eta=eta, initial=init,
                                      name="robot-abstraction")
    p1 = p1.with_params(beta=ROBOT_BETA)
    drop = load_data_system("dropout").system
    ref = load_data_system("reference").system
    H = ZeroControlWhen("a1")
    H_hat, p12, lift12 = lift_interconnection(H, p1, identity_profile(),
                                              abstract=(sh1.system, drop))
    G_hat, p123, lift123 = lift_interconnection(FullSync(), p12, identity_profile())
    s12_hat = compose(sh1.system, drop, H_hat, name="S12_hat")
    s123_hat = compose(s12_hat, ref, G_hat, name="S123_hat")
    coords = s123_hat.coords           # [x1 (2), a (1), r (2)]
    Ih = coords[:, 2].copy()
    Oh = np.maximum(np.max(np.abs(coords[:, :2] - coords[:, 3:5]), axis=1) - kappa, 0.0)
    cs_hat = CostedSystem(s123_hat, CostFn.state_array(s123_hat, Ih),
                          CostFn.state_array(s123_hat, Oh))
    gen12 = compose_hybrid(plant.generator(), drop, H, name="S12", initial_finite=["a0", "a1"])
    gen123 = compose_hybrid(gen12, ref, FullSync(), name="S123")

    def O_batch(X, UC, UD):
        return np.max(np.abs(X[:, :2] - X[:, 3:5]), axis=1)

    def I_batch(X, UC, UD):
        return X[:, 2] + np.max(np.abs(UD[:, :2]), axis=1)
    cs = CostedSystem(gen123,
                      CostFn(lambda x, u: float(I_batch(np.atleast_2d(x), None,
                                                        np.atleast_2d(u[1]))[0]),
                             batch_fn=I_batch, name="I_d + |w|"),
                      CostFn(lambda x, u: float(O_batch(np.atleast_2d(x), None, None)[0]),
                             batch_fn=O_batch, name="|x1 - x3|"))
    gains = CostGains(k_zero(), k_sat_linear(kappa))
    beta_prime = 0.9
    kd, gd, _ = gamma_bounds(p123, beta_prime)
    return Scenario("robot", scale, cs, cs_hat, p123, gains,
                    constants={"kappa": kappa, "beta": ROBOT_BETA, "lambda": 1.0,
                               "eta_grid": eta, "grid_per_axis": int(grid.counts[0]),
                               "controls": sh1.system.n_controls,
                               "states_S1_hat": sh1.system.n_states,
                               "states": s123_hat.n_states,
                               "transitions": s123_hat.n_transitions,
                               "beta_prime": beta_prime, "kappa_delta": kd, "gamma_delta": gd,
                               "gamma_O_kappa_delta": float(gains.gamma_O(kd))},
                    reference={"kappa": ROBOT_KAPPA, "beta": ROBOT_BETA, "lambda": 1.0,
                           "gamma": 1.4, "eta": 1.4, "printed_constant": 0.25,
                           "kappa_delta": ROBOT_KAPPA / (1 - ROBOT_BETA),
                           "gamma_O_kappa_delta": float(k_sat_linear(ROBOT_KAPPA)(
                               ROBOT_KAPPA / (1 - ROBOT_BETA)))},
                    extras={"report": rep.to_json(), "lift": [lift12.to_json(), lift123.to_json()],
                            "warnings": [str(w.message) for w in caught], "S1_hat": sh1,
                            "p1": p1})


ROBOT_GAMMAS = (0.5, 1.0, 1.4, 2.0, 3.0, 4.0, 6.0)
ROBOT_ETAS = (0.2, 0.4, 0.7, 1.0, 1.4)


def robot_frontier(sc: Scenario, etas=ROBOT_ETAS, gammas=ROBOT_GAMMAS) -> list:
    return [{"eta": e, "gamma_min": g} for e, g in frontier(sc.cs_hat, etas, gammas, 0.0)]


def pick_target(front) -> SynthesisTarget | None:
    """The realizable frontier point with the smallest gain, then largest decay."""
    best = None
    for row in front:
        g = row.get("gamma_min")
        if g is None:
            continue
        key = (g, -row["eta"])
        if best is None or key < best[0]:
            best = (key, SynthesisTarget(g, row["eta"], 0.0))
    return None if best is None else best[1]


def robot_runs(sc: Scenario, rc, target: SynthesisTarget, *, runs=1000, horizon=24, seed=0,
               dropout=True) -> dict:
    c = sc.constants
    ev = transport_acsr(target.certificate(), sc.profile, sc.gains, c["beta_prime"])
    rng = np.random.default_rng(seed)
    oracles = []
    for s in rng.integers(2**31, size=runs):
        o = JointDisturbance(RandomDisturbance(c["kappa"], 2, norm="inf"),
                             DropoutDisturbance(None if dropout else [], horizon=horizon))
        o.reset(int(s))
        oracles.append(o)
    x0s = np.tile([*ROBOT_X10, 0.0, 0.0, 0.0], (runs, 1))
    logs = run_batch(rc, x0s, oracles, horizon)

    def bound(log):
        G = np.array([max(abs(v) for v in rec["ud"][:2]) for rec in log.records])
        return ev(log.column("I"), G)
    worst, fails, blocked, worst_first = _score(logs, bound, with_argmin=True)
    forced_zero = sum(all(abs(u) < 1e-12 for u in rec["uc"])
                      for log in logs if not isinstance(log, BlockedExecution)
                      for rec in log.records if rec["x"][2] == 1.0)
    return {"count": runs, "horizon": horizon, "failures": fails, "blocked": blocked,
            "min_margin": worst, "worst_run": worst_first, "dropout_steps_with_zero_control": forced_zero}


def run_robot(scale=4.0, *, runs=1000, horizon=24, seed=0, threads=1, check=True,
              sampling: Sampling | None = None) -> dict:
    t0 = time.perf_counter()
    sc = robot(scale)
    c = sc.constants
    out = {"scenario": "robot", "scale": scale,
           "abstraction": {k: c[k] for k in ("grid_per_axis", "controls", "states_S1_hat",
                                             "states", "transitions")},
           "profile": {"kappa": sc.profile.kappa, "beta": sc.profile.beta, "lambda": sc.profile.lam},
           "lift": sc.extras["lift"]}
    if check:
        sp = sampling if sampling is not None else ROBOT_SAMPLING
        v = check_acasr(sc.plant, sc.cs_hat, sc.profile, sc.gains, sampling=sp, threads=threads)
        out["relation"] = v.to_json()
        rel_ok = v.passed
    else:
        rel_ok = True
    front = robot_frontier(sc)
    out["frontier"] = front
    target = pick_target(front)
    out["reference_target"] = {"gamma": 1.4, "eta": 1.4,
                           "realizable": bool(synthesize(sc.cs_hat, SynthesisTarget(1.4, 1.4)).realizable)}
    if target is None:
        out["passed"] = False
        return out
    ctl = synthesize(sc.cs_hat, target)
    ver = verify_closed_loop(closed_loop(ctl, sc.cs_hat), target)
    out["synthesis"] = {"target": target.to_json(), "controller_states": ctl.system.n_states,
                        "verified": ver.passed}
    rc = refine(ctl, sc.profile, sc.plant, sc.cs_hat, validate=False)
    out["runs"] = robot_runs(sc, rc, target, runs=runs, horizon=horizon, seed=seed)
    kd = c["kappa_delta"]
    out["constants"] = {"kappa": c["kappa"], "beta_prime": c["beta_prime"], "kappa_delta": kd,
                        "gamma_delta": c["gamma_delta"], "gamma_O_kappa_delta": c["gamma_O_kappa_delta"]}
    out["reference"] = sc.reference
    out["inequality"] = (f"|x1_t - x3_t| <= max_t' max({target.gamma:.6g} I_t' - {target.eta:.6g}(t-t'), 0)"
                         f" + max_t' gamma_O({c['gamma_delta']:.6g} {c['beta_prime']}^(t-t') |w_t'|)"
                         f" + {c['gamma_O_kappa_delta']:.6g}")
    r = out["runs"]
    out["passed"] = bool(rel_ok and ver.passed and r["failures"] == 0 and r["blocked"] == 0)
    out["elapsed_s"] = time.perf_counter() - t0
    return out
