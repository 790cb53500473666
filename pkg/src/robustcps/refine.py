"""Controller refinement and the closed-loop execution protocol.

Given a controller ``(S_hat_C, R_hat_C)`` for a finite abstraction and a
contractive alternating relation ``R(eps)`` from the abstraction to the
plant, the refined controller is ``S_C = S_hat_C x_{R_hat_C} S_hat`` with
``R_C(eps) = {((xc, xh), x, (uc, uh), u) : (xh, x, uh, u) in R(eps)}``.

At run time the controller tracks one state of ``S_C``: it applies the
concrete control paired with the controller's control, observes the plant
successor and moves to the legal ``S_C`` successor closest to it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .compose import ExplicitSync, ProfileSync, compose, part_costs
from .core import TOL, BlockedExecution, CostedSystem, System, canon
from .relations import (BallProfile, PreconditionError, RelationProfile, Sampling,
                        _as_label_profile, check_acasr)
from .synthesis import Controller

INF = float("inf")


class RefinementError(RuntimeError):
    """A validation of the refined controller failed; carries the witness."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


# ---------------------------------------------------------------------------
# relation views
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ControllerProfile:
    """``R_C``: the plant profile read through the abstract-plant component of
    ``S_C`` states and inputs."""

    base: object

    @property
    def kappa(self):
        return self.base.kappa

    @property
    def beta(self):
        return self.base.beta

    @property
    def lam(self):
        return self.base.lam

    orientation = "alternating"

    def params(self):
        return self.base.params()

    def bind(self, s_c: System, s) -> RelationProfile:
        s_hat = s_c.part_systems[1]
        q = _as_label_profile(self.base, s_hat, s)

        def inner(u_label):
            return s_hat.inputs[s_c.input_parts[s_c.input_id(u_label), 1]]

        return RelationProfile(
            q.kappa, q.beta, q.lam,
            lambda xc, x: q.dist(xc[1], x),
            lambda xc, x, uc, u: q.paired(xc[1], x, inner(uc), u),
            lambda uc, u: q.sd(inner(uc), u),
            "alternating", "controller")


@dataclass(frozen=True)
class ClosedLoopProfile:
    """Plain relation from the closed loop ``S_C x_{R_C} S`` to ``S_C``:
    a closed-loop state ``(k, x)`` is related to ``k`` at the plant distance,
    inputs ``(u_C, u)`` to ``u_C``; ``s_d`` is the plant input distance."""

    base: object
    kappa: float
    beta: float
    lam: float
    orientation: str = "plain"

    def params(self):
        return (self.kappa, self.beta, self.lam)

    def bind(self, s_c: System, closed: System) -> RelationProfile:
        s = closed.part_systems[1]
        rc = ControllerProfile(self.base).bind(s_c, s)

        def split(u):
            a, b = closed.input_parts[closed.input_id(u)]
            return s_c.inputs[a], s.inputs[b]

        def dist(k, cl):
            return rc.dist(k, cl[1]) if cl[0] == k else INF

        def paired(k, cl, uk, ucl):
            uc, u = split(ucl)
            return uc == uk and rc.paired(k, cl[1], uc, u)

        def sd(uk, ucl):
            uc, u = split(ucl)
            return rc.sd(uc, u)
        return RelationProfile(self.kappa, self.beta, self.lam, dist, paired, sd, "plain",
                               "closed-loop")

    def to_json(self):
        return {"kappa": self.kappa, "beta": self.beta, "lambda": self.lam,
                "orientation": "plain", "sd": "plant input distance"}


# ---------------------------------------------------------------------------
# refined controller
# ---------------------------------------------------------------------------


@dataclass
class RefinedController:
    controller: Controller
    s_c: System                  # S_hat_C x_{R_hat_C} S_hat
    cs_hat: CostedSystem
    profile: object
    plant: CostedSystem
    view: System | None = None   # S_C with abstract-plant coordinates
    validation: dict = field(default_factory=dict)

    @property
    def relation(self) -> ControllerProfile:
        return ControllerProfile(self.profile)

    @property
    def s_hat(self) -> System:
        return self.cs_hat.system


def controller_controls(s_c: System, k: int) -> np.ndarray:
    """Controls ``(u_C^c, u^c)`` of ``S_C`` at state ``k`` such that every
    abstract-plant disturbance is matched by some controller disturbance with
    a successor (the non-blocking quantifier order of a controller)."""
    used = s_c.enabled_inputs(k)
    if not len(used):
        return used
    s_hat = s_c.part_systems[1]
    ctrl = s_c.input_control[used]
    dist2 = s_hat.input_dist[s_c.input_parts[used, 1]]
    out = []
    for c in np.unique(ctrl):
        if len(np.unique(dist2[ctrl == c])) == s_hat.n_disturbances:
            out.append(int(c))
    return np.asarray(out, dtype=np.int64)


def _plant_view(s_c: System, s_hat: System) -> System:
    """``S_C`` relabelled with the abstract plant's coordinates, so that a
    ball profile on the abstract plant applies to it directly."""
    nC2, nD2 = s_hat.n_controls, s_hat.n_disturbances
    ctrl = s_hat.control_coords[np.arange(s_c.n_controls) % nC2]
    dist = s_hat.dist_coords[np.arange(s_c.n_disturbances) % nD2]
    src, inp, dst = s_c.transition_arrays()
    view = System.from_ids(s_c.states, s_c.initial_ids, s_c.inputs, src, inp, dst,
                           controls=s_c.controls, disturbances=s_c.disturbances,
                           input_control=s_c.input_control, input_dist=s_c.input_dist,
                           coords=s_hat.coords[s_c.parts[:, 1]], name=f"{s_c.name}[view]",
                           control_coords=ctrl, dist_coords=dist)
    view.parts, view.part_systems, view.input_parts = s_c.parts, s_c.part_systems, s_c.input_parts
    return view


def refine(controller: Controller, profile, plant: CostedSystem, cs_hat: CostedSystem, *,
           validate: bool = True, sampling: Sampling | None = None, threads: int = 1) -> RefinedController:
    """Materialize ``S_C`` and validate the refined relation and the
    controller's non-blocking property."""
    if profile.orientation != "alternating":
        raise PreconditionError("refinement needs an alternating plant profile")
    s_hat = cs_hat.system
    s_c = compose(controller.system, s_hat, ExplicitSync.from_relation(controller.relation),
                  name="S_C")
    view = _plant_view(s_c, s_hat) if s_hat.coords is not None and s_hat.control_coords is not None \
        else None
    rc = RefinedController(controller, s_c, cs_hat, profile, plant, view)
    if validate:
        # every S_C state must offer a control enabled for all disturbances
        for k in range(s_c.n_states):
            if not len(controller_controls(s_c, k)):
                raise RefinementError("controller state without an enabled control",
                                      {"state": s_c.states[k]})
        costed = part_costs(s_c, cs_hat, side=1)
        if plant.system.is_finite:
            verdict = check_acasr(plant, costed, ControllerProfile(profile))
        else:
            if not isinstance(profile, BallProfile):
                raise PreconditionError("generator plants are refined through ball profiles")
            verdict = check_acasr(plant, CostedSystem(view, costed.I, costed.O), profile,
                                  sampling=sampling, threads=threads)
        rc.validation = {"relation": verdict.to_json()}
        if not verdict.passed:
            raise RefinementError("refined relation check failed", verdict.counterexample)
    return rc


def closed_loop_relation(rc: RefinedController) -> ClosedLoopProfile:
    """Plain contractive relation from the closed loop to ``S_C`` with the
    plant profile's parameters."""
    k, b, l_ = rc.profile.params()
    return ClosedLoopProfile(rc.profile, k, b, l_)


def closed_loop_system(rc: RefinedController) -> CostedSystem:
    """``S_C x_{R_C} S`` for a finite plant, with the plant's costs."""
    if not rc.plant.system.is_finite:
        raise PreconditionError("closed loops are materialized for finite plants only")
    comp = compose(rc.s_c, rc.plant.system, ProfileSync(ControllerProfile(rc.profile)),
                   name="closed")
    return part_costs(comp, rc.plant, side=1)


# ---------------------------------------------------------------------------
# disturbance oracles
# ---------------------------------------------------------------------------


class ScriptedDisturbance:
    """Replays a fixed disturbance sequence (vectors or labels)."""

    def __init__(self, seq):
        self.seq = list(seq)

    def reset(self, seed=None):
        pass

    def __call__(self, t, x):
        return self.seq[t] if t < len(self.seq) else self.seq[-1]


class RandomDisturbance:
    """Uniform samples in the box ``|w|_inf <= bound`` on the first ``dims``
    coordinates (scaled into the 2-norm ball when ``norm='2'``), followed by
    ``tail`` fixed coordinates."""

    def __init__(self, bound, dims, *, norm="inf", seed=0, tail=()):
        self.bound, self.dims, self.norm, self.tail = float(bound), int(dims), norm, tuple(tail)
        self.reset(seed)

    def reset(self, seed=None):
        self.rng = np.random.default_rng(seed)

    def __call__(self, t, x):
        w = self.rng.uniform(-self.bound, self.bound, self.dims)
        if self.norm == "2":
            n = np.linalg.norm(w)
            if n > self.bound:
                w *= self.bound / n
        return np.concatenate([w, np.asarray(self.tail, dtype=float)])


class DropoutDisturbance:
    """Discrete dropout source: ``top`` (coordinate 1) at the scheduled steps
    or, when ``at`` is None, once at a seeded random step below ``horizon``;
    ``bot`` (coordinate 0) otherwise.  Never two consecutive dropouts."""

    def __init__(self, at=None, *, horizon=20, seed=0):
        self.fixed = None if at is None else sorted(set(at))
        self.horizon = horizon
        self.reset(seed)

    def reset(self, seed=None):
        rng = np.random.default_rng(seed)
        self.steps = self.fixed if self.fixed is not None else [int(rng.integers(0, self.horizon))]
        for a, b in zip(self.steps, self.steps[1:]):
            if b == a + 1:
                raise ValueError("consecutive dropouts are not modelled")

    def __call__(self, t, x):
        return np.array([1.0 if t in self.steps else 0.0])


class JointDisturbance:
    """Concatenates the outputs of several oracles."""

    def __init__(self, *parts):
        self.parts = parts

    def reset(self, seed=None):
        for i, p in enumerate(self.parts):
            p.reset(None if seed is None else [int(seed), i])

    def __call__(self, t, x):
        return np.concatenate([np.atleast_1d(p(t, x)) for p in self.parts])


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------


@dataclass
class ExecState:
    k: int          # current S_C state id
    e: float        # current plant distance d(xh, x)
    t: int = 0


@dataclass
class RunLog:
    records: list = field(default_factory=list)

    def column(self, name):
        return np.array([r[name] for r in self.records])

    def __len__(self):
        return len(self.records)

    def to_rows(self):
        return self.records


class Executor:
    """Feedback protocol for a refined controller and a generator or finite
    plant; ``oracle(t, x)`` supplies the concrete disturbance (a vector for
    generator plants, a disturbance label for finite plants)."""

    def __init__(self, rc: RefinedController):
        self.rc = rc
        self.s_c = rc.s_c
        self.s_hat = rc.s_hat
        p = rc.profile
        self.kappa, self.beta, self.lam = p.params()
        self.ball = isinstance(p, BallProfile)
        plant = rc.plant.system
        self.finite = plant.is_finite
        if not self.ball:
            self.q = _as_label_profile(p, self.s_hat, plant)
        if self.finite and self.ball:
            self.c_index = {canon(r): i for i, r in enumerate(plant.control_coords)}
        # per-state lookups that do not depend on the measured state
        self._ctrl_cache: dict = {}
        self._opt_cache: dict = {}

    def controls(self, k):
        c = self._ctrl_cache.get(k)
        if c is None:
            c = self._ctrl_cache[k] = controller_controls(self.s_c, k)
        return c

    def _candidates(self, k, cid):
        """Enabled composite inputs under control ``cid`` with their abstract
        input id and (for ball profiles) abstract control/disturbance vectors."""
        key = (k, cid)
        c = self._opt_cache.get(key)
        if c is None:
            s_c, s_hat = self.s_c, self.s_hat
            c = []
            for v in s_c.inputs_with_control(cid):
                v = int(v)
                if not len(s_c.successors(k, v)):
                    continue
                uh = self._abstract_input(v)
                if self.ball:
                    dh = s_hat.dist_coords[s_hat.input_dist[uh]][None, :]
                    ch = s_hat.control_coords[s_hat.input_control[uh]][None, :]
                else:
                    dh = ch = None
                c.append((v, uh, ch, dh, s_c.successors(k, v)))
            self._opt_cache[key] = c
        return c

    # -- distances --------------------------------------------------------

    def _xh(self, k):
        return int(self.s_c.parts[k, 1])

    def dist(self, k, x):
        xh = self._xh(k)
        if self.ball:
            xv = self._vec(x)
            return float(self.rc.profile.state_distance(self.s_hat.coords[xh], xv))
        return self.q.dist(self.s_hat.states[xh], x)

    def _vec(self, x):
        plant = self.rc.plant.system
        if self.finite:
            return plant.coords[plant.state_id(x)]
        return np.asarray(x, dtype=float)

    # -- protocol -------------------------------------------------------------

    def init(self, x) -> ExecState:
        cands = []
        for k in self.s_c.initial_ids:
            d = self.dist(int(k), x)
            if d <= self.kappa + TOL:
                cands.append((d, int(k)))
        if not cands:
            raise BlockedExecution(x, None, "no controller initial state relates to the measured state")
        d, k = min(cands)
        return ExecState(k, d, 0)

    def _abstract_input(self, v):
        return int(self.s_c.input_parts[v, 1])

    def _concrete_control(self, k, cid, x):
        """Concrete control paired with composite control id ``cid``."""
        s_hat = self.s_hat
        ch = self._abstract_input(cid * self.s_c.n_disturbances)
        plant = self.rc.plant.system
        if self.ball:
            v = s_hat.control_coords[s_hat.input_control[ch]]
            if not self.finite:
                return v
            c = self.c_index.get(canon(v))
            if c is None:
                raise BlockedExecution(x, None, "abstract control has no concrete counterpart")
            return c
        # label profiles: first concrete control whose every disturbance is
        # paired with some abstract input under this controller control
        xh = s_hat.states[self._xh(k)]
        xs = plant.state_id(x)
        cands = [int(v) for v in self.s_c.inputs_with_control(cid)
                 if len(self.s_c.successors(k, int(v)))]
        nD = plant.n_disturbances
        for c in plant.enabled_controls(xs):
            if all(any(self.q.paired(xh, x, s_hat.inputs[self._abstract_input(v)],
                                     plant.inputs[int(c) * nD + d]) for v in cands)
                   for d in range(nD)):
                return int(c)
        raise BlockedExecution(x, None, "no concrete control matches the controller's choice")

    def step(self, st: ExecState, x, oracle, log: RunLog | None = None):
        """One protocol step; returns ``(next ExecState, x_next, record)``."""
        s_c, s_hat = self.s_c, self.s_hat
        plant_cs = self.rc.plant
        plant = plant_cs.system
        ctrls = self.controls(st.k)
        if not len(ctrls):
            raise BlockedExecution(s_c.states[st.k], None, "controller state has no enabled control",
                                   log)
        cid = int(ctrls[0])
        uc = self._concrete_control(st.k, cid, x)
        ud = oracle(st.t, x)
        if self.finite:
            d = plant.disturbances.index(ud)
            u = uc * plant.n_disturbances + d
            u_label = plant.inputs[u]
            succ = plant.successors(plant.state_id(x), u)
            if not len(succ):
                raise BlockedExecution(x, u_label, "plant blocked", log)
            x_next = plant.states[int(succ[0])]
            I, O = plant_cs.I(x, u_label), plant_cs.O(x, u_label)
            if self.ball:
                ucv = plant.control_coords[uc]
                ud_vec = plant.dist_coords[d]
            uc_out, ud_out = plant.controls[uc], ud
        else:
            ucv = np.asarray(uc, dtype=float)
            ud_vec = np.asarray(ud, dtype=float)
            x_next = plant.successor(x, ucv, ud_vec)
            if x_next is None:
                raise BlockedExecution(x, (uc, ud), "plant blocked", log)
            I, O = plant_cs.I(x, (ucv, ud_vec)), plant_cs.O(x, (ucv, ud_vec))
            uc_out, ud_out = ucv, ud_vec
        # abstract input paired with the concrete one, within the chosen control
        options = []
        succ_of = {}
        if self.ball:
            p = self.rc.profile
            sd_ball = float(np.atleast_1d(p.s_d(ud_vec[None, :]))[0])
        for v, uh, ch, dh, succ in self._candidates(st.k, cid):
            succ_of[v] = succ
            if self.ball:
                if not p.inputs_paired(ch, dh, ucv[None, :], ud_vec[None, :])[0]:
                    continue
                sd = sd_ball
            else:
                xh_label = s_hat.states[self._xh(st.k)]
                if not self.q.paired(xh_label, x, s_hat.inputs[uh], u_label):
                    continue
                sd = float(self.q.sd(s_hat.inputs[uh], u_label))
            options.append((sd, v))
        if not options:
            raise BlockedExecution(x, (uc_out, ud_out), "no abstract input pairs with the disturbance",
                                   log)
        sd, v = min(options)
        radius = self.kappa + self.beta * max(self.kappa, st.e) + self.lam * sd
        best = None
        for k2 in succ_of[v]:
            d2 = self.dist(int(k2), x_next)
            if best is None or (d2, int(k2)) < best:
                best = (d2, int(k2))
        if best is None or best[0] > radius + TOL:
            raise BlockedExecution(x_next, (uc_out, ud_out), "no related controller successor within "
                                   f"{radius:.6g} (closest {None if best is None else best[0]})", log)
        xh_id, uh = self._xh(st.k), self._abstract_input(v)
        rec = {"t": st.t, "x": _vec_list(self._vec(x)),
               "xh": _vec_list(s_hat.coords[xh_id]) if s_hat.coords is not None
               else [float(xh_id)],
               "uc": _vec_list(uc_out), "ud": _vec_list(ud_out),
               "eps": st.e, "sd": sd, "radius": radius, "I": float(I), "O": float(O),
               "Ih": float(self.rc.cs_hat.I.on_ids(s_hat, xh_id, uh)),
               "Oh": float(self.rc.cs_hat.O.on_ids(s_hat, xh_id, uh)),
               "state": st.k, "x_next": x_next}
        if log is not None:
            log.records.append(rec)
        return ExecState(best[1], best[0], st.t + 1), x_next, rec


def _vec_list(v):
    if isinstance(v, np.ndarray):
        return [float(a) for a in v.ravel()]
    if isinstance(v, (float, int, np.floating, np.integer)):
        return [float(v)]
    return v


def execute_step(rc: RefinedController, x, oracle, state: ExecState | None = None, log=None):
    """Initialize when ``state`` is None, then take one step."""
    ex = Executor(rc)
    st = ex.init(x) if state is None else state
    return ex.step(st, x, oracle, log)


def run(rc: RefinedController, x0, oracle, horizon: int, *, seed=None) -> RunLog:
    """Closed-loop run of ``horizon`` steps from ``x0``.  Raises
    :class:`BlockedExecution` (with the log so far) if the protocol blocks."""
    if seed is not None and hasattr(oracle, "reset"):
        oracle.reset(seed)
    ex = rc.__dict__.get("_executor")
    if ex is None:
        ex = rc.__dict__["_executor"] = Executor(rc)
    log = RunLog()
    st = ex.init(x0)
    x = x0
    for _ in range(horizon):
        st, x, _ = ex.step(st, x, oracle, log)
    return log


def run_batch(rc: RefinedController, X0, oracles, horizon: int) -> list:
    """Lockstep closed-loop runs, one per initial state and oracle.

    Same protocol and tie-breaking as :func:`run`; plant steps, costs and
    distances are evaluated for all runs at once.  Returns, per run, a
    :class:`RunLog` or the :class:`BlockedExecution` that stopped it.
    Finite plants and label profiles fall back to sequential runs.
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    oracles = list(oracles)
    if len(oracles) != len(X0):
        raise ValueError("one oracle per initial state")
    ex = rc.__dict__.get("_executor")
    if ex is None:
        ex = rc.__dict__["_executor"] = Executor(rc)
    if ex.finite or not ex.ball:
        out = []
        for x0, o in zip(X0, oracles):
            try:
                out.append(run(rc, x0, o, horizon))
            except BlockedExecution as e:
                out.append(e)
        return out
    p, s_c, s_hat = rc.profile, ex.s_c, ex.s_hat
    plant_cs = rc.plant
    plant = plant_cs.system
    n = len(X0)
    out: list = [RunLog() for _ in range(n)]
    K = np.zeros(n, dtype=np.int64)
    E = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    for i, x0 in enumerate(X0):
        try:
            st = ex.init(x0)
            K[i], E[i] = st.k, st.e
        except BlockedExecution as e:
            out[i], alive[i] = e, False
    X = X0.copy()
    xh_id = s_c.parts[:, 1]

    def block(i, exc):
        exc.log = out[i]
        out[i], alive[i] = exc, False

    for t in range(horizon):
        A = np.flatnonzero(alive)
        if not len(A):
            break
        cid = np.full(n, -1, dtype=np.int64)
        UC = np.zeros((n, plant.control.dim))
        for k in np.unique(K[A]):
            rows = A[K[A] == k]
            ctrls = ex.controls(int(k))
            if not len(ctrls):
                for i in rows:
                    block(i, BlockedExecution(s_c.states[k], None,
                                              "controller state has no enabled control"))
                continue
            cid[rows] = int(ctrls[0])
            UC[rows] = ex._concrete_control(int(k), int(ctrls[0]), None)
        A = np.flatnonzero(alive)
        if not len(A):
            break
        UD = np.zeros((n, plant.disturbance.dim))
        for i in A:
            UD[i] = oracles[i](t, X[i])
        XA, UCA, UDA = X[A], UC[A], UD[A]
        Xn = np.full_like(X, np.nan)
        Xn[A] = plant.post(XA, UCA, UDA)
        I = np.zeros(n)
        O = np.zeros(n)
        I[A] = plant_cs.I.on_batch(XA, UCA, UDA)
        O[A] = plant_cs.O.on_batch(XA, UCA, UDA)
        SD = np.zeros(n)
        SD[A] = np.atleast_1d(p.s_d(UDA))
        radius = ex.kappa + ex.beta * np.maximum(ex.kappa, E) + ex.lam * SD
        V = np.full(n, -1, dtype=np.int64)
        UH = np.full(n, -1, dtype=np.int64)
        for i in A:
            if np.any(np.isnan(Xn[i])):
                block(i, BlockedExecution(X[i], (UC[i], UD[i]), "plant blocked"))
        A = np.flatnonzero(alive)
        groups: dict = {}
        for i in A:
            groups.setdefault((int(K[i]), int(cid[i])), []).append(i)
        nxt = {}
        for (k, c), rows in groups.items():
            rows = np.asarray(rows)
            pending = np.ones(len(rows), dtype=bool)
            # the profile gives every paired input the same s_d, so the
            # minimum (s_d, v) is the smallest paired v
            for v, uh, ch, dh, succ in sorted(ex._candidates(k, c), key=lambda r: r[0]):
                if not pending.any():
                    break
                ok = pending & p.inputs_paired(ch, dh, UC[rows], UD[rows])
                V[rows[ok]], UH[rows[ok]] = v, uh
                pending &= ~ok
                nxt[(k, v)] = succ
            for i in rows[pending]:
                block(i, BlockedExecution(X[i], (UC[i], UD[i]),
                                          "no abstract input pairs with the disturbance"))
        A = np.flatnonzero(alive)
        Knew = K.copy()
        Enew = E.copy()
        for k, v in {(int(K[i]), int(V[i])) for i in A}:
            rows = A[(K[A] == k) & (V[A] == v)]
            succ = np.sort(np.asarray(nxt[(k, v)], dtype=np.int64))
            XH = s_hat.coords[xh_id[succ]]
            D = np.asarray(p.state_distance(XH[None, :, :], Xn[rows][:, None, :]), dtype=float)
            j = np.argmin(D, axis=1)
            best = D[np.arange(len(rows)), j]
            for r, i in enumerate(rows):
                if best[r] > radius[i] + TOL:
                    block(i, BlockedExecution(Xn[i], (UC[i], UD[i]),
                                              f"no related controller successor within "
                                              f"{radius[i]:.6g} (closest {best[r]})"))
                else:
                    Knew[i], Enew[i] = succ[j[r]], best[r]
        A = np.flatnonzero(alive)
        if len(A):
            xh = xh_id[K[A]]
            Ih = rc.cs_hat.I.on_ids(s_hat, xh, UH[A])
            Oh = rc.cs_hat.O.on_ids(s_hat, xh, UH[A])
            for r, i in enumerate(A):
                out[i].records.append({
                    "t": t, "x": X[i].tolist(), "xh": s_hat.coords[xh[r]].tolist(),
                    "uc": UC[i].tolist(), "ud": UD[i].tolist(), "eps": float(E[i]),
                    "sd": float(SD[i]), "radius": float(radius[i]), "I": float(I[i]),
                    "O": float(O[i]), "Ih": float(Ih[r]), "Oh": float(Oh[r]),
                    "state": int(K[i]), "x_next": Xn[i].copy()})
        K, E = Knew, Enew
        X = np.where(alive[:, None], Xn, X)
    return out
