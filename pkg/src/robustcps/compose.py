"""Composition of systems and compositional construction of relations.

``compose(s1, s2, sync)`` builds the product of two finite systems.  The
synchronizer decides which joint steps are legal:

* plain interconnection relations ``H`` (:class:`FullSync`,
  :class:`ExplicitSync`, :class:`PredicateSync`, :class:`ZeroControlWhen`):
  initial pairs and successor pairs must lie in ``H_X`` and the joint
  (state, input) tuple in ``H``;
* :class:`ProfileSync`: composition through a contractive alternating
  relation; initial pairs lie in ``R_X(kappa)``, the tuple in ``R(e)`` with
  ``e = d(x1, x2)`` and successor pairs in ``R_X(kappa + beta e + lam s_d)``.

Composite states are ``(x1, x2)`` labels; composite inputs are
``((c1, c2), (d1, d2))`` so that ``U^c = U^c_1 x U^c_2`` and
``U^d = U^d_1 x U^d_2``.  Only states reachable from the composite initial
set are materialized.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import (TOL, Behavior, Box, CostedSystem, CostFn, GeneratorSystem, ProductLabels, System,
                   VectorSpace, canon)
from .relations import (BallProfile, ExplicitRelation, PreconditionError, RelationProfile,
                        _as_label_profile)

INF = float("inf")


class CompositionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# synchronizers
# ---------------------------------------------------------------------------


class Sync:
    """Interconnection rule.  All methods take id arrays."""

    kind = "plain"

    def prepare(self, s1: System, s2: System):
        self.s1, self.s2 = s1, s2

    def state_ok(self, i, j) -> bool:
        return True

    def initial_ok(self, i, j) -> bool:
        return self.state_ok(i, j)

    def allowed(self, i, j, U1, U2) -> np.ndarray:
        return np.ones(len(U1), dtype=bool)

    def successor_ok(self, i, j, U1, U2, Y1, Y2) -> np.ndarray:
        return np.array([self.state_ok(a, b) for a, b in zip(Y1, Y2)], dtype=bool)

    def to_json(self):
        return {"rule": "full"}


class FullSync(Sync):
    """``H = X1 x X2 x U1 x U2``: plain parallel composition."""

    def successor_ok(self, i, j, U1, U2, Y1, Y2):
        return np.ones(len(Y1), dtype=bool)


class PredicateSync(Sync):
    """``H`` given by label predicates ``input_pred(x1, x2, u1, u2)`` and an
    optional ``state_pred(x1, x2)`` describing ``H_X``."""

    def __init__(self, input_pred, state_pred=None, name="predicate"):
        self.input_pred = input_pred
        self.state_pred = state_pred
        self.name = name

    def state_ok(self, i, j):
        if self.state_pred is None:
            return True
        return bool(self.state_pred(self.s1.states[i], self.s2.states[j]))

    def allowed(self, i, j, U1, U2):
        x1, x2 = self.s1.states[i], self.s2.states[j]
        return np.array([bool(self.input_pred(x1, x2, self.s1.inputs[a], self.s2.inputs[b]))
                         for a, b in zip(U1, U2)], dtype=bool)

    def to_json(self):
        return {"rule": self.name}


class ExplicitSync(Sync):
    """``H`` as an explicit set of label tuples ``(x1, x2, u1, u2)``.  Also
    the composition with an exact alternating relation (the ``(0,0,0)``
    contractive case coincides with the plain one)."""

    def __init__(self, tuples):
        self.tuples = list(tuples)

    def prepare(self, s1, s2):
        super().prepare(s1, s2)
        self.index = {}
        self.pairs = set()
        for x1, x2, u1, u2 in self.tuples:
            i, j = s1.state_id(x1), s2.state_id(x2)
            self.pairs.add((i, j))
            self.index.setdefault((i, j), set()).add((s1.input_id(u1), s2.input_id(u2)))

    @classmethod
    def from_relation(cls, rel: ExplicitRelation):
        return cls(rel.tuples)

    def state_ok(self, i, j):
        return (int(i), int(j)) in self.pairs

    def allowed(self, i, j, U1, U2):
        ok = self.index.get((int(i), int(j)), set())
        return np.array([(int(a), int(b)) in ok for a, b in zip(U1, U2)], dtype=bool)

    def to_json(self):
        return {"pairs": [list(map(_plain, t)) for t in self.tuples]}


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(a) for a in v]
    return v


class ZeroControlWhen(Sync):
    """``(x1, x2, u1, u2) in H  iff  (x2 = trigger  =>  u1^c = 0)``.

    With the dropout automaton as ``s2`` and ``trigger = 'a1'`` this is the
    lossy-channel interconnection: a dropped packet forces the zero control.
    """

    def __init__(self, trigger="a1"):
        self.trigger = trigger

    def prepare(self, s1, s2):
        super().prepare(s1, s2)
        if s1.control_coords is None:
            raise CompositionError("the controlled component needs control coordinates")
        zero = np.all(np.abs(s1.control_coords) <= 1e-12, axis=1)
        self.zero_input = zero[s1.input_control]
        self.trigger_id = s2.state_id(self.trigger)

    def allowed(self, i, j, U1, U2):
        if int(j) != self.trigger_id:
            return np.ones(len(U1), dtype=bool)
        return self.zero_input[np.asarray(U1, dtype=np.int64)]

    def successor_ok(self, i, j, U1, U2, Y1, Y2):
        return np.ones(len(Y1), dtype=bool)

    def blocked_mask(self, UC, disc_value):
        """Vector form for hybrid composites: rows with the trigger state and
        a nonzero control are blocked."""
        nonzero = np.any(np.abs(UC) > 1e-12, axis=1) if UC.shape[1] else np.zeros(len(UC), bool)
        return (disc_value == self.trigger_id) & nonzero

    def to_json(self):
        return {"rule": "dropout-zero-control", "trigger": self.trigger}


class ProfileSync(Sync):
    """Composition through a contractive (alternating) relation.  ``s1`` is
    the abstract side of the profile unless ``abstract='right'``."""

    kind = "profile"

    def __init__(self, profile, abstract="left"):
        if abstract not in ("left", "right"):
            raise ValueError(abstract)
        self.profile = profile
        self.abstract = abstract

    def prepare(self, s1, s2):
        super().prepare(s1, s2)
        sh, sc = (s1, s2) if self.abstract == "left" else (s2, s1)
        p = self.profile
        if isinstance(p, ExplicitRelation):
            p = p.as_profile()
        self.kappa, self.beta, self.lam = p.params()
        self.ball = isinstance(p, BallProfile)
        self.p = p if self.ball else _as_label_profile(p, sh, sc)
        self.sh, self.sc = sh, sc

    def _orient(self, i, j):
        return (i, j) if self.abstract == "left" else (j, i)

    def dist(self, i, j):
        a, c = self._orient(i, j)
        if self.ball:
            return float(self.p.state_distance(self.sh.coords[a], self.sc.coords[c]))
        return self.p.dist(self.sh.states[a], self.sc.states[c])

    def state_ok(self, i, j):
        return self.dist(i, j) < INF

    def initial_ok(self, i, j):
        return self.dist(i, j) <= self.kappa + TOL

    def _sd_and_pair(self, i, j, U1, U2):
        a, c = self._orient(i, j)
        UA, UC_ = (U1, U2) if self.abstract == "left" else (U2, U1)
        UA, UC_ = np.asarray(UA, dtype=np.int64), np.asarray(UC_, dtype=np.int64)
        if self.ball:
            sh, sc = self.sh, self.sc
            paired = self.p.inputs_paired(sh.control_coords[sh.input_control[UA]],
                                          sh.dist_coords[sh.input_dist[UA]],
                                          sc.control_coords[sc.input_control[UC_]],
                                          sc.dist_coords[sc.input_dist[UC_]])
            sd = self.p.s_d(sc.dist_coords[sc.input_dist[UC_]])
            return np.atleast_1d(paired), np.atleast_1d(sd)
        xa, xc = self.sh.states[a], self.sc.states[c]
        paired = np.array([bool(self.p.paired(xa, xc, self.sh.inputs[p], self.sc.inputs[q]))
                           for p, q in zip(UA, UC_)], dtype=bool)
        sd = np.array([self.p.sd(self.sh.inputs[p], self.sc.inputs[q]) for p, q in zip(UA, UC_)])
        return paired, sd

    def allowed(self, i, j, U1, U2):
        # (x1, x2, u1, u2) in R(e) with e = d(x1, x2): only the pairing matters
        return self._sd_and_pair(i, j, U1, U2)[0]

    def successor_ok(self, i, j, U1, U2, Y1, Y2):
        e = self.dist(i, j)
        _, sd = self._sd_and_pair(i, j, U1, U2)
        radius = self.kappa + self.beta * e + self.lam * sd
        d = np.array([self.dist(a, b) for a, b in zip(Y1, Y2)])
        return d <= radius + TOL

    def to_json(self):
        prof = self.profile.to_json() if hasattr(self.profile, "to_json") else {"name": "callable"}
        return {"profile": prof, "abstract": self.abstract}


# ---------------------------------------------------------------------------
# composition
# ---------------------------------------------------------------------------


def _concat(a, b, n_a, n_b):
    if a is None or b is None:
        return None
    return np.hstack([np.asarray(a, dtype=float).reshape(n_a, -1),
                      np.asarray(b, dtype=float).reshape(n_b, -1)])


def _product_rows(a, b):
    if a is None or b is None:
        return None
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.hstack([np.repeat(a, len(b), axis=0), np.tile(b, (len(a), 1))])


def compose(s1: System, s2: System, sync: Sync | None = None, *, name=None,
            reachable_only: bool = True, max_states: int = 5_000_000) -> System:
    """Composite ``s1 x_sync s2`` restricted to states reachable from its
    initial set (or every related pair when ``reachable_only`` is False).

    The result carries ``parts`` (``(n, 2)`` component state ids),
    ``part_systems`` and ``input_parts`` (component input ids per composite
    input).
    """
    if not (s1.is_finite and s2.is_finite):
        raise CompositionError("compose needs finite systems; see compose_hybrid")
    sync = sync or FullSync()
    sync.prepare(s1, s2)
    nC2, nD1, nD2 = s2.n_controls, s1.n_disturbances, s2.n_disturbances
    controls = ProductLabels(s1.controls, s2.controls)
    dists = ProductLabels(s1.disturbances, s2.disturbances)
    inputs = ProductLabels(controls, dists)
    nD = nD1 * nD2
    # component input ids -> composite input id
    c1, d1 = s1.input_control, s1.input_dist
    c2, d2 = s2.input_control, s2.input_dist

    def joint(U1, U2):
        return (c1[U1] * nC2 + c2[U2]) * nD + d1[U1] * nD2 + d2[U2]

    index: dict = {}
    order: list = []

    def intern(i, j):
        key = (int(i), int(j))
        k = index.get(key)
        if k is None:
            k = len(order)
            index[key] = k
            order.append(key)
            if len(order) > max_states:
                raise CompositionError(f"composite exceeds {max_states} states")
        return k

    if reachable_only:
        init = [intern(i, j) for i in s1.initial_ids for j in s2.initial_ids if sync.initial_ok(i, j)]
    else:
        for i in range(s1.n_states):
            for j in range(s2.n_states):
                if sync.state_ok(i, j):
                    intern(i, j)
        init = [index[(int(i), int(j))] for i in s1.initial_ids for j in s2.initial_ids
                if (int(i), int(j)) in index and sync.initial_ok(i, j)]
    src, inp, dst = [], [], []
    queue = deque(range(len(order)))
    done = set()
    while queue:
        k = queue.popleft()
        if k in done:
            continue
        done.add(k)
        i, j = order[k]
        K1 = np.arange(s1.state_ptr[i], s1.state_ptr[i + 1])
        K2 = np.arange(s2.state_ptr[j], s2.state_ptr[j + 1])
        if not len(K1) or not len(K2):
            continue
        A1 = np.repeat(K1, len(K2))
        A2 = np.tile(K2, len(K1))
        U1 = s1.keys[A1] - i * s1.n_inputs
        U2 = s2.keys[A2] - j * s2.n_inputs
        ok = sync.allowed(i, j, U1, U2)
        if not ok.any():
            continue
        A1, A2, U1, U2 = A1[ok], A2[ok], U1[ok], U2[ok]
        n1 = s1.key_ptr[A1 + 1] - s1.key_ptr[A1]
        n2 = s2.key_ptr[A2 + 1] - s2.key_ptr[A2]
        tot = n1 * n2
        rep = np.repeat(np.arange(len(A1)), tot)
        pos = np.arange(tot.sum()) - np.repeat(np.concatenate([[0], np.cumsum(tot)[:-1]]), tot)
        Y1 = s1.succ[s1.key_ptr[A1][rep] + pos // n2[rep]]
        Y2 = s2.succ[s2.key_ptr[A2][rep] + pos % n2[rep]]
        m = sync.successor_ok(i, j, U1[rep], U2[rep], Y1, Y2)
        if not reachable_only:
            m &= np.array([(int(a), int(b)) in index for a, b in zip(Y1, Y2)], dtype=bool)
        U = joint(U1[rep][m], U2[rep][m])
        for u, a, b in zip(U, Y1[m], Y2[m]):
            kk = intern(a, b)
            src.append(k)
            inp.append(int(u))
            dst.append(kk)
            if kk not in done:
                queue.append(kk)
    parts = np.array(order, dtype=np.int64).reshape(-1, 2)
    states = [(s1.states[i], s2.states[j]) for i, j in order]
    coords = None
    if s1.coords is not None and s2.coords is not None:
        coords = np.hstack([s1.coords[parts[:, 0]], s2.coords[parts[:, 1]]])
    out = System.from_ids(states, init, inputs, src, inp, dst, controls=controls,
                          disturbances=dists, coords=coords,
                          name=name or f"{s1.name}x{s2.name}",
                          control_coords=_product_rows(s1.control_coords, s2.control_coords),
                          dist_coords=_product_rows(s1.dist_coords, s2.dist_coords))
    out.parts = parts
    out.part_systems = (s1, s2)
    ids = np.arange(len(inputs))
    c, d = ids // nD, ids % nD
    out.input_parts = np.stack([(c // nC2) * nD1 + d // nD2, (c % nC2) * nD2 + d % nD2], axis=1)
    out.sync = sync
    return out


def part_costs(composite: System, cs: CostedSystem, side: int) -> CostedSystem:
    """Composite with the costs of component ``side`` (0 or 1)."""
    sub = composite.part_systems[side]
    P, Q = composite.parts[:, side], composite.input_parts[:, side]

    def lift(fn):
        def ids(s, u):
            return fn.on_ids(sub, P[np.asarray(s)], Q[np.asarray(u)])

        def label(x, u):
            k, v = composite.state_id(x), composite.input_id(u)
            return fn(sub.states[P[k]], sub.inputs[Q[v]])
        return CostFn(label, ids, name=fn.name)
    return CostedSystem(composite, lift(cs.I), lift(cs.O))


def project_behavior(composite: System, beh):
    """Component behaviors of a composite behavior (labels)."""
    s1, s2 = composite.part_systems
    xs1, xs2, us1, us2 = [], [], [], []
    for x, u in zip(beh.states, beh.inputs):
        k = composite.state_id(x)
        i, j = composite.parts[k]
        a, b = composite.input_parts[composite.input_id(u)]
        xs1.append(s1.states[i])
        xs2.append(s2.states[j])
        us1.append(s1.inputs[a])
        us2.append(s2.inputs[b])
    return Behavior(xs1, us1), Behavior(xs2, us2)


def attach_reference(s: System, ref: System, *, name=None) -> System:
    """Plain composition with an autonomous reference system (full
    synchronizer)."""
    if ref.n_inputs != 1:
        raise CompositionError("the reference must be autonomous (single input)")
    return compose(s, ref, FullSync(), name=name or f"{s.name}+ref")


# ---------------------------------------------------------------------------
# hybrid composition: generator x deterministic finite
# ---------------------------------------------------------------------------


def compose_hybrid(gen: GeneratorSystem, fin: System, sync: Sync | None = None, *, name=None,
                   initial_finite=None) -> GeneratorSystem:
    """Generator composite of a continuous system and a deterministic finite
    system (one successor per enabled input).

    State vector: ``[x_gen, coords(x_fin)]``; control: ``[u^c_gen,
    control_coords(fin)]``; disturbance: ``[u^d_gen, dist_coords(fin)]``.
    Finite coordinates must identify labels uniquely.  ``sync`` may be
    :class:`FullSync` or :class:`ZeroControlWhen`; a blocked joint input
    yields a NaN row.
    """
    if fin.coords is None or fin.control_coords is None or fin.dist_coords is None:
        raise CompositionError("the finite component needs state and input coordinates")
    n_keys_succ = np.diff(fin.key_ptr)
    if np.any(n_keys_succ > 1):
        raise CompositionError("the finite component must be deterministic")
    sync = sync or FullSync()
    n, k = gen.dim, fin.coords.shape[1]
    pc, qc = gen.control.dim, gen.disturbance.dim
    fc = fin.control_coords.shape[1]
    st_index = {canon(r): i for i, r in enumerate(fin.coords)}
    d_index = {canon(r): i for i, r in enumerate(fin.dist_coords)}
    if len(st_index) != fin.n_states or len(d_index) != fin.n_disturbances:
        raise CompositionError("finite coordinates do not identify labels")
    trigger = None
    if isinstance(sync, ZeroControlWhen):
        trigger = fin.state_id(sync.trigger)

    # deterministic successor table: nxt_tab[s, u] = successor id or -1
    nxt_tab = np.full((fin.n_states, fin.n_inputs), -1, dtype=np.int64)
    src, inp, dst = fin.transition_arrays()
    nxt_tab[src, inp] = dst

    def lookup(table, rows):
        if table.shape[1] == 0:
            return np.zeros(len(rows), dtype=np.int64)
        eq = np.all(np.abs(rows[:, None, :] - table[None, :, :]) <= 1e-9, axis=2)
        return np.where(eq.any(axis=1), eq.argmax(axis=1), -1)

    def post(X, UC, UD):
        X = np.asarray(X, dtype=float)
        xs, xf = X[:, :n], X[:, n:]
        uc, ucf = UC[:, :pc], UC[:, pc:]
        ud, udf = UD[:, :qc], UD[:, qc:]
        Y = np.full((len(X), n + k), np.nan)
        sid = lookup(fin.coords, xf)
        cid = lookup(fin.control_coords, ucf) if fc else np.zeros(len(X), dtype=np.int64)
        did = lookup(fin.dist_coords, udf)
        ok = (sid >= 0) & (cid >= 0) & (did >= 0)
        u = cid * fin.n_disturbances + did
        nxt = np.where(ok, nxt_tab[np.maximum(sid, 0), np.maximum(u, 0)], -1)
        ok &= nxt >= 0
        if trigger is not None:
            nonzero = np.any(np.abs(uc) > 1e-12, axis=1) if pc else np.zeros(len(X), bool)
            ok &= ~((sid == trigger) & nonzero)
        if ok.any():
            y = gen.post(xs[ok], uc[ok], ud[ok])
            Y[ok, :n] = y
            Y[ok, n:] = fin.coords[nxt[ok]]
        return Y

    lo = np.concatenate([gen.domain.lo, fin.coords.min(axis=0)])
    hi = np.concatenate([gen.domain.hi, fin.coords.max(axis=0)])
    init_f = fin.initial_ids if initial_finite is None else [fin.state_id(a) for a in initial_finite]
    gp = gen.initial_points()
    if gp is None:
        if len(init_f) > 1 and k:
            raise CompositionError("box initial sets combine with a single finite initial state")
        initial = Box(np.concatenate([gen.initial.lo, fin.coords[init_f].min(axis=0)]),
                      np.concatenate([gen.initial.hi, fin.coords[init_f].max(axis=0)]))
    else:
        initial = np.array([np.concatenate([p, fin.coords[f]]) for p in gp for f in init_f])
    control = _join_spaces(gen.control, fin.control_coords)
    dist = _join_spaces(gen.disturbance, fin.dist_coords)
    return GeneratorSystem(n + k, post, Box(lo, hi), initial, control, dist,
                           name=name or f"{gen.name}x{fin.name}",
                           discrete_dims=tuple(gen.discrete_dims) + tuple(range(n, n + k)))


def _join_spaces(space: VectorSpace, pts):
    """Product of a real vector space with a finite point set."""
    pts = np.asarray(pts, dtype=float)
    if pts.shape[1] == 0:
        return space
    if space.points is not None:
        rows = [np.concatenate([a, b]) for a in space.points for b in pts]
        return VectorSpace.finite(rows)
    if space.dim == 0:
        return VectorSpace.finite(pts)
    lo = np.concatenate([space.box.lo, pts.min(axis=0)])
    hi = np.concatenate([space.box.hi, pts.max(axis=0)])
    levels = dict(space.levels or {})
    for a in range(pts.shape[1]):
        levels[space.dim + a] = sorted(set(pts[:, a].tolist()))
    return VectorSpace.real_box(lo, hi, levels)


# ---------------------------------------------------------------------------
# compositional relations
# ---------------------------------------------------------------------------


def identity_profile() -> BallProfile:
    """``(0,0,0)`` identity relation on a finite system with coordinates."""
    return BallProfile(kappa=0.0, beta=0.0, lam=0.0, norm="inf", orientation="alternating",
                       state_dims=0, dist_free=())


@dataclass(frozen=True)
class CompositeProfile:
    """Product relation: states related iff both components are related at
    the same eps, inputs paired componentwise, ``s_d`` the componentwise max.
    Bound to composite systems via :meth:`bind`."""

    p1: object
    p2: object
    kappa: float
    beta: float
    lam: float
    orientation: str = "alternating"

    def params(self):
        return (self.kappa, self.beta, self.lam)

    def bind(self, sh: System, sc: System) -> RelationProfile:
        if not (sh.is_finite and sc.is_finite):
            raise PreconditionError("composite label profiles bind finite composites only")
        sh1, sh2 = sh.part_systems
        sc1, sc2 = sc.part_systems
        q1 = _as_label_profile(self.p1, sh1, sc1)
        q2 = _as_label_profile(self.p2, sh2, sc2)

        def split(s, u):
            a, b = s.input_parts[s.input_id(u)]
            s1, s2 = s.part_systems
            return s1.inputs[a], s2.inputs[b]

        def dist(xh, x):
            return max(q1.dist(xh[0], x[0]), q2.dist(xh[1], x[1]))

        def paired(xh, x, uh, u):
            (a1, a2), (b1, b2) = split(sh, uh), split(sc, u)
            return q1.paired(xh[0], x[0], a1, b1) and q2.paired(xh[1], x[1], a2, b2)

        def sd(uh, u):
            (a1, a2), (b1, b2) = split(sh, uh), split(sc, u)
            return max(q1.sd(a1, b1), q2.sd(a2, b2))
        return RelationProfile(self.kappa, self.beta, self.lam, dist, paired, sd,
                               self.orientation, "composite")

    def to_json(self):
        return {"composite": [self.p1.to_json(), self.p2.to_json()], "kappa": self.kappa,
                "beta": self.beta, "lambda": self.lam, "orientation": self.orientation}


@dataclass
class LiftReport:
    """``controls_preserved`` is None when not evaluated (structural rules)."""

    assumption_ok: bool
    checked: int
    witness: tuple | None
    mode: str
    controls_preserved: bool | None = None
    control_witness: tuple | None = None
    initial_covered: bool | None = None

    def to_json(self):
        return {"assumption_ok": self.assumption_ok, "checked": self.checked,
                "witness": None if self.witness is None else [_plain(w) for w in self.witness],
                "mode": self.mode, "controls_preserved": self.controls_preserved,
                "initial_covered": self.initial_covered,
                "control_witness": None if self.control_witness is None
                else [_plain(w) for w in self.control_witness]}


def _composite_ball(p1: BallProfile, p2: BallProfile):
    """Composite ball profile when the second component is purely discrete."""
    if p2.state_dims != 0 or p2.dist_free:
        return None
    return BallProfile(kappa=max(p1.kappa, p2.kappa), beta=max(p1.beta, p2.beta),
                       lam=max(p1.lam, p2.lam), norm=p1.norm, orientation="alternating",
                       state_dims=p1.state_dims, dist_free=tuple(p1.dist_free),
                       name="composite")


def lift_interconnection(H: Sync, p1, p2, *, abstract=None, concrete=None, samples=None):
    """Abstract interconnection ``H_hat`` and the composite profile.

    ``H_hat`` collects abstract tuples with a related concrete witness in
    ``H``; the composite profile has the componentwise-max parameters.  The
    assumption that every related state pair in ``H_X`` has related inputs
    in ``H`` is validated:

    * exhaustively when ``abstract=(sh1, sh2)`` and ``concrete=(s1, s2)``
      are finite;
    * on canonical witnesses (concrete = abstract coordinates, zero free
      disturbance) for the structural rules :class:`FullSync` and
      :class:`ZeroControlWhen`, whose membership depends only on discrete
      states and paired control coordinates.

    Returns ``(H_hat, profile, LiftReport)``.
    """
    kappa = max(p1.kappa, p2.kappa)
    beta = max(p1.beta, p2.beta)
    lam = max(p1.lam, p2.lam)
    profile = None
    if isinstance(p1, BallProfile) and isinstance(p2, BallProfile):
        profile = _composite_ball(p1, p2)
    if profile is None:
        profile = CompositeProfile(p1, p2, kappa, beta, lam)
    if isinstance(H, (FullSync, ZeroControlWhen)) and concrete is None:
        # structural rule: H_hat is the same rule on abstract coordinates
        H_hat = FullSync() if isinstance(H, FullSync) else ZeroControlWhen(H.trigger)
        report = _check_structural(H, abstract)
        if not report.assumption_ok:
            raise CompositionError(f"interconnection assumption violated: {report.witness}")
        return H_hat, profile, report
    if abstract is None or concrete is None:
        raise PreconditionError("non-structural interconnections need finite components")
    return _lift_finite(H, p1, p2, abstract, concrete, profile)


def _check_structural(H, abstract):
    if abstract is None or isinstance(H, FullSync):
        return LiftReport(True, 0, None, "structural")
    sh1, sh2 = abstract
    # the zero control must exist on the abstract side and pair with the
    # concrete zero control; the finite side is related by identity
    if sh1.control_coords is None:
        raise PreconditionError("abstract component needs control coordinates")
    zero = np.all(np.abs(sh1.control_coords) <= 1e-12, axis=1)
    ok = bool(zero.any())
    return LiftReport(ok, int(sh1.n_states * sh2.n_states), None if ok else ("no zero control",),
                      "structural")


def _lift_finite(H, p1, p2, abstract, concrete, profile):
    sh1, sh2 = abstract
    s1, s2 = concrete
    q1 = _as_label_profile(p1, sh1, s1)
    q2 = _as_label_profile(p2, sh2, s2)
    H.prepare(s1, s2)
    allowed_cache = {}

    def h_allowed(i, j, a, b):
        key = (i, j, a, b)
        if key not in allowed_cache:
            allowed_cache[key] = bool(H.allowed(i, j, np.array([a]), np.array([b]))[0])
        return allowed_cache[key]

    rel1 = [(xh, x, q1.dist(sh1.states[xh], s1.states[x]))
            for xh in range(sh1.n_states) for x in range(s1.n_states)]
    rel1 = [r for r in rel1 if r[2] < INF]
    rel2 = [(xh, x, q2.dist(sh2.states[xh], s2.states[x]))
            for xh in range(sh2.n_states) for x in range(s2.n_states)]
    rel2 = [r for r in rel2 if r[2] < INF]
    # label lists once: product input labels are materialized lazily
    L = [list(sys.states) for sys in (sh1, s1, sh2, s2)]
    U = [list(sys.inputs) for sys in (sh1, s1, sh2, s2)]

    def paired_inputs(q, k):
        lh, lc, uh, uc = L[2 * k], L[2 * k + 1], U[2 * k], U[2 * k + 1]
        return {(xh, x): [(a, b) for a in range(len(uh)) for b in range(len(uc))
                          if q.paired(lh[xh], lc[x], uh[a], uc[b])]
                for xh, x, _ in (rel1, rel2)[k]}
    pin1, pin2 = paired_inputs(q1, 0), paired_inputs(q2, 1)
    tuples = set()
    checked = 0
    witness = None
    for xh1, x1, _ in rel1:
        for xh2, x2, _ in rel2:
            found = False
            for uh1, u1 in pin1[xh1, x1]:
                for uh2, u2 in pin2[xh2, x2]:
                    if h_allowed(x1, x2, u1, u2):
                        found = True
                        tuples.add((L[0][xh1], L[2][xh2], U[0][uh1], U[2][uh2]))
            if H.state_ok(x1, x2):
                checked += 1
                if not found and witness is None:
                    witness = (L[0][xh1], L[2][xh2], L[1][x1], L[3][x2])
    if witness is not None:
        raise CompositionError(f"interconnection assumption violated at {witness!r}")
    H_hat = ExplicitSync(sorted(tuples, key=repr))
    cw = _disabled_control_pair(H, s1, s2, h_allowed)
    init_ok = _initial_covered(H, H_hat, abstract, concrete, q1, q2, profile.kappa)
    return H_hat, profile, LiftReport(True, checked, None, "exhaustive", cw is None, cw, init_ok)


def _initial_covered(H, H_hat, abstract, concrete, q1, q2, kappa):
    """Every abstract initial pair in ``H_hat_X`` has related concrete
    initial states (within kappa) whose pair lies in ``H_X``."""
    sh1, sh2 = abstract
    s1, s2 = concrete
    H_hat.prepare(sh1, sh2)
    for a in sh1.initial_ids:
        for b in sh2.initial_ids:
            if not H_hat.state_ok(a, b):
                continue
            if not any(H.state_ok(i, j)
                       and q1.dist(sh1.states[a], s1.states[i]) <= kappa + TOL
                       and q2.dist(sh2.states[b], s2.states[j]) <= kappa + TOL
                       for i in s1.initial_ids for j in s2.initial_ids):
                return False
    return True


def _disabled_control_pair(H, s1, s2, h_allowed):
    """First ``(x1, x2, c1, c2)`` with ``(x1, x2)`` in ``H_X`` and both
    controls enabled in their components whose joint control is not enabled
    in ``s1 x_H s2``.  The lifted relation is only guaranteed when there is
    none: each component picks its control independently."""
    for i in range(s1.n_states):
        for j in range(s2.n_states):
            if not H.state_ok(i, j):
                continue
            for c1 in s1.enabled_controls(i):
                for c2 in s2.enabled_controls(j):
                    for u1 in s1.inputs_with_control(c1):
                        for u2 in s2.inputs_with_control(c2):
                            ok = h_allowed(i, j, int(u1), int(u2)) and any(
                                H.state_ok(y1, y2) for y1 in s1.successors(i, u1)
                                for y2 in s2.successors(j, u2))
                            if not ok:
                                return (s1.states[i], s2.states[j], s1.controls[c1], s2.controls[c2])
    return None
