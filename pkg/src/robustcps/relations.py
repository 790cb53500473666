"""Simulation relations and their checkers.

All relation tuples are stored in ``(abstract, concrete)`` order whatever
the orientation:

* ``plain`` -- a contractive simulation from the concrete system to the
  abstract one (every concrete move is matched by an abstract move);
* ``alternating`` -- a contractive alternating simulation from the abstract
  system to the concrete one (abstract controls are matched by concrete
  controls, concrete disturbances by abstract disturbances).

Checkers evaluate clause 2 only at the tightest parameter
``eps0 = max(kappa, d(xh, x))``.  For ball relations this suffices: the
successor radius ``kappa + beta*eps + lam*s_d`` grows with ``eps`` while the
hypothesis ``d <= eps`` does not depend on it, so a pair that passes at eps0
passes at every larger eps.  The abstract system is always finite; the
concrete one is finite (exhaustive verdict) or a generator explored on a
deterministic sample lattice (sampled verdict).
"""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from .compare import (KFunction, PIodsCertificate, is_subadditive, k_linear,
                      k_zero, kld_exponential)
from .core import TOL, Behavior, CostedSystem, System, canon, vec_norm

INF = float("inf")


class PreconditionError(ValueError):
    pass


class MatchFailure(RuntimeError):
    """The trace matcher could not extend a match; when the relation checker
    passed this indicates a checker soundness bug."""


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RelationProfile:
    """Label-level parameterized relation.

    ``dist(xh, x)`` is the state distance (``inf`` = never related),
    ``paired(xh, x, uh, u)`` the input pairing and ``sd(uh, u)`` the input
    distance.  ``R(eps) = {(xh, x, uh, u): dist <= eps and paired}``.
    """

    kappa: float
    beta: float
    lam: float
    dist: Callable[[Any, Any], float]
    paired: Callable[[Any, Any, Any, Any], bool]
    sd: Callable[[Any, Any], float] = lambda uh, u: 0.0
    orientation: str = "plain"
    name: str = ""

    def __post_init__(self):
        _check_params(self.kappa, self.beta, self.lam, self.orientation)

    def params(self):
        return (self.kappa, self.beta, self.lam)

    def member(self, eps, xh, x, uh, u) -> bool:
        return self.dist(xh, x) <= eps + TOL and bool(self.paired(xh, x, uh, u))


def _check_params(kappa, beta, lam, orientation):
    if kappa < 0 or lam < 0:
        raise ValueError("kappa and lambda must be nonnegative")
    if not 0 <= beta < 1:
        raise ValueError(f"beta must lie in [0, 1), got {beta}")
    if orientation not in ("plain", "alternating"):
        raise ValueError(f"unknown orientation {orientation!r}")


@dataclass(frozen=True)
class BallProfile:
    """Ball relation on coordinate vectors.

    States: the first ``state_dims`` coordinates are continuous and compared
    in ``norm``; any further coordinates are discrete and must be equal.
    Controls: equal coordinates (``control_rule='equal'``).  Disturbances:
    coordinates in ``dist_free`` are set to zero on the abstract side and
    measured by ``s_d = |u^d[dist_free]|``; the other disturbance coordinates
    must be equal.
    """

    kappa: float
    beta: float
    lam: float
    norm: str = "2"
    orientation: str = "alternating"
    state_dims: int = 1
    control_rule: str = "equal"
    dist_free: tuple = (0,)
    name: str = ""

    def __post_init__(self):
        _check_params(self.kappa, self.beta, self.lam, self.orientation)
        if self.control_rule != "equal":
            raise ValueError("only the 'equal' control pairing rule is supported")

    def params(self):
        return (self.kappa, self.beta, self.lam)

    # -- vector forms ---------------------------------------------------------

    def state_distance(self, XH, X):
        XH = np.asarray(XH, dtype=float)
        X = np.asarray(X, dtype=float)
        k = self.state_dims
        d = vec_norm(X[..., :k] - XH[..., :k], self.norm)
        if XH.shape[-1] > k:
            same = np.all(np.abs(X[..., k:] - XH[..., k:]) <= 1e-9, axis=-1)
            d = np.where(same, d, INF)
        return d

    def dist_split(self, q):
        free = np.zeros(q, dtype=bool)
        free[list(self.dist_free)] = True
        return free

    def s_d(self, UD):
        UD = np.asarray(UD, dtype=float)
        free = self.dist_split(UD.shape[-1])
        return vec_norm(UD[..., free], self.norm) if free.any() else np.zeros(UD.shape[:-1])

    def abstract_disturbance(self, UD):
        """The abstract disturbance paired with concrete ``UD``."""
        UD = np.array(UD, dtype=float)
        free = self.dist_split(UD.shape[-1])
        UD[..., free] = 0.0
        return UD

    def inputs_paired(self, UCH, UDH, UC, UD):
        UCH, UDH, UC, UD = (np.asarray(a, dtype=float) for a in (UCH, UDH, UC, UD))
        ok = np.all(np.abs(UCH - UC) <= 1e-9, axis=-1) if UC.shape[-1] else np.ones(UC.shape[:-1], bool)
        free = self.dist_split(UD.shape[-1])
        if free.any():
            ok &= np.all(np.abs(UDH[..., free]) <= 1e-12, axis=-1)
        if (~free).any():
            ok &= np.all(np.abs(UDH[..., ~free] - UD[..., ~free]) <= 1e-9, axis=-1)
        return ok

    def to_json(self):
        return {"dX": {"norm": self.norm, "continuous_dims": self.state_dims},
                "PU": {"rule": "control-equal", "dist_free": list(self.dist_free)},
                "sd": {"rule": "norm-of-free-disturbance"},
                "kappa": self.kappa, "beta": self.beta, "lambda": self.lam,
                "orientation": self.orientation}

    @staticmethod
    def from_json(d):
        return BallProfile(kappa=float(d["kappa"]), beta=float(d["beta"]), lam=float(d["lambda"]),
                           norm=str(d["dX"]["norm"]), orientation=d.get("orientation", "alternating"),
                           state_dims=int(d["dX"].get("continuous_dims", 1)),
                           dist_free=tuple(d["PU"].get("dist_free", [0])))

    def with_params(self, **kw):
        return replace(self, **kw)

    # -- label-level binding ----------------------------------------------------

    def bind(self, s_hat: System, s) -> RelationProfile:
        """Label-level view for a finite abstract system and a concrete system
        that is finite (coordinates looked up) or a generator (labels are
        vectors, inputs are ``(uc, ud)``)."""
        xh_vec = _label_vectors(s_hat)
        uh_vec = _input_vectors(s_hat)
        if s.is_finite:
            x_vec, u_vec = _label_vectors(s), _input_vectors(s)
        else:
            x_vec = lambda x: np.asarray(x, dtype=float)  # noqa: E731
            u_vec = lambda u: (np.asarray(u[0], dtype=float), np.asarray(u[1], dtype=float))  # noqa: E731

        def dist(xh, x):
            return float(self.state_distance(xh_vec(xh), x_vec(x)))

        def paired(xh, x, uh, u):
            (a, b), (c, d) = uh_vec(uh), u_vec(u)
            return bool(self.inputs_paired(a, b, c, d))

        def sd(uh, u):
            return float(self.s_d(u_vec(u)[1]))
        return RelationProfile(self.kappa, self.beta, self.lam, dist, paired, sd,
                               self.orientation, self.name)


def _label_vectors(s: System):
    if s.coords is None:
        raise ValueError(f"system {s.name!r} has no state coordinates")
    return lambda x: s.coords[s.state_id(x)]


def _input_vectors(s: System):
    if s.control_coords is None or s.dist_coords is None:
        raise ValueError(f"system {s.name!r} has no input coordinates")

    def f(u):
        i = s.input_id(u)
        return s.control_coords[s.input_control[i]], s.dist_coords[s.input_dist[i]]
    return f


class ExplicitRelation:
    """Finite relation given by tuples ``(xh, x, uh, u)``; the ``(0,0,0)``
    contractive case."""

    kappa = beta = lam = 0.0

    def __init__(self, tuples, orientation="plain", pairs=()):
        """``pairs`` adds state pairs without input tuples (an abstract state
        with no enabled control is related vacuously)."""
        self.tuples = frozenset(tuples)
        self.pairs = frozenset((a, b) for a, b, _, _ in self.tuples) | frozenset(pairs)
        self.orientation = orientation

    def __contains__(self, t):
        return t in self.tuples

    def __len__(self):
        return len(self.tuples)

    def params(self):
        return (0.0, 0.0, 0.0)

    def as_profile(self) -> RelationProfile:
        pairs, tuples = self.pairs, self.tuples
        return RelationProfile(0.0, 0.0, 0.0,
                               lambda xh, x: 0.0 if (xh, x) in pairs else INF,
                               lambda xh, x, uh, u: (xh, x, uh, u) in tuples,
                               lambda uh, u: 0.0, self.orientation, "explicit")

    def to_json(self):
        bare = self.pairs - {(a, b) for a, b, _, _ in self.tuples}
        doc = {"tuples": sorted([list(map(_jsonable, t)) for t in self.tuples], key=repr),
               "orientation": self.orientation}
        if bare:
            doc["pairs"] = sorted([list(map(_jsonable, p)) for p in bare], key=repr)
        return doc


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(a) for a in v]
    return v


def fixed_epsilon(profile: RelationProfile, eps: float) -> RelationProfile:
    """``R(eps)`` viewed as an exact relation."""
    return RelationProfile(0.0, 0.0, 0.0,
                           lambda xh, x: 0.0 if profile.dist(xh, x) <= eps + TOL else INF,
                           lambda xh, x, uh, u: profile.member(eps, xh, x, uh, u),
                           lambda uh, u: 0.0, profile.orientation, f"{profile.name}@{eps}")


@dataclass(frozen=True)
class CostGains:
    gamma_I: KFunction
    gamma_O: KFunction

    def __post_init__(self):
        for g in (self.gamma_I, self.gamma_O):
            if abs(g(0.0)) > 1e-12:
                raise ValueError("gains must vanish at zero")


@dataclass
class Verdict:
    passed: bool
    mode: str
    clauses: dict
    counterexample: dict | None = None
    checked: int = 0
    notes: list = field(default_factory=list)

    def __bool__(self):
        return self.passed

    def to_json(self):
        return {"passed": self.passed, "mode": self.mode, "clauses": self.clauses,
                "counterexample": self.counterexample, "checked": self.checked,
                "notes": self.notes}


def _cex(clause, **items):
    return {"clause": clause, **{k: _to_plain(v) for k, v in items.items()}}


def _to_plain(v):
    if isinstance(v, np.ndarray):
        return [float(a) for a in v.ravel()]
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, tuple):
        return [_to_plain(a) for a in v]
    return v


# ---------------------------------------------------------------------------
# exhaustive checkers (finite concrete systems)
# ---------------------------------------------------------------------------


def _as_label_profile(profile, s_hat, s):
    if hasattr(profile, "bind"):
        return profile.bind(s_hat, s)
    if isinstance(profile, ExplicitRelation):
        return profile.as_profile()
    return profile


class _Finite:
    """Id-level helpers for a finite system."""

    def __init__(self, s: System):
        self.s = s
        self._succ = {}

    def succ(self, x, u):
        key = (x, u)
        if key not in self._succ:
            self._succ[key] = self.s.successors(x, u)
        return self._succ[key]


def _pairs(p: RelationProfile, s_hat: System, s: System, eps_max=INF):
    out = []
    for xh in range(s_hat.n_states):
        for x in range(s.n_states):
            d = p.dist(s_hat.states[xh], s.states[x])
            if d <= eps_max + TOL and d < INF:
                out.append((xh, x, d))
    return out


def _succ_ok(p, s_hat, s, fh, f, xh, x, uh, u, radius):
    """All concrete successors have an abstract successor within radius.
    Returns the first unmatched concrete successor id or None."""
    sh = fh.succ(xh, uh)
    if not len(sh):
        return -1 if len(f.succ(x, u)) else None
    for y in f.succ(x, u):
        ylab = s.states[y]
        if not any(p.dist(s_hat.states[yh], ylab) <= radius + TOL for yh in sh):
            return int(y)
    return None


def _check_costs(p, cs_hat, cs, gains, xh, x, eps0, uh_ids, u_ids):
    s_hat, s = cs_hat.system, cs.system
    xl, xhl = s.states[x], s_hat.states[xh]
    for u in u_ids:
        ul = s.inputs[u]
        for uh in uh_ids:
            uhl = s_hat.inputs[uh]
            if not p.paired(xhl, xl, uhl, ul):
                continue
            e1 = max(eps0, p.sd(uhl, ul))
            Ih, I = cs_hat.I(xhl, uhl), cs.I(xl, ul)
            if Ih > I + gains.gamma_I(e1) + TOL:
                return _cex("cost_I", abstract_state=xhl, state=xl, abstract_input=uhl, input=ul,
                            lhs=Ih, rhs=I + gains.gamma_I(e1))
            O, Oh = cs.O(xl, ul), cs_hat.O(xhl, uhl)
            if O > Oh + gains.gamma_O(e1) + TOL:
                return _cex("cost_O", abstract_state=xhl, state=xl, abstract_input=uhl, input=ul,
                            lhs=O, rhs=Oh + gains.gamma_O(e1))
    return None


def _finite_plain(cs, cs_hat, profile, gains, eps_max=INF):
    s, s_hat = cs.system, cs_hat.system
    p = _as_label_profile(profile, s_hat, s)
    f, fh = _Finite(s), _Finite(s_hat)
    clauses = {"1": True, "2": True}
    if gains is not None:
        clauses["costs"] = True
    checked = 0
    for x0 in s.initial_ids:
        if not any(p.dist(s_hat.states[xh], s.states[x0]) <= p.kappa + TOL for xh in s_hat.initial_ids):
            clauses["1"] = False
            return Verdict(False, "exhaustive", clauses, _cex("1", state=s.states[x0]), checked)
    for xh, x, d in _pairs(p, s_hat, s, eps_max):
        eps0 = max(p.kappa, d)
        xhl, xl = s_hat.states[xh], s.states[x]
        uh_enabled = s_hat.enabled_inputs(xh)
        for u in s.enabled_inputs(x):
            checked += 1
            ul = s.inputs[u]
            found = False
            for uh in uh_enabled:
                uhl = s_hat.inputs[uh]
                if not p.paired(xhl, xl, uhl, ul):
                    continue
                radius = p.kappa + p.beta * eps0 + p.lam * p.sd(uhl, ul)
                if _succ_ok(p, s_hat, s, fh, f, xh, x, uh, u, radius) is None:
                    found = True
                    break
            if not found:
                clauses["2"] = False
                return Verdict(False, "exhaustive", clauses,
                               _cex("2", abstract_state=xhl, state=xl, input=ul, eps=eps0), checked)
        if gains is not None:
            bad = _check_costs(p, cs_hat, cs, gains, xh, x, eps0, range(s_hat.n_inputs), range(s.n_inputs))
            if bad:
                clauses["costs"] = False
                return Verdict(False, "exhaustive", clauses, bad, checked)
    return Verdict(True, "exhaustive", clauses, None, checked)


def _finite_alternating(cs, cs_hat, profile, gains, eps_max=INF):
    s, s_hat = cs.system, cs_hat.system
    p = _as_label_profile(profile, s_hat, s)
    f, fh = _Finite(s), _Finite(s_hat)
    clauses = {"1": True, "2": True}
    if gains is not None:
        clauses["costs"] = True
    checked = 0
    for xh0 in s_hat.initial_ids:
        if not any(p.dist(s_hat.states[xh0], s.states[x0]) <= p.kappa + TOL for x0 in s.initial_ids):
            clauses["1"] = False
            return Verdict(False, "exhaustive", clauses, _cex("1", abstract_state=s_hat.states[xh0]), 0)
    for xh, x, d in _pairs(p, s_hat, s, eps_max):
        eps0 = max(p.kappa, d)
        xhl, xl = s_hat.states[xh], s.states[x]
        U_c = s.enabled_controls(x)
        for ch in s_hat.enabled_controls(xh):
            checked += 1
            good = False
            for c in U_c:
                ok_all = True
                for u in s.inputs_with_control(c):
                    ul = s.inputs[u]
                    ok_d = False
                    for uh in s_hat.inputs_with_control(ch):
                        uhl = s_hat.inputs[uh]
                        if not p.paired(xhl, xl, uhl, ul):
                            continue
                        radius = p.kappa + p.beta * eps0 + p.lam * p.sd(uhl, ul)
                        if _succ_ok(p, s_hat, s, fh, f, xh, x, uh, u, radius) is None and len(fh.succ(xh, uh)):
                            ok_d = True
                            break
                    if not ok_d:
                        ok_all = False
                        break
                if ok_all:
                    good = True
                    break
            if not good:
                clauses["2"] = False
                return Verdict(False, "exhaustive", clauses,
                               _cex("2", abstract_state=xhl, state=xl,
                                    abstract_control=s_hat.controls[ch], eps=eps0), checked)
        if gains is not None:
            bad = _check_costs(p, cs_hat, cs, gains, xh, x, eps0, range(s_hat.n_inputs), range(s.n_inputs))
            if bad:
                clauses["costs"] = False
                return Verdict(False, "exhaustive", clauses, bad, checked)
    return Verdict(True, "exhaustive", clauses, None, checked)


# ---------------------------------------------------------------------------
# sampled checkers (generator concrete systems, ball profiles)
# ---------------------------------------------------------------------------


@dataclass
class Sampling:
    """Sample design for continuous clauses.

    Offsets: a lattice at ``resolution`` inside the ball of radius
    ``local_radius`` plus a far shell at radii ``kappa * 2**k`` up to
    ``eps_max`` along axis and diagonal directions.  ``max_per_pair`` caps
    the (offset, disturbance) combinations per abstract (state, control);
    the kept subset is drawn with a seeded generator.
    """

    resolution: float | None = None
    local_radius: float | None = None
    eps_max: float | None = None
    disturbances: np.ndarray | None = None
    max_per_pair: int | None = None
    seed: int = 0
    states: np.ndarray | None = None
    chunk: int = 64


def _offsets(profile: BallProfile, n: int, sp: Sampling) -> np.ndarray:
    k = profile.kappa if profile.kappa > 0 else 1.0
    res = sp.resolution or k / 4
    rad = sp.local_radius if sp.local_radius is not None else k
    eps_max = sp.eps_max if sp.eps_max is not None else 32 * k
    m = int(np.floor(rad / res + 1e-9))
    ax = np.arange(-m, m + 1) * res
    grid = np.stack([g.ravel() for g in np.meshgrid(*([ax] * n), indexing="ij")], axis=-1)
    grid = grid[vec_norm(grid, profile.norm) <= rad + 1e-12]
    dirs = []
    for a in range(n):
        for sgn in (-1, 1):
            e = np.zeros(n)
            e[a] = sgn
            dirs.append(e)
    for signs in itertools.product((-1, 1), repeat=n):
        v = np.array(signs, dtype=float)
        dirs.append(v / vec_norm(v, profile.norm))
    dirs = np.array(dirs)
    radii = []
    r = 2 * k
    while r <= eps_max + 1e-12:
        radii.append(r)
        r *= 2
    shell = (np.array(radii)[:, None, None] * dirs[None]).reshape(-1, n) if radii else np.zeros((0, n))
    offs = np.vstack([grid, shell])
    # order by distance so the first counterexample is the tightest one
    order = np.lexsort(tuple(offs.T[::-1]) + (np.round(vec_norm(offs, profile.norm), 12),))
    return offs[order]


def _default_disturbances(s, profile: BallProfile):
    dsp = s.disturbance
    if dsp.points is not None:
        return dsp.points
    return dsp.sample()


def _lookup_rows(table: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Index of each row of ``rows`` in ``table`` (-1 when absent)."""
    if table.shape[1] == 0:
        return np.zeros(len(rows), dtype=np.int64) if len(table) else -np.ones(len(rows), np.int64)
    index = {canon(r): i for i, r in enumerate(table)}
    return np.array([index.get(canon(r), -1) for r in rows], dtype=np.int64)


def _min_succ_distance(profile, s_hat: System, xh_ids, uh_ids, Y):
    """min over abstract successors of (xh, uh) of d(yh, y); inf if none."""
    keys = xh_ids * s_hat.n_inputs + uh_ids
    pos = np.searchsorted(s_hat.keys, keys)
    pos_c = np.minimum(pos, len(s_hat.keys) - 1)
    hit = (uh_ids >= 0) & (len(s_hat.keys) > 0) & (s_hat.keys[pos_c] == keys)
    lo = np.where(hit, s_hat.key_ptr[pos_c], 0)
    hi = np.where(hit, s_hat.key_ptr[pos_c + 1], 0)
    cnt = hi - lo
    out = np.full(len(keys), INF)
    if cnt.sum() == 0:
        return out
    rep = np.repeat(np.arange(len(keys)), cnt)
    start = np.repeat(lo - np.concatenate([[0], np.cumsum(cnt)[:-1]]), cnt)
    succ = s_hat.succ[start + np.arange(cnt.sum())]
    d = profile.state_distance(s_hat.coords[succ], Y[rep])
    nz = np.nonzero(cnt)[0]
    out[nz] = np.minimum.reduceat(d, np.concatenate([[0], np.cumsum(cnt[nz])[:-1]]))
    return out


def _sampled_check(cs, cs_hat, profile: BallProfile, gains, sp: Sampling, threads=1):
    s, s_hat = cs.system, cs_hat.system
    if s_hat.coords is None or s_hat.control_coords is None:
        raise ValueError("abstract system needs state and input coordinates")
    n = profile.state_dims
    clauses = {"1": True, "2": True}
    if gains is not None:
        clauses["costs"] = True
    # clause 1
    Xh0 = s_hat.coords[s_hat.initial_ids]
    if profile.orientation == "alternating":
        pts0 = s.initial_points()
        for i, xh0 in zip(s_hat.initial_ids, Xh0):
            if pts0 is None:
                d = s.initial.distance(xh0[:n], profile.norm) if s.dim == n else \
                    _box_hybrid_distance(profile, s.initial, xh0)
            else:
                d = profile.state_distance(xh0[None, :], pts0).min()
            if d > profile.kappa + TOL:
                clauses["1"] = False
                return Verdict(False, "sampled", clauses, _cex("1", abstract_state=s_hat.states[i]), 0)
    else:
        probe = s.initial_points()
        if probe is None:
            probe = s.sample_initial((sp.resolution or profile.kappa / 4))
        for x0 in probe:
            d = profile.state_distance(Xh0, x0[None, :]).min() if len(Xh0) else INF
            if d > profile.kappa + TOL:
                clauses["1"] = False
                return Verdict(False, "sampled", clauses, _cex("1", state=x0), 0)
    offs = _offsets(profile, n, sp)
    UD = sp.disturbances if sp.disturbances is not None else _default_disturbances(s, profile)
    UD = np.atleast_2d(np.asarray(UD, dtype=float))
    if UD.shape[1] != s.disturbance.dim:
        UD = UD.reshape(-1, s.disturbance.dim)
    UDh = profile.abstract_disturbance(UD)
    dh_ids = _lookup_rows(s_hat.dist_coords, UDh)
    states = np.arange(s_hat.n_states) if sp.states is None else np.asarray(sp.states)
    chunks = [states[i:i + sp.chunk] for i in range(0, len(states), sp.chunk)]
    work = lambda ch: _check_chunk(cs, cs_hat, profile, gains, offs, UD, dh_ids, ch, sp)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(work, chunks))
    else:
        results = []
        for ch in chunks:
            results.append(work(ch))
            if results[-1][1] is not None:
                break
    checked = 0
    for cnt, cex in results:
        checked += cnt
        if cex is not None:
            clauses[cex["clause"] if cex["clause"] in clauses else "2"] = False
            return Verdict(False, "sampled", clauses, cex, checked)
    return Verdict(True, "sampled", clauses, None, checked)


def _box_hybrid_distance(profile, box, xh):
    n = profile.state_dims
    lo, hi = box.lo, box.hi
    if np.any((xh[n:] < lo[n:] - 1e-9) | (xh[n:] > hi[n:] + 1e-9)):
        return INF
    gap = np.maximum(lo[:n] - xh[:n], 0) + np.maximum(xh[:n] - hi[:n], 0)
    return float(vec_norm(gap, profile.norm))


def _check_chunk(cs, cs_hat, profile, gains, offs, UD, dh_ids, chunk, sp):
    s, s_hat = cs.system, cs_hat.system
    n = profile.state_dims
    plain = profile.orientation == "plain"
    pairs = []
    for xh in chunk:
        # plain: concrete controls equal the abstract ones, so every abstract
        # control must be matched; alternating: the enabled abstract controls
        ctrls = np.arange(s_hat.n_controls) if plain else s_hat.enabled_controls(xh)
        pairs.append(np.column_stack([np.full(len(ctrls), xh), ctrls]))
    pairs = np.vstack(pairs) if pairs else np.zeros((0, 2), dtype=np.int64)
    if not len(pairs):
        return 0, None
    M = len(offs) * len(UD)
    if sp.max_per_pair and M > sp.max_per_pair:
        # seeded subset per pair that always keeps the first and last combination
        rng = np.random.default_rng([sp.seed, int(chunk[0])])
        keys = rng.random((len(pairs), M))
        keys[:, [0, M - 1]] = -1.0
        sel = np.sort(np.argpartition(keys, sp.max_per_pair - 1, axis=1)[:, :sp.max_per_pair], axis=1)
    else:
        sel = np.broadcast_to(np.arange(M), (len(pairs), M))
    k = sel.shape[1]
    combo = sel.ravel()
    R = np.column_stack([np.repeat(pairs[:, 0], k), combo // len(UD), np.repeat(pairs[:, 1], k),
                         combo % len(UD)]).astype(np.int64)
    xh_ids, oi, c_ids, di = R.T
    XH = s_hat.coords[xh_ids]
    X = XH.copy()
    X[:, :n] += offs[oi]
    d = profile.state_distance(XH, X)
    eps0 = np.maximum(profile.kappa, d)
    UC = s_hat.control_coords[c_ids]
    UDc = UD[di]
    dh = dh_ids[di]
    uh_ids = np.where(dh >= 0, c_ids * s_hat.n_disturbances + dh, -1)
    sd = profile.s_d(UDc)
    Y = s.step_batch(X, UC, UDc)
    blocked = np.any(np.isnan(Y), axis=1)
    radius = profile.kappa + profile.beta * eps0 + profile.lam * sd
    dmin = _min_succ_distance(profile, s_hat, xh_ids, uh_ids, np.where(blocked[:, None], 0.0, Y))
    if plain:
        # blocked concrete inputs are outside U(x) and impose nothing
        fail = ~blocked & (dmin > radius + TOL)
    else:
        # the concrete control must be enabled for every disturbance
        fail = blocked | (dmin > radius + TOL)
    cex = None
    first = int(np.argmax(fail)) if fail.any() else None
    if gains is not None:
        uh_safe = np.maximum(uh_ids, 0)
        e1 = np.maximum(eps0, sd)
        Ih = cs_hat.I.on_ids(s_hat, xh_ids, uh_safe)
        Oh = cs_hat.O.on_ids(s_hat, xh_ids, uh_safe)
        I = cs.I.on_batch(X, UC, UDc)
        O = cs.O.on_batch(X, UC, UDc)
        bad_I = (uh_ids >= 0) & (Ih > I + gains.gamma_I(e1) + TOL)
        bad_O = (uh_ids >= 0) & (O > Oh + gains.gamma_O(e1) + TOL)
        bad_c = bad_I | bad_O
        if bad_c.any():
            j = int(np.argmax(bad_c))
            if first is None or j < first:
                clause = "costs"
                cex = _cex(clause, abstract_state=s_hat.states[xh_ids[j]], state=X[j],
                           control=UC[j], disturbance=UDc[j], eps=eps0[j],
                           lhs=float(Ih[j] if bad_I[j] else O[j]),
                           rhs=float(I[j] + gains.gamma_I(e1[j]) if bad_I[j] else Oh[j] + gains.gamma_O(e1[j])))
                return len(R), cex
    if first is not None:
        j = first
        cex = _cex("2", abstract_state=s_hat.states[xh_ids[j]], state=X[j], control=UC[j],
                   disturbance=UDc[j], eps=eps0[j], required_radius=radius[j],
                   best_distance=dmin[j], blocked=bool(blocked[j]))
    return len(R), cex


# ---------------------------------------------------------------------------
# public checkers
# ---------------------------------------------------------------------------


def check_sr(s: System, s_hat: System, rel) -> Verdict:
    """Exact simulation from ``s`` to ``s_hat``.  ``rel`` is an
    :class:`ExplicitRelation` or a profile already fixed at some eps (use
    :func:`fixed_epsilon`)."""
    p = rel.as_profile() if isinstance(rel, ExplicitRelation) else rel
    p = replace(p, orientation="plain") if p.orientation != "plain" else p
    return _finite_plain(CostedSystem.zero_costs(s), CostedSystem.zero_costs(s_hat), p, None)


def check_iosr(cs: CostedSystem, cs_hat: CostedSystem, rel, epsilon_slack: float = 0.0) -> Verdict:
    """Cost inequalities of an (eps-approximate) input-output simulation on
    every related tuple: Ih <= I + eps and O <= Oh + eps."""
    p = rel.as_profile() if isinstance(rel, ExplicitRelation) else rel
    s, s_hat = cs.system, cs_hat.system
    eps = float(epsilon_slack)
    clauses = {"costs": True}
    checked = 0
    for xh, x, d in _pairs(p, s_hat, s):
        for u in range(s.n_inputs):
            for uh in range(s_hat.n_inputs):
                xl, xhl, ul, uhl = s.states[x], s_hat.states[xh], s.inputs[u], s_hat.inputs[uh]
                if not p.paired(xhl, xl, uhl, ul):
                    continue
                checked += 1
                if cs_hat.I(xhl, uhl) > cs.I(xl, ul) + eps + TOL:
                    clauses["costs"] = False
                    return Verdict(False, "exhaustive", clauses,
                                   _cex("cost_I", abstract_state=xhl, state=xl, abstract_input=uhl,
                                        input=ul), checked)
                if cs.O(xl, ul) > cs_hat.O(xhl, uhl) + eps + TOL:
                    clauses["costs"] = False
                    return Verdict(False, "exhaustive", clauses,
                                   _cex("cost_O", abstract_state=xhl, state=xl, abstract_input=uhl,
                                        input=ul, lhs=cs.O(xl, ul), rhs=cs_hat.O(xhl, uhl) + eps), checked)
    return Verdict(True, "exhaustive", clauses, None, checked)


def check_acsr(cs: CostedSystem, cs_hat: CostedSystem, profile, gains: CostGains | None = None, *,
               sampling: Sampling | None = None, threads: int = 1) -> Verdict:
    """Contractive (input-output) simulation from ``cs`` to ``cs_hat``."""
    if getattr(profile, "orientation", "plain") != "plain":
        raise PreconditionError("check_acsr needs a plain-orientation profile")
    if profile.beta >= 1:
        raise PreconditionError("beta must be < 1")
    if cs.system.is_finite:
        return _finite_plain(cs, cs_hat, profile, gains)
    if not isinstance(profile, BallProfile):
        raise PreconditionError("generator systems are checked with ball profiles only")
    return _sampled_check(cs, cs_hat, profile, gains, sampling or Sampling(), threads)


def check_acasr(cs: CostedSystem, cs_hat: CostedSystem, profile, gains: CostGains | None = None, *,
                sampling: Sampling | None = None, threads: int = 1) -> Verdict:
    """Contractive alternating (input-output) simulation from ``cs_hat`` to
    ``cs``."""
    if isinstance(profile, ExplicitRelation):
        profile = profile.as_profile()
    if profile.orientation != "alternating":
        raise PreconditionError("check_acasr needs an alternating-orientation profile")
    s = cs.system
    if s.is_finite:
        return _finite_alternating(cs, cs_hat, profile, gains)
    if not isinstance(profile, BallProfile):
        raise PreconditionError("generator systems are checked with ball profiles only")
    return _sampled_check(cs, cs_hat, profile, gains, sampling or Sampling(), threads)


# ---------------------------------------------------------------------------
# maximal alternating simulation
# ---------------------------------------------------------------------------


def max_asr(s_hat: System, s: System):
    """Largest exact alternating simulation from ``s_hat`` to ``s``, pruned
    so that every tuple's control pair satisfies the disturbance-matching
    clause.  Returns ``(ExplicitRelation, report)``."""
    pairs = np.ones((s_hat.n_states, s.n_states), dtype=bool)

    def succ_ok(xh, x, uh, u):
        for y in s.successors(x, u):
            if not any(pairs[yh, y] for yh in s_hat.successors(xh, uh)):
                return False
        return len(s_hat.successors(xh, uh)) > 0 or len(s.successors(x, u)) == 0

    def control_ok(xh, x, ch, c):
        for u in s.inputs_with_control(c):
            if not any(succ_ok(xh, x, uh, u) for uh in s_hat.inputs_with_control(ch)):
                return False
        return True

    changed = True
    while changed:
        changed = False
        drop = []
        for xh, x in zip(*np.nonzero(pairs)):
            Uc = s.enabled_controls(x)
            for ch in s_hat.enabled_controls(xh):
                if not any(control_ok(xh, x, ch, c) for c in Uc):
                    drop.append((xh, x))
                    break
        for xh, x in drop:
            pairs[xh, x] = False
            changed = True
    tuples = []
    for xh, x in zip(*np.nonzero(pairs)):
        for ch in range(s_hat.n_controls):
            for c in range(s.n_controls):
                if ch in s_hat.enabled_controls(xh) and c in s.enabled_controls(x) \
                        and control_ok(xh, x, ch, c):
                    for u in s.inputs_with_control(c):
                        for uh in s_hat.inputs_with_control(ch):
                            if succ_ok(xh, x, uh, u):
                                tuples.append((s_hat.states[xh], s.states[x], s_hat.inputs[uh], s.inputs[u]))
    rel = ExplicitRelation(tuples, "alternating",
                           [(s_hat.states[a], s.states[b]) for a, b in zip(*np.nonzero(pairs))])
    uncovered = [s_hat.states[i] for i in s_hat.initial_ids if not pairs[i][s.initial_ids].any()]
    report = {"pairs": int(pairs.sum()), "tuples": len(rel), "empty": not pairs.any(),
              "uncovered_initial": uncovered}
    return rel, report


# ---------------------------------------------------------------------------
# trace matching and bounds
# ---------------------------------------------------------------------------


@dataclass
class MatchedTracePair:
    concrete: Behavior
    abstract: Behavior
    eps: np.ndarray
    sd: np.ndarray
    dist: np.ndarray


def match_trace(cs: CostedSystem, cs_hat: CostedSystem, profile, behavior: Behavior) -> MatchedTracePair:
    """Abstract behavior related to ``behavior`` along the contractive
    recursion eps_0 = kappa, eps_{t+1} = kappa + beta eps_t + lam s_d.

    Choices are greedy: the abstract input with the smallest s_d whose
    successors contain a point within the required radius, then the closest
    such successor (ties by id).
    """
    s, s_hat = cs.system, cs_hat.system
    p = _as_label_profile(profile, s_hat, s)
    T = len(behavior)
    eps = np.zeros(T)
    sds = np.zeros(T)
    dist = np.zeros(T)
    x0 = behavior.states[0]
    cands = [(p.dist(s_hat.states[i], x0), int(i)) for i in s_hat.initial_ids]
    cands = [c for c in cands if c[0] <= p.kappa + TOL]
    if not cands:
        raise MatchFailure("no abstract initial state within kappa")
    xh = min(cands)[1]
    eps[0] = p.kappa
    xs_h, us_h = [s_hat.states[xh]], []
    for t in range(T):
        x, u = behavior.states[t], behavior.inputs[t]
        xhl = s_hat.states[xh]
        dist[t] = p.dist(xhl, x)
        if dist[t] > eps[t] + TOL:
            raise MatchFailure(f"state distance {dist[t]} exceeds eps {eps[t]} at t={t}")
        nxt = behavior.states[t + 1] if t + 1 < T else None
        options = []
        for uh in s_hat.enabled_inputs(xh):
            uhl = s_hat.inputs[uh]
            if p.paired(xhl, x, uhl, u):
                options.append((p.sd(uhl, u), int(uh)))
        options.sort()
        chosen = None
        for sd_val, uh in options:
            if nxt is None:
                chosen = (sd_val, uh, None)
                break
            radius = p.kappa + p.beta * eps[t] + p.lam * sd_val
            best = None
            for yh in s_hat.successors(xh, uh):
                dd = p.dist(s_hat.states[yh], nxt)
                if dd <= radius + TOL and (best is None or (dd, yh) < best):
                    best = (dd, int(yh))
            if best is not None:
                chosen = (sd_val, uh, best[1])
                break
        if chosen is None:
            raise MatchFailure(f"no abstract input matches the concrete step at t={t}")
        sds[t] = chosen[0]
        us_h.append(s_hat.inputs[chosen[1]])
        if nxt is not None:
            eps[t + 1] = p.kappa + p.beta * eps[t] + p.lam * sds[t]
            xh = chosen[2]
            xs_h.append(s_hat.states[xh])
    return MatchedTracePair(behavior, Behavior(xs_h, us_h), eps, sds, dist)


def gamma_bounds(profile, beta_prime: float):
    """``(kappa_delta, gamma_delta, mu_delta)`` for the eps-trace bound."""
    kappa, beta, lam = profile.params()
    if not beta < beta_prime < 1:
        raise ValueError(f"beta' must lie in ({beta}, 1), got {beta_prime}")
    return kappa / (1 - beta), lam / (beta_prime - beta), kld_exponential(beta_prime)


def eps_trace_bound(profile, beta_prime, sd_seq) -> np.ndarray:
    """b_{t+1} = max_{t'<=t} mu_delta(gamma_delta s_d(t'), t - t') + kappa_delta;
    b_0 = kappa."""
    kd, gd, mu = gamma_bounds(profile, beta_prime)
    sd_seq = np.asarray(sd_seq, dtype=float)
    out = np.empty(len(sd_seq) + 1)
    out[0] = profile.kappa
    run = 0.0
    for t, v in enumerate(sd_seq):
        run = max(run * beta_prime, gd * v)
        out[t + 1] = run + kd
    return out


def mismatch_gamma(profile, *, pairs=None, sd=None) -> Callable:
    """Input mismatch Gamma(x, u) = sup of s_d over abstract inputs paired
    with ``u``.

    Ball profiles give the closed form ``|u^d[free]|``.  A finite pairing
    table ``pairs`` (iterable of (uh, u)) with an ``sd`` callable gives the
    brute-force maximum.
    """
    if isinstance(profile, BallProfile):
        return lambda x, u: float(profile.s_d(np.asarray(u[1], dtype=float)))
    if pairs is None:
        raise PreconditionError("Gamma is not computable without a structural or finite pairing")
    sd = sd or profile.sd
    table: dict = {}
    for uh, u in pairs:
        table[u] = max(table.get(u, 0.0), float(sd(uh, u)))
    return lambda x, u: table.get(u, 0.0)


def transport_sr(cert: PIodsCertificate) -> PIodsCertificate:
    """An exact input-output simulation carries the certificate unchanged."""
    return cert


@dataclass
class BoundEvaluator:
    """Right-hand side of the transported bound

    max_{t'} mu_hat(gamma_hat(I_t'), t-t') + max_{t'} gamma_O(mu_D(g'_D Gamma_t', t-t'))
    + gamma_O(kappa_D) + rho_hat
    """

    cert_hat: PIodsCertificate
    gamma_O: KFunction
    kappa_delta: float
    gamma_delta: float
    beta_prime: float

    @property
    def gamma_delta_prime(self):
        return max(1.0, self.gamma_delta)

    @property
    def constant(self):
        return float(self.gamma_O(self.kappa_delta)) + self.cert_hat.rho

    def first_term(self, I_seq) -> np.ndarray:
        from .monitor import rhs_values
        return rhs_values(self.cert_hat.gamma(np.asarray(I_seq, dtype=float)), self.cert_hat.mu)

    def second_term(self, Gamma_seq) -> np.ndarray:
        G = np.asarray(Gamma_seq, dtype=float)
        out = np.empty(len(G))
        run = 0.0
        for t, g in enumerate(G):
            run = max(run * self.beta_prime, self.gamma_delta_prime * g)
            out[t] = run
        # gamma_O is increasing, so the max commutes with it
        return np.asarray(self.gamma_O(out), dtype=float)

    def __call__(self, I_seq, Gamma_seq) -> np.ndarray:
        return self.first_term(I_seq) + self.second_term(Gamma_seq) + self.constant

    def online(self):
        return _OnlineBound(self)


class _OnlineBound:
    def __init__(self, ev: BoundEvaluator):
        from .monitor import incremental_bound
        self.ev = ev
        self.first = incremental_bound(ev.cert_hat.mu, ev.cert_hat.gamma, 0.0)
        self.run = 0.0

    def push(self, I_t, Gamma_t) -> float:
        a = self.first.push(I_t)
        self.run = max(self.run * self.ev.beta_prime, self.ev.gamma_delta_prime * Gamma_t)
        return a + float(self.ev.gamma_O(self.run)) + self.ev.constant


def transport_acsr(cert_hat: PIodsCertificate, profile, gains: CostGains, beta_prime: float, *,
                   check_subadditive: bool = True) -> BoundEvaluator:
    """Bound evaluator for the concrete system from an abstract certificate.

    Preconditions checked here: gamma_O subadditive (on the documented grid)
    and beta < beta' < 1.  The relation check and the ``I_hat <= I``
    precondition belong to the caller (see :func:`check_acsr`).
    """
    if check_subadditive:
        ok, witness = is_subadditive(gains.gamma_O)
        if not ok:
            raise PreconditionError(f"gamma_O is not subadditive at {witness}")
    kd, gd, _ = gamma_bounds(profile, beta_prime)
    return BoundEvaluator(cert_hat, gains.gamma_O, kd, gd, beta_prime)


def identity_gains() -> CostGains:
    return CostGains(k_zero(), k_linear(1.0))
