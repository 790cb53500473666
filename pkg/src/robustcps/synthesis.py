"""Robust controller synthesis on finite costed systems.

The objective is the pIODS inequality with gain ``gamma * c``, linear decay
``max(c - eta t, 0)`` and offset ``rho``.  Writing its right-hand side as a
running maximum turns it into a safety game on positions ``(x, b)``: ``b``
is the previous bound (``0`` before the first step), the step under input
``u`` updates ``b' = max(b - eta, gamma I(x, u), 0)`` and is safe iff
``O(x, u) <= b' + rho``.  The controller picks the control, the adversary
the disturbance and the successor.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .compare import PIodsCertificate, k_linear, k_zero, kld_linear_decay
from .core import TOL, CostedSystem, System
from .relations import ExplicitRelation


class SynthesisError(ValueError):
    pass


def round12(v: float) -> float:
    """Round to 12 significant digits (bound-level canonical form)."""
    v = float(f"{float(v):.12g}")
    return 0.0 if v == 0 else v


@dataclass(frozen=True)
class SynthesisTarget:
    gamma: float
    eta: float
    rho: float = 0.0

    def __post_init__(self):
        if self.gamma < 0 or self.rho < 0:
            raise ValueError("gamma and rho must be nonnegative")
        if not self.eta > 0:
            raise ValueError("eta must be positive")

    def update(self, b, I):
        return round12(max(b - self.eta, self.gamma * I, 0.0))

    def certificate(self) -> PIodsCertificate:
        gain = k_linear(self.gamma) if self.gamma > 0 else k_zero()
        return PIodsCertificate(gain, kld_linear_decay(self.eta), self.rho)

    def to_json(self):
        return {"gamma": self.gamma, "eta": self.eta, "rho": self.rho}

    @staticmethod
    def from_json(d):
        return SynthesisTarget(float(d["gamma"]), float(d["eta"]), float(d.get("rho", 0.0)))


def bound_levels(cs_hat: CostedSystem, target: SynthesisTarget, *, cap: int = 1_000_000) -> np.ndarray:
    """Finite level set of the bound tracker, sorted descending."""
    I_keys, _ = cs_hat.key_costs()
    return _levels(I_keys, target, cap)


def _levels(I_vals, target, cap):
    image = {round12(target.gamma * v) for v in np.unique(np.asarray(I_vals, dtype=float))}
    levels = {0.0}
    for v in image:
        total = v / target.eta + 1 if v > 0 else 1
        if len(levels) + total > cap:
            raise SynthesisError(f"bound level set exceeds the cap {cap}: {len(image)} gain values, "
                                 f"about {int(total)} levels from value {v}")
        while v > 0:
            levels.add(v)
            v = round12(v - target.eta)
    return np.array(sorted(levels, reverse=True))


@dataclass
class _Game:
    levels: np.ndarray
    bn: np.ndarray          # (n_keys, n_B) successor level index
    safe: np.ndarray        # (n_keys, n_B)
    grp_state: np.ndarray
    grp_ptr: np.ndarray     # into key index space
    grp_control: np.ndarray
    keep: np.ndarray | None = None   # key subset when groups leave gaps


def _build_game(cs: CostedSystem, target: SynthesisTarget, cap: int) -> _Game:
    s = cs.system
    I_k, O_k = cs.key_costs()
    B = _levels(I_k, target, cap)
    index = {v: i for i, v in enumerate(B.tolist())}
    nK, nB = len(s.keys), len(B)
    bn = np.empty((nK, nB), dtype=np.int64)
    safe = np.empty((nK, nB), dtype=np.uint8)
    gI = np.array([round12(target.gamma * v) for v in I_k])
    for j, b in enumerate(B):
        nxt = np.maximum(np.maximum(b - target.eta, gI), 0.0)
        nxt = np.array([round12(v) for v in nxt])
        bn[:, j] = [index[v] for v in nxt]
        safe[:, j] = O_k <= nxt + target.rho + TOL
    # groups: (state, control) blocks enabled for every disturbance
    u = s.keys % s.n_inputs
    st = s.keys // s.n_inputs
    ctrl = s.input_control[u]
    block = st * s.n_controls + ctrl
    starts = np.flatnonzero(np.r_[True, block[1:] != block[:-1]]) if nK else np.zeros(0, np.int64)
    ends = np.r_[starts[1:], nK]
    full = (ends - starts) == s.n_disturbances
    starts, ends = starts[full], ends[full]
    if len(starts) and starts[0] == 0 and ends[-1] == nK and np.all(starts[1:] == ends[:-1]):
        return _Game(B, bn, safe, st[starts], np.r_[starts, nK], ctrl[starts])
    # some keys belong to partially enabled controls: solve on the subset
    keep = np.concatenate([np.arange(a, b) for a, b in zip(starts, ends)]) if len(starts) else \
        np.zeros(0, np.int64)
    grp_ptr = np.r_[0, np.cumsum(ends - starts)].astype(np.int64)
    return _Game(B, bn, safe, st[starts], grp_ptr, ctrl[starts], keep)


def _solve(cs: CostedSystem, game: _Game):
    s = cs.system
    keep = game.keep
    if keep is None:
        key_ptr, succ, bn, safe = s.key_ptr, s.succ, game.bn, game.safe
    else:
        cnt = s.key_ptr[keep + 1] - s.key_ptr[keep]
        key_ptr = np.r_[0, np.cumsum(cnt)]
        succ = np.concatenate([s.succ[s.key_ptr[k]:s.key_ptr[k + 1]] for k in keep]) if len(keep) \
            else np.zeros(0, np.int64)
        bn, safe = game.bn[keep], game.safe[keep]
    if len(game.grp_state) == 0:
        return np.zeros((s.n_states, len(game.levels)), np.uint8), 1, (key_ptr, succ, bn, safe)
    win, rounds = kernels.safety_rounds(s.n_states, len(game.levels), game.grp_state, game.grp_ptr,
                                        key_ptr, succ, bn, safe)
    return win, rounds, (key_ptr, succ, bn, safe)


def _strategy(game: _Game, win, arrays):
    """Per position the winning group minimizing the worst successor level,
    ties by control id; -1 when losing."""
    key_ptr, succ, bn, safe = arrays
    nG = len(game.grp_state)
    nX, nB = win.shape
    choice = -np.ones((nX, nB), dtype=np.int64)
    if nG == 0 or len(succ) == 0:
        return choice
    n_keys = len(key_ptr) - 1
    key_of_succ = np.repeat(np.arange(n_keys), np.diff(key_ptr))
    for j in range(nB):
        vals = win[succ, bn[key_of_succ, j]]
        k_ok = np.minimum.reduceat(vals, key_ptr[:-1]).astype(bool) & safe[:, j].astype(bool)
        g_ok = np.logical_and.reduceat(k_ok, game.grp_ptr[:-1])
        worst = np.maximum.reduceat(game.levels[bn[:, j]], game.grp_ptr[:-1])
        cand = np.flatnonzero(g_ok)
        if not len(cand):
            continue
        order = np.lexsort((game.grp_control[cand], worst[cand], game.grp_state[cand]))
        cand = cand[order]
        first = np.r_[True, game.grp_state[cand][1:] != game.grp_state[cand][:-1]]
        sel = cand[first]
        choice[game.grp_state[sel], j] = sel
    return choice


@dataclass
class Controller:
    """Synthesized controller ``(S_C, R_C)`` for a finite system."""

    system: System
    relation: ExplicitRelation
    target: SynthesisTarget
    levels: np.ndarray
    rounds: int
    winning_initial: list
    losing_initial: list
    strategy: dict = field(repr=False, default_factory=dict)
    realizable: bool = True

    def control_for(self, state_label, b):
        return self.strategy[(state_label, round12(b))]

    def report(self):
        return {"realizable": True, "target": self.target.to_json(),
                "controller_states": self.system.n_states,
                "controller_transitions": self.system.n_transitions,
                "levels": [float(v) for v in self.levels], "rounds": self.rounds,
                "winning_initial": len(self.winning_initial),
                "losing_initial": [_plain(x) for x in self.losing_initial]}


@dataclass
class Unrealizable:
    target: SynthesisTarget
    losing_initial: list
    levels: np.ndarray
    rounds: int
    winning_positions: int
    realizable: bool = False

    def report(self):
        return {"realizable": False, "target": self.target.to_json(),
                "losing_initial": [_plain(x) for x in self.losing_initial],
                "levels": [float(v) for v in self.levels], "rounds": self.rounds,
                "winning_positions": self.winning_positions}


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(a) for a in v]
    return v


def synthesize(cs_hat: CostedSystem, target: SynthesisTarget, *, cap: int = 1_000_000):
    """Solve the safety game; returns :class:`Controller` or
    :class:`Unrealizable`.

    The controller's states are the winning positions ``(x, b)`` reachable
    under the extracted strategy from ``(x0, 0)``; its inputs are the plant's
    inputs and ``R_C = {((x, b), x, u, u)}`` over the strategy's inputs.
    """
    s = cs_hat.system
    if not s.is_finite:
        raise SynthesisError("synthesis needs a finite system")
    game = _build_game(cs_hat, target, cap)
    win, rounds, arrays = _solve(cs_hat, game)
    B = game.levels
    j0 = int(np.flatnonzero(B == 0.0)[0])
    init_win = [int(x) for x in s.initial_ids if win[x, j0]]
    losing = [s.states[x] for x in s.initial_ids if not win[x, j0]]
    if not init_win:
        return Unrealizable(target, losing, B, rounds, int(win.sum()))
    choice = _strategy(game, win, arrays)
    key_ptr, succ, bn, _ = arrays
    # keys of group g: game.grp_ptr[g] .. game.grp_ptr[g+1] in (possibly
    # subset) key space; map back to the system's key index
    keep = game.keep
    index = {}
    order = []

    def intern(x, j):
        k = index.get((x, j))
        if k is None:
            k = len(order)
            index[(x, j)] = k
            order.append((x, j))
        return k

    src, inp, dst = [], [], []
    queue = deque(intern(x, j0) for x in init_win)
    seen = set()
    strategy = {}
    while queue:
        k = queue.popleft()
        if k in seen:
            continue
        seen.add(k)
        x, j = order[k]
        g = choice[x, j]
        if g < 0:
            raise SynthesisError("winning position without a strategy choice")
        strategy[(s.states[x], float(B[j]))] = s.controls[int(game.grp_control[g])]
        for kk in range(game.grp_ptr[g], game.grp_ptr[g + 1]):
            sys_key = kk if keep is None else int(keep[kk])
            u = int(s.keys[sys_key] - x * s.n_inputs)
            jn = int(bn[kk, j])
            for y in succ[key_ptr[kk]:key_ptr[kk + 1]]:
                t = intern(int(y), jn)
                src.append(k)
                inp.append(u)
                dst.append(t)
                if t not in seen:
                    queue.append(t)
    labels = [(s.states[x], float(B[j])) for x, j in order]
    coords = None
    if s.coords is not None:
        coords = np.hstack([s.coords[[x for x, _ in order]], B[[j for _, j in order]][:, None]])
    sc = System.from_ids(labels, range(len(init_win)), s.inputs, src, inp, dst,
                         controls=s.controls, disturbances=s.disturbances,
                         input_control=s.input_control, input_dist=s.input_dist,
                         coords=coords, name=f"controller[{s.name}]",
                         control_coords=s.control_coords, dist_coords=s.dist_coords)
    sc.plant_state = np.array([x for x, _ in order], dtype=np.int64)
    sc.level = np.array([B[j] for _, j in order])
    tuples = []
    for k, (x, j) in enumerate(order):
        for u in sc.enabled_inputs(k):
            ul = s.inputs[int(u)]
            tuples.append((labels[k], s.states[x], ul, ul))
    rel = ExplicitRelation(tuples, "alternating")
    return Controller(sc, rel, target, B, rounds, [s.states[x] for x in init_win], losing, strategy)


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------


@dataclass
class ClosedLoopVerdict:
    passed: bool
    positions: int
    path: list | None = None

    def __bool__(self):
        return self.passed

    def to_json(self):
        return {"passed": self.passed, "positions": self.positions,
                "path": None if self.path is None else [[_plain(a) for a in step] for step in self.path]}


def verify_closed_loop(closed: CostedSystem, target: SynthesisTarget) -> ClosedLoopVerdict:
    """Exhaustive check of the pIODS inequality on every behavior of a finite
    closed loop; on failure returns a path ``[(state, input, bound), ...]``
    ending in the violating step."""
    s = closed.system
    I_k, O_k = closed.key_costs()
    key_pos = {int(k): i for i, k in enumerate(s.keys)}
    start = [(int(x), 0.0) for x in s.initial_ids]
    parent = {p: None for p in start}
    queue = deque(start)
    while queue:
        pos = queue.popleft()
        x, b = pos
        for u in s.enabled_inputs(x):
            ki = key_pos[x * s.n_inputs + int(u)]
            b2 = target.update(b, I_k[ki])
            if O_k[ki] > b2 + target.rho + TOL:
                path = [(s.states[x], s.inputs[int(u)], b2)]
                p = pos
                while parent[p] is not None:
                    q, uu = parent[p]
                    path.append((s.states[q[0]], s.inputs[uu], target.update(q[1], I_k[key_pos[q[0] * s.n_inputs + uu]])))
                    p = q
                return ClosedLoopVerdict(False, len(parent), path[::-1])
            for y in s.successors(x, int(u)):
                nxt = (int(y), b2)
                if nxt not in parent:
                    parent[nxt] = (pos, int(u))
                    queue.append(nxt)
    return ClosedLoopVerdict(True, len(parent))


def closed_loop(controller: Controller, cs_hat: CostedSystem) -> CostedSystem:
    """``S_C x_{R_C} S`` with the plant's costs."""
    from .compose import ExplicitSync, compose, part_costs
    comp = compose(controller.system, cs_hat.system, ExplicitSync.from_relation(controller.relation),
                   name="closed-loop")
    return part_costs(comp, cs_hat, side=1)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


def sweep(cs_hat: CostedSystem, targets, *, cap: int = 1_000_000):
    """Realizability verdict per target, in the given order."""
    out = []
    for t in targets:
        res = synthesize(cs_hat, t, cap=cap)
        out.append((t, bool(res.realizable)))
    return out


def frontier(cs_hat: CostedSystem, etas, gammas, rho: float = 0.0, *, cap: int = 1_000_000):
    """Smallest realizable gain from ``gammas`` for each decay in ``etas``
    (``None`` when none is realizable).  Realizability is monotone in the
    gain for fixed decay, so each row is a bisection over sorted gains."""
    gammas = sorted(gammas)
    rows = []
    for eta in etas:
        lo, hi = 0, len(gammas)
        while lo < hi:
            mid = (lo + hi) // 2
            if synthesize(cs_hat, SynthesisTarget(gammas[mid], eta, rho), cap=cap).realizable:
                hi = mid
            else:
                lo = mid + 1
        rows.append((eta, gammas[lo] if lo < len(gammas) else None))
    return rows
