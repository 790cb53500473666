"""Transition systems, cost functions and behaviors.

Two flavours of system live here:

* :class:`System` -- an explicit finite system.  States and inputs are
  interned to dense integer ids and the transition map is stored as a
  sorted sparse adjacency keyed by ``state * n_inputs + input``.  The
  no-disturbance symbol is always input id 0.
* :class:`GeneratorSystem` -- a deterministic system over real vectors given
  by a batched successor map.  These are only ever explored on finite
  samples or over bounded horizons.

Every system carries an input split ``U = U^c x U^d``; unsplit systems have
the single control ``BOT`` and all inputs act as disturbances.
"""
from __future__ import annotations

import itertools
import random
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterable, Iterator

import numpy as np

BOT = "bot"
TOL = 1e-9


class BlockedExecution(RuntimeError):
    """Raised when a step is requested from an empty successor set."""

    def __init__(self, state, inp, message: str | None = None, log=None):
        self.state = state
        self.input = inp
        self.log = log
        super().__init__(message or f"blocked at state={state!r} input={inp!r}")


class BehaviorError(ValueError):
    pass


def canon(value):
    """Hashable canonical form for labels built from floats and arrays."""
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, (list, tuple)):
        return tuple(canon(v) for v in value)
    if isinstance(value, (float, np.floating)):
        v = round(float(value), 12)
        return 0.0 if v == 0 else v
    if isinstance(value, np.integer):
        return int(value)
    return value


# ---------------------------------------------------------------------------
# label spaces
# ---------------------------------------------------------------------------


class Labels(Sequence):
    """Ordered collection of hashable labels with O(1) reverse lookup."""

    def __init__(self, labels: Iterable[Hashable]):
        self._labels = tuple(labels)
        self._index = {lab: i for i, lab in enumerate(self._labels)}
        if len(self._index) != len(self._labels):
            raise ValueError("duplicate labels")

    def __len__(self):
        return len(self._labels)

    def __getitem__(self, i):
        return self._labels[i]

    def __iter__(self):
        return iter(self._labels)

    def __contains__(self, lab):
        try:
            return lab in self._index
        except TypeError:
            return False

    def index(self, lab, *args):
        try:
            return self._index[lab]
        except KeyError:
            raise KeyError(f"unknown label {lab!r}") from None

    def __repr__(self):
        return f"Labels({list(self._labels)!r})"


class ProductLabels(Sequence):
    """Lazy cartesian product ``a x b`` with row-major ids ``i*len(b)+j``."""

    def __init__(self, a: Sequence, b: Sequence):
        self.a, self.b = a, b

    def __len__(self):
        return len(self.a) * len(self.b)

    def __getitem__(self, i):
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        q, r = divmod(i, len(self.b))
        return (self.a[q], self.b[r])

    def __iter__(self):
        for x in self.a:
            for y in self.b:
                yield (x, y)

    def __contains__(self, lab):
        try:
            self.index(lab)
            return True
        except (KeyError, TypeError, ValueError):
            return False

    def index(self, lab, *args):
        x, y = lab
        return self.a.index(x) * len(self.b) + self.b.index(y)


def _as_rows(a, n, what):
    if a is None:
        return None
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(n, -1) if n else a.reshape(0, 0)
    if len(a) != n:
        raise ValueError(f"{what} must have one row per label")
    return a


def as_labels(seq) -> Sequence:
    if isinstance(seq, (Labels, ProductLabels)):
        return seq
    return Labels(seq)


# ---------------------------------------------------------------------------
# finite systems
# ---------------------------------------------------------------------------


class System:
    """Explicit finite transition system ``(X, X0, U, r)``.

    Parameters
    ----------
    states, inputs : sequences of hashable labels.  ``inputs[0]`` is the
        no-disturbance symbol.
    initial : iterable of state labels.
    transitions : iterable of ``(state, input, successor)`` label triples.
    controls, disturbances : optional label sequences describing the input
        split.  When given, ``inputs`` must be ``ProductLabels(controls,
        disturbances)`` (or is built that way when ``inputs`` is None).
    coords : optional ``(n_states, k)`` array embedding states in R^k.
    """

    is_finite = True

    def __init__(self, states, initial, inputs, transitions=(), *,
                 controls=None, disturbances=None, coords=None, name="",
                 control_coords=None, dist_coords=None):
        states = as_labels(states)
        if inputs is None:
            if controls is None or disturbances is None:
                raise ValueError("inputs or an input split is required")
            inputs = ProductLabels(as_labels(controls), as_labels(disturbances))
        inputs = as_labels(inputs)
        src, inp, dst = [], [], []
        for x, u, y in transitions:
            src.append(states.index(x))
            inp.append(inputs.index(u))
            dst.append(states.index(y))
        init = sorted({states.index(x) for x in initial})
        if controls is not None:
            controls, disturbances = as_labels(controls), as_labels(disturbances)
            n_d = len(disturbances)
            ids = np.arange(len(inputs))
            input_control, input_dist = ids // n_d, ids % n_d
            if len(controls) * n_d != len(inputs):
                raise ValueError("input split does not match input count")
        else:
            controls, disturbances = Labels([BOT]), inputs
            input_control = np.zeros(len(inputs), dtype=np.int64)
            input_dist = np.arange(len(inputs))
        self._setup(states, init, inputs, np.asarray(src, dtype=np.int64),
                    np.asarray(inp, dtype=np.int64), np.asarray(dst, dtype=np.int64),
                    controls, disturbances, input_control, input_dist, coords, name,
                    control_coords, dist_coords)

    @classmethod
    def from_ids(cls, states, initial_ids, inputs, src, inp, dst, *,
                 controls=None, disturbances=None, input_control=None,
                 input_dist=None, coords=None, name="", control_coords=None,
                 dist_coords=None):
        """Build directly from id arrays (used by constructions that already
        work in id space)."""
        self = cls.__new__(cls)
        states, inputs = as_labels(states), as_labels(inputs)
        if controls is None:
            controls, disturbances = Labels([BOT]), inputs
            input_control = np.zeros(len(inputs), dtype=np.int64)
            input_dist = np.arange(len(inputs), dtype=np.int64)
        elif input_control is None:
            n_d = len(disturbances)
            ids = np.arange(len(inputs), dtype=np.int64)
            input_control, input_dist = ids // n_d, ids % n_d
        self._setup(states, sorted(set(int(i) for i in initial_ids)), inputs,
                    np.asarray(src, dtype=np.int64), np.asarray(inp, dtype=np.int64),
                    np.asarray(dst, dtype=np.int64), as_labels(controls),
                    as_labels(disturbances), np.asarray(input_control, dtype=np.int64),
                    np.asarray(input_dist, dtype=np.int64), coords, name,
                    control_coords, dist_coords)
        return self

    def _setup(self, states, init, inputs, src, inp, dst, controls, disturbances,
               input_control, input_dist, coords, name, control_coords=None,
               dist_coords=None):
        self.states = states
        self.inputs = inputs
        self.controls = controls
        self.disturbances = disturbances
        self.input_control = input_control
        self.input_dist = input_dist
        self.initial_ids = np.asarray(init, dtype=np.int64)
        self.name = name
        n_s, n_u = len(states), len(inputs)
        self.n_states, self.n_inputs = n_s, n_u
        if len(dst) and (dst.min() < 0 or dst.max() >= n_s):
            raise ValueError("successor outside the state set")
        key = src * n_u + inp
        order = np.lexsort((dst, key))
        key, dst = key[order], dst[order]
        if len(key):
            dup = np.concatenate([[True], (key[1:] != key[:-1]) | (dst[1:] != dst[:-1])])
            key, dst = key[dup], dst[dup]
        keys, start = np.unique(key, return_index=True)
        self.keys = keys
        self.key_ptr = np.concatenate([start, [len(key)]]).astype(np.int64)
        self.succ = dst
        self.state_ptr = np.searchsorted(keys, np.arange(n_s + 1, dtype=np.int64) * n_u)
        if coords is not None:
            coords = np.asarray(coords, dtype=float)
            if coords.ndim == 1:
                coords = coords[:, None]
            if len(coords) != n_s:
                raise ValueError("coords must have one row per state")
        self.coords = coords
        self.control_coords = _as_rows(control_coords, len(controls), "control_coords")
        self.dist_coords = _as_rows(dist_coords, len(disturbances), "dist_coords")
        self.parts = None

    # -- basic queries ------------------------------------------------------

    @property
    def initial(self):
        return [self.states[i] for i in self.initial_ids]

    @property
    def n_controls(self):
        return len(self.controls)

    @property
    def n_disturbances(self):
        return len(self.disturbances)

    @property
    def n_transitions(self):
        return len(self.succ)

    @property
    def has_split(self):
        return len(self.controls) > 1

    def state_id(self, label) -> int:
        return self.states.index(label)

    def input_id(self, label) -> int:
        return self.inputs.index(label)

    def successors(self, s: int, u: int) -> np.ndarray:
        """Sorted successor ids of ``(s, u)``."""
        k = s * self.n_inputs + u
        i = np.searchsorted(self.keys, k)
        if i < len(self.keys) and self.keys[i] == k:
            return self.succ[self.key_ptr[i]:self.key_ptr[i + 1]]
        return self.succ[:0]

    def post(self, x, u) -> list:
        """Successor labels of labels ``(x, u)``."""
        return [self.states[j] for j in self.successors(self.state_id(x), self.input_id(u))]

    def enabled_inputs(self, s: int) -> np.ndarray:
        """Input ids with a non-empty successor set at state ``s``."""
        a, b = self.state_ptr[s], self.state_ptr[s + 1]
        return self.keys[a:b] - s * self.n_inputs

    def enabled_controls(self, s: int) -> np.ndarray:
        """Control ids ``c`` with ``r(x, (c, d)) != {}`` for every ``d``."""
        used = self.enabled_inputs(s)
        if not len(used):
            return used
        counts = np.bincount(self.input_control[used], minlength=self.n_controls)
        per_control = np.bincount(self.input_control, minlength=self.n_controls)
        return np.nonzero((counts == per_control) & (per_control > 0))[0]

    def inputs_with_control(self, c: int) -> np.ndarray:
        if not hasattr(self, "_by_control"):
            order = np.argsort(self.input_control, kind="stable")
            bounds = np.searchsorted(self.input_control[order], np.arange(self.n_controls + 1))
            self._by_control = (order, bounds)
        order, bounds = self._by_control
        return order[bounds[c]:bounds[c + 1]]

    def state_coords(self, s: int) -> np.ndarray:
        if self.coords is None:
            return np.array([float(s)])
        return self.coords[s]

    def transitions(self) -> Iterator[tuple[int, int, int]]:
        """All transitions as id triples, in key order."""
        for i, k in enumerate(self.keys):
            s, u = divmod(int(k), self.n_inputs)
            for j in self.succ[self.key_ptr[i]:self.key_ptr[i + 1]]:
                yield s, u, int(j)

    def transition_arrays(self):
        """``(src, inp, dst)`` id arrays, one entry per transition."""
        counts = np.diff(self.key_ptr)
        key = np.repeat(self.keys, counts)
        return key // self.n_inputs, key % self.n_inputs, self.succ.copy()

    def restrict(self, keep_ids, *, name=None) -> "System":
        """Sub-system on ``keep_ids``; transitions leaving the set are dropped."""
        keep = np.zeros(self.n_states, dtype=bool)
        keep[np.asarray(list(keep_ids), dtype=np.int64)] = True
        new_id = np.cumsum(keep) - 1
        src, inp, dst = self.transition_arrays()
        m = keep[src] & keep[dst]
        ids = np.nonzero(keep)[0]
        sub = System.from_ids(
            [self.states[i] for i in ids], new_id[self.initial_ids[keep[self.initial_ids]]],
            self.inputs, new_id[src[m]], inp[m], new_id[dst[m]],
            controls=self.controls, disturbances=self.disturbances,
            input_control=self.input_control, input_dist=self.input_dist,
            coords=None if self.coords is None else self.coords[ids],
            name=self.name if name is None else name,
            control_coords=self.control_coords, dist_coords=self.dist_coords)
        if self.parts is not None:
            sub.parts = self.parts[ids]
            sub.part_systems = self.part_systems
        return sub

    def __repr__(self):
        return (f"System({self.name!r}, states={self.n_states}, inputs={self.n_inputs}, "
                f"transitions={self.n_transitions})")


# ---------------------------------------------------------------------------
# generator systems over R^n
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __init__(self, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError(f"invalid box [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self):
        return len(self.lo)

    def contains(self, x, tol=TOL):
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lo - tol) & (x <= self.hi + tol), axis=-1)

    def distance(self, x, norm="2"):
        """Distance from point(s) ``x`` to the box in the given norm."""
        x = np.asarray(x, dtype=float)
        gap = np.maximum(self.lo - x, 0) + np.maximum(x - self.hi, 0)
        return vec_norm(gap, norm)

    def inflate(self, r):
        return Box(self.lo - r, self.hi + r)

    def lattice(self, step) -> np.ndarray:
        """Regular lattice with spacing ``<= step`` that includes the corners."""
        axes = []
        for lo, hi in zip(self.lo, self.hi):
            n = max(int(np.ceil((hi - lo) / step - 1e-9)), 0)
            axes.append(np.linspace(lo, hi, n + 1) if n else np.array([lo]))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def to_json(self):
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}


def vec_norm(v, norm="2"):
    v = np.asarray(v, dtype=float)
    if norm in ("inf", np.inf, "infinity"):
        return np.max(np.abs(v), axis=-1) if v.shape[-1] else np.zeros(v.shape[:-1])
    if norm in ("2", 2):
        return np.sqrt(np.sum(v * v, axis=-1))
    raise ValueError(f"unknown norm {norm!r}")


@dataclass(frozen=True)
class VectorSpace:
    """Real input space: a box on some coordinates, finite levels on others,
    or an explicit finite point list."""

    dim: int
    box: Box | None = None
    levels: dict = field(default_factory=dict)
    points: np.ndarray | None = None

    @classmethod
    def finite(cls, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        return cls(dim=pts.shape[1], points=pts)

    @classmethod
    def real_box(cls, lo, hi, levels=None):
        b = Box(lo, hi)
        return cls(dim=b.dim, box=b, levels=dict(levels or {}))

    @property
    def is_finite(self):
        return self.points is not None

    def sample(self, step=None) -> np.ndarray:
        if self.points is not None:
            return self.points
        cont = [i for i in range(self.dim) if i not in self.levels]
        lo, hi = self.box.lo[cont], self.box.hi[cont]
        if step is None:
            # corners, axis extremes and the origin (clipped)
            base = [sorted({float(l), float(h), float(np.clip(0.0, l, h))}) for l, h in zip(lo, hi)]
        else:
            base = [Box([l], [h]).lattice(step)[:, 0] for l, h in zip(lo, hi)]
        axes = []
        for i in range(self.dim):
            axes.append(np.asarray(self.levels[i], dtype=float) if i in self.levels
                        else np.asarray(base[cont.index(i)], dtype=float))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1) if axes else np.zeros((1, 0))

    def contains(self, u, tol=TOL):
        u = np.asarray(u, dtype=float)
        if self.points is not None:
            return bool(np.any(np.all(np.abs(self.points - u) <= tol, axis=1)))
        ok = True
        for i in range(self.dim):
            if i in self.levels:
                ok &= any(abs(u[i] - v) <= tol for v in self.levels[i])
            else:
                ok &= self.box.lo[i] - tol <= u[i] <= self.box.hi[i] + tol
        return bool(ok)


@dataclass(frozen=True)
class GeneratorSystem:
    """Deterministic system ``x+ = f(x, u^c, u^d)`` on R^n.

    ``post(X, UC, UD)`` takes batches of shape ``(m, n)``, ``(m, p)``,
    ``(m, q)`` and returns ``(m, n)``; a row of NaN marks a blocked input.
    ``domain`` is the region explored by samplers.  ``bot`` is the
    no-disturbance input (zero vectors unless overridden).
    """

    dim: int
    post: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    domain: Box
    initial: Any
    control: VectorSpace
    disturbance: VectorSpace
    bot: tuple | None = None
    name: str = ""
    discrete_dims: tuple = ()

    is_finite = False

    @property
    def bot_input(self):
        if self.bot is not None:
            return self.bot
        return (np.zeros(self.control.dim), np.zeros(self.disturbance.dim))

    def step_batch(self, X, uc, ud):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        m = len(X)
        UC = np.broadcast_to(np.asarray(uc, dtype=float).reshape(-1, self.control.dim)
                             if self.control.dim else np.zeros((1, 0)), (m, self.control.dim))
        UD = np.broadcast_to(np.asarray(ud, dtype=float).reshape(-1, self.disturbance.dim)
                             if self.disturbance.dim else np.zeros((1, 0)), (m, self.disturbance.dim))
        return self.post(X, UC, UD)

    def successor(self, x, uc, ud) -> np.ndarray | None:
        y = self.step_batch(np.asarray(x, dtype=float)[None, :], uc, ud)[0]
        return None if np.any(np.isnan(y)) else y

    def initial_points(self) -> np.ndarray | None:
        if isinstance(self.initial, Box):
            return None
        return np.atleast_2d(np.asarray(self.initial, dtype=float))

    def is_initial(self, x, tol=TOL) -> bool:
        if isinstance(self.initial, Box):
            return bool(self.initial.contains(x, tol))
        pts = self.initial_points()
        return bool(np.any(np.max(np.abs(pts - np.asarray(x)), axis=1) <= tol))

    def sample_initial(self, step) -> np.ndarray:
        if isinstance(self.initial, Box):
            return self.initial.lattice(step)
        return self.initial_points()


# ---------------------------------------------------------------------------
# costs
# ---------------------------------------------------------------------------


class CostFn:
    """Nonnegative cost on (state, input).

    ``label_fn(x, u)`` works on labels (finite systems) or vectors
    (generator systems: ``x`` array, ``u = (uc, ud)``).  ``ids_fn(s, u)``
    optionally evaluates a finite system's cost on id arrays.
    """

    def __init__(self, label_fn=None, ids_fn=None, batch_fn=None, name=""):
        self.label_fn = label_fn
        self.ids_fn = ids_fn
        self.batch_fn = batch_fn
        self.name = name

    def __call__(self, x, u):
        return float(self.label_fn(x, u))

    @classmethod
    def zero(cls):
        return cls(lambda x, u: 0.0, lambda s, u: np.zeros(np.broadcast(s, u).shape),
                   lambda X, UC, UD: np.zeros(len(X)), name="zero")

    @classmethod
    def state_array(cls, system: System, values):
        vals = np.asarray(values, dtype=float)
        return cls(lambda x, u: vals[system.state_id(x)],
                   lambda s, u: vals[np.asarray(s)] + 0 * np.asarray(u), name="state-table")

    @classmethod
    def table(cls, system: System, table: dict, default=0.0):
        def ids(s, u):
            s, u = np.broadcast_arrays(np.asarray(s), np.asarray(u))
            out = np.empty(s.shape)
            for i, (a, b) in enumerate(zip(s.ravel(), u.ravel())):
                out.flat[i] = table.get((system.states[a], system.inputs[b]), default)
            return out
        return cls(lambda x, u: table.get((x, u), default), ids, name="table")

    def on_ids(self, system: System, s, u) -> np.ndarray:
        if self.ids_fn is not None:
            return np.asarray(self.ids_fn(np.asarray(s), np.asarray(u)), dtype=float)
        s, u = np.broadcast_arrays(np.asarray(s), np.asarray(u))
        out = np.empty(s.shape)
        for i, (a, b) in enumerate(zip(s.ravel(), u.ravel())):
            out.flat[i] = self.label_fn(system.states[a], system.inputs[b])
        return out

    def on_batch(self, X, UC, UD) -> np.ndarray:
        if self.batch_fn is not None:
            return np.asarray(self.batch_fn(X, UC, UD), dtype=float)
        return np.array([self.label_fn(x, (uc, ud)) for x, uc, ud in zip(X, UC, UD)])


@dataclass
class CostedSystem:
    system: Any
    I: CostFn
    O: CostFn

    @classmethod
    def zero_costs(cls, system):
        return cls(system, CostFn.zero(), CostFn.zero())

    def key_costs(self):
        """Input and output costs for every enabled ``(state, input)`` key of
        a finite system, aligned with ``system.keys``."""
        sys_ = self.system
        s = sys_.keys // sys_.n_inputs
        u = sys_.keys % sys_.n_inputs
        return self.I.on_ids(sys_, s, u), self.O.on_ids(sys_, s, u)


# ---------------------------------------------------------------------------
# behaviors
# ---------------------------------------------------------------------------


@dataclass
class Behavior:
    """Finite prefix ``(xi, nu)`` with optional per-step costs."""

    states: list
    inputs: list
    I: np.ndarray | None = None
    O: np.ndarray | None = None

    def __post_init__(self):
        if len(self.states) != len(self.inputs):
            raise BehaviorError("state and input sequences differ in length")

    def __len__(self):
        return len(self.states)

    def with_costs(self, cs: CostedSystem) -> "Behavior":
        I = np.array([cs.I(x, u) for x, u in zip(self.states, self.inputs)])
        O = np.array([cs.O(x, u) for x, u in zip(self.states, self.inputs)])
        return Behavior(list(self.states), list(self.inputs), I, O)


def validate_behavior(s, beh: Behavior, tol=1e-7) -> None:
    """Raise :class:`BehaviorError` unless ``beh`` starts in ``X0`` and every
    recorded step is a legal transition.  Only successor consistency between
    recorded states is checked; the last input has no recorded successor."""
    if not len(beh):
        return
    if s.is_finite:
        x0 = s.state_id(beh.states[0])
        if x0 not in set(s.initial_ids.tolist()):
            raise BehaviorError(f"first state {beh.states[0]!r} is not initial")
        for t in range(len(beh) - 1):
            a, u, b = (s.state_id(beh.states[t]), s.input_id(beh.inputs[t]),
                       s.state_id(beh.states[t + 1]))
            if b not in s.successors(a, u):
                raise BehaviorError(f"illegal step at t={t}")
    else:
        if not s.is_initial(beh.states[0], tol):
            raise BehaviorError("first state is not initial")
        for t in range(len(beh) - 1):
            uc, ud = beh.inputs[t]
            y = s.successor(beh.states[t], uc, ud)
            if y is None or np.max(np.abs(y - np.asarray(beh.states[t + 1]))) > tol:
                raise BehaviorError(f"illegal step at t={t}")


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def reachable_ids(s: System, horizon: int | None = None, start=None) -> np.ndarray:
    """Ids reachable from ``start`` (default ``X0``) in at most ``horizon``
    steps; ``None`` computes the fixed point."""
    seen = np.zeros(s.n_states, dtype=bool)
    frontier = np.asarray(s.initial_ids if start is None else list(start), dtype=np.int64)
    seen[frontier] = True
    depth = 0
    while len(frontier) and (horizon is None or depth < horizon):
        lo, hi = s.state_ptr[frontier], s.state_ptr[frontier + 1]
        key_idx = np.concatenate([np.arange(a, b) for a, b in zip(lo, hi)]) if len(lo) else lo
        if len(key_idx):
            succ = np.concatenate([s.succ[s.key_ptr[i]:s.key_ptr[i + 1]] for i in key_idx])
        else:
            succ = np.zeros(0, dtype=np.int64)
        succ = np.unique(succ)
        frontier = succ[~seen[succ]]
        seen[frontier] = True
        depth += 1
    return np.nonzero(seen)[0]


def reachable_states(s, horizon: int | None = None, *, inputs=None):
    """States reachable from ``X0`` within ``horizon`` steps.

    Finite systems return labels in id order (fixed point when ``horizon`` is
    None).  Generator systems need a finite horizon, a finite initial set and
    a finite input sample; they return canonical coordinate tuples.
    """
    if s.is_finite:
        return [s.states[i] for i in reachable_ids(s, horizon)]
    if horizon is None:
        raise ValueError("unbounded horizon on a generator system")
    pts = s.initial_points()
    if pts is None:
        raise ValueError("generator reachability needs a finite initial set")
    if inputs is None:
        inputs = [(uc, ud) for uc in s.control.sample() for ud in s.disturbance.sample()]
    seen = {canon(p) for p in pts}
    frontier = list(seen)
    for _ in range(horizon):
        nxt = []
        X = np.asarray(frontier, dtype=float)
        for uc, ud in inputs:
            Y = s.step_batch(X, uc, ud)
            for y in Y[~np.any(np.isnan(Y), axis=1)]:
                c = canon(y)
                if c not in seen:
                    seen.add(c)
                    nxt.append(c)
        frontier = nxt
        if not frontier:
            break
    return sorted(seen)


def is_nonblocking(s: System):
    """``(True, None)`` when every reachable state has a successor for every
    input, else ``(False, (state, input))`` with the first blocking pair."""
    for x in reachable_ids(s):
        used = s.enabled_inputs(x)
        if len(used) < s.n_inputs:
            missing = np.setdiff1d(np.arange(s.n_inputs), used)[0]
            return False, (s.states[x], s.inputs[int(missing)])
    return True, None


class Policy:
    """Successor-selection policy for :func:`step`."""

    def __init__(self, kind="first", seed=None, callback=None):
        if kind not in ("first", "uniform", "adversarial"):
            raise ValueError(kind)
        if kind == "adversarial" and callback is None:
            raise ValueError("adversarial policy needs a callback")
        self.kind = kind
        self.rng = random.Random(seed)
        self.callback = callback

    def choose(self, options: Sequence):
        if self.kind == "first":
            return options[0]
        if self.kind == "uniform":
            return options[self.rng.randrange(len(options))]
        return self.callback(list(options))


def step(s, x, u, choose: Policy | None = None):
    """One transition from ``x`` under ``u``.  For generator systems ``u`` is
    ``(uc, ud)`` and the successor is unique."""
    choose = choose or Policy()
    if s.is_finite:
        succ = s.post(x, u)
        if not succ:
            raise BlockedExecution(x, u)
        return choose.choose(succ)
    uc, ud = u
    y = s.successor(x, uc, ud)
    if y is None:
        raise BlockedExecution(x, u)
    return y


def simulate(s, x0, inputs: Iterable, choose: Policy | None = None) -> Behavior:
    """Drive ``s`` from ``x0`` with the given input sequence."""
    states, used = [x0], []
    x = x0
    inputs = list(inputs)
    for t, u in enumerate(inputs):
        used.append(u)
        if t == len(inputs) - 1:
            break
        x = step(s, x, u, choose)
        states.append(x)
    return Behavior(states[:len(used)], used)


def product_iter(*seqs):
    return itertools.product(*seqs)
