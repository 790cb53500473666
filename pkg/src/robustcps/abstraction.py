"""Grid abstractions of contractive switched-affine plants.

The plant is ``x+ = A_m x + B_m + v + w`` where ``m`` ranges over a finite
mode set, ``v`` is an optional additive control from a box and ``w`` is the
disturbance.  The symbolic model lives on the lattice ``x = 2 k eta`` inside
the domain box and has successors ``{x' : |x' - (A x + B + v)| <= kappa}``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import (TOL, Box, CostedSystem, CostFn, GeneratorSystem, ProductLabels,
                   System, VectorSpace, canon, vec_norm)
from .relations import BallProfile


class AbstractionError(ValueError):
    pass


class OutOfDomain(ValueError):
    def __init__(self, x, message=""):
        self.x = x
        super().__init__(message or f"point {x!r} lies outside the inflated domain")


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------


def operator_norm(A, norm="2") -> float:
    """Induced matrix norm (largest singular value for the 2-norm)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if norm in ("inf", np.inf):
        return float(np.abs(A).sum(axis=1).max())
    if norm not in ("2", 2):
        raise ValueError(f"unknown norm {norm!r}")
    return float(np.linalg.norm(A, 2))


def norm2_closed_form_2x2(A) -> float:
    """Largest singular value of a 2x2 matrix from the eigenvalues of A^T A."""
    M = np.asarray(A, dtype=float).T @ np.asarray(A, dtype=float)
    tr, det = M[0, 0] + M[1, 1], M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    return float(np.sqrt(tr / 2 + np.sqrt(max(tr * tr / 4 - det, 0.0))))


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Lattice ``x_a = 2 k_a eta_a`` restricted to ``box``."""

    box: Box
    eta: np.ndarray
    kappa: float

    def __init__(self, box: Box, eta, kappa: float | None = None):
        eta = np.broadcast_to(np.asarray(eta, dtype=float), (box.dim,)).copy()
        if np.any(eta <= 0):
            raise ValueError("grid parameter must be positive")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "kappa", float(eta.max() if kappa is None else kappa))

    @property
    def h(self):
        return 2 * self.eta

    @property
    def kmin(self):
        return np.ceil(self.box.lo / self.h - 1e-9).astype(np.int64)

    @property
    def kmax(self):
        return np.floor(self.box.hi / self.h + 1e-9).astype(np.int64)

    @property
    def counts(self):
        return np.maximum(self.kmax - self.kmin + 1, 0)

    @property
    def dim(self):
        return self.box.dim

    def __len__(self):
        return int(np.prod(self.counts))

    def axis(self, a):
        return (self.kmin[a] + np.arange(self.counts[a])) * self.h[a]

    def points(self) -> np.ndarray:
        return grid_points(self.box, self.eta)

    def flat_index(self, k_rel):
        k_rel = np.asarray(k_rel, dtype=np.int64)
        return np.ravel_multi_index(tuple(k_rel.T), tuple(self.counts))

    def covering_radius(self, norm="2") -> float:
        """Largest distance from a point of the box to the lattice."""
        if len(self) == 0:
            return np.inf
        gaps = []
        for a in range(self.dim):
            ax = self.axis(a)
            g = max(self.h[a] / 2 if len(ax) > 1 else 0.0,
                    ax[0] - self.box.lo[a], self.box.hi[a] - ax[-1])
            gaps.append(g)
        return float(vec_norm(np.array(gaps), norm))

    def quantize(self, x, norm="2", *, kappa: float | None = None) -> np.ndarray:
        """Nearest lattice point; ties go to the smaller index.  Raises
        :class:`OutOfDomain` when ``x`` is outside the box inflated by kappa."""
        x = np.asarray(x, dtype=float)
        k = self.kappa if kappa is None else kappa
        if not np.all(self.box.inflate(k).contains(x)):
            raise OutOfDomain(x)
        q = np.ceil((x / self.h) - 0.5 - 1e-12).astype(np.int64)
        q = np.clip(q, self.kmin, self.kmax)
        return q * self.h

    def index_of(self, x) -> int:
        k = np.rint(np.asarray(x, dtype=float) / self.h).astype(np.int64) - self.kmin
        return int(self.flat_index(k[None, :])[0])


def grid_points(box: Box, eta) -> np.ndarray:
    """All ``x = 2 k eta`` in ``box`` in lexicographic ``k`` order."""
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (box.dim,))
    h = 2 * eta
    kmin = np.ceil(box.lo / h - 1e-9).astype(np.int64)
    kmax = np.floor(box.hi / h + 1e-9).astype(np.int64)
    axes = [np.arange(a, b + 1) * s for a, b, s in zip(kmin, kmax, h)]
    if any(len(a) == 0 for a in axes):
        warnings.warn("grid is empty: eta too coarse for the domain", stacklevel=2)
        return np.zeros((0, box.dim))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


# ---------------------------------------------------------------------------
# plants
# ---------------------------------------------------------------------------


@dataclass
class SwitchedAffinePlant:
    """Modes ``(A_m, B_m)``, an optional additive control box, and the domain."""

    modes: list
    domain: Box
    norm: str = "2"
    control_box: Box | None = None
    initial: object = None
    disturbance_bound: float = 1.0
    name: str = ""
    beta: float = field(init=False)

    def __post_init__(self):
        mats = [(np.atleast_2d(np.asarray(A, dtype=float)), np.atleast_1d(np.asarray(B, dtype=float)))
                for A, B in self.modes]
        n = mats[0][0].shape[0]
        for A, B in mats:
            if A.shape != (n, n) or B.shape != (n,):
                raise ValueError("all modes need square A of equal size and matching B")
        self.modes = mats
        if self.control_box is not None and self.control_box.dim != n:
            raise ValueError("control box dimension must equal the state dimension")
        self.beta = max(operator_norm(A, self.norm) for A, _ in mats)

    @property
    def dim(self):
        return self.modes[0][0].shape[0]

    @property
    def switched(self):
        return len(self.modes) > 1

    @property
    def control_dim(self):
        return int(self.switched) + (self.dim if self.control_box is not None else 0)

    def split_control(self, UC):
        """``(mode index array, additive control array)`` from control vectors.
        Modes are numbered from 1 in control vectors."""
        UC = np.asarray(UC, dtype=float)
        UC = UC.reshape(len(UC), self.control_dim)
        if self.switched:
            m = np.rint(UC[:, 0]).astype(np.int64) - 1
            v = UC[:, 1:]
        else:
            m = np.zeros(len(UC), dtype=np.int64)
            v = UC
        if self.control_box is None:
            v = np.zeros((len(UC), self.dim))
        return m, v

    def centers(self, X, UC):
        X = np.asarray(X, dtype=float)
        m, v = self.split_control(UC)
        As = np.stack([A for A, _ in self.modes])
        Bs = np.stack([B for _, B in self.modes])
        return np.einsum("kij,kj->ki", As[m], X) + Bs[m] + v

    def generator(self, *, name=None) -> GeneratorSystem:
        n = self.dim

        def post(X, UC, UD):
            return self.centers(X, UC) + UD
        if self.switched:
            pts = [[i + 1] + ([0.0] * 0) for i in range(len(self.modes))]
            if self.control_box is None:
                control = VectorSpace.finite(pts)
            else:
                lo = np.concatenate([[1], self.control_box.lo])
                hi = np.concatenate([[len(self.modes)], self.control_box.hi])
                control = VectorSpace.real_box(lo, hi, {0: list(range(1, len(self.modes) + 1))})
        elif self.control_box is not None:
            control = VectorSpace.real_box(self.control_box.lo, self.control_box.hi)
        else:
            control = VectorSpace(dim=0, points=np.zeros((1, 0)))
        b = self.disturbance_bound
        dist = VectorSpace.real_box(-b * np.ones(n), b * np.ones(n))
        init = self.domain if self.initial is None else self.initial
        return GeneratorSystem(n, post, self.domain, init, control, dist,
                               name=name or self.name)

    def to_json(self):
        d = {"modes": [{"A": A.tolist(), "B": B.tolist()} for A, B in self.modes],
             "domain": self.domain.to_json(), "norm": self.norm}
        if self.control_box is not None:
            d["control_box"] = self.control_box.to_json()
        return d


@dataclass
class AbstractionReport:
    n_states: int
    n_controls: int
    n_transitions: int
    beta: float
    covering_radius: float
    truncated: list
    blocked_states: int

    def to_json(self):
        return {"states": self.n_states, "controls": self.n_controls,
                "transitions": self.n_transitions, "beta": self.beta,
                "covering_radius": self.covering_radius,
                "truncated_pairs": len(self.truncated),
                "blocked_states": self.blocked_states}


def control_points(plant: SwitchedAffinePlant, control_eta=None) -> np.ndarray:
    """Abstract control vectors in id order (mode major, then grid)."""
    parts = []
    modes = np.arange(1, len(plant.modes) + 1, dtype=float)[:, None] if plant.switched else np.zeros((1, 0))
    if plant.control_box is not None:
        if control_eta is None:
            raise ValueError("a control box needs a control grid parameter")
        grid = grid_points(plant.control_box, control_eta)
    else:
        grid = np.zeros((1, 0))
    for m in modes:
        parts.append(np.hstack([np.repeat(m[None, :], len(grid), axis=0), grid]))
    return np.vstack(parts)


def abstract_plant(plant: SwitchedAffinePlant, state_grid: GridSpec, *, control_eta=None,
                   kappa: float | None = None, initial=None, costs=None, name="abstraction"):
    """Finite symbolic model of ``plant`` and the ball profile relating it to
    the plant, oriented from the model to the plant.

    Returns ``(CostedSystem, BallProfile, AbstractionReport)``.  ``initial``
    selects the initial grid states (default: all).  ``costs`` is an optional
    ``(I_hat, O_hat)`` pair of :class:`CostFn`; both default to zero.
    """
    kappa = state_grid.kappa if kappa is None else float(kappa)
    if plant.beta >= 1:
        raise AbstractionError(f"plant is not contractive: max operator norm {plant.beta:.6g} >= 1")
    cov = state_grid.covering_radius(plant.norm)
    if cov > kappa + TOL:
        witness = _covering_witness(state_grid, plant.norm, kappa)
        raise AbstractionError(f"covering radius {cov:.6g} exceeds kappa {kappa:.6g}; witness {witness}")
    pts = state_grid.points()
    ctrl = control_points(plant, control_eta)
    n_s, n_c = len(pts), len(ctrl)
    S = np.repeat(np.arange(n_s), n_c)
    C = np.tile(np.arange(n_c), n_s)
    centers = plant.centers(pts[S], ctrl[C])
    ptr, ids = kernels.ball_successors(centers, state_grid.kmin, state_grid.h, state_grid.counts,
                                       kappa, plant.norm in ("inf", np.inf), TOL)
    counts = np.diff(ptr)
    has = counts > 0
    truncated = [(int(s), int(c)) for s, c in zip(S[~has], C[~has])]
    # one disturbance label (the zero vector): input id == control id
    src = np.repeat(S, counts)
    inp = np.repeat(C, counts)
    state_labels = [canon(p) for p in pts]
    ctrl_labels = [canon(c) for c in ctrl]
    zero = canon(np.zeros(plant.dim))
    if initial is None:
        init_ids = np.arange(n_s)
    else:
        init_ids = np.asarray(initial, dtype=np.int64)
    sys_ = System.from_ids(state_labels, init_ids, ProductLabels(ctrl_labels, [zero]), src, inp, ids,
                           controls=ctrl_labels, disturbances=[zero], coords=pts, name=name,
                           control_coords=ctrl, dist_coords=np.zeros((1, plant.dim)))
    blocked = int(np.sum(np.diff(sys_.state_ptr) == 0))
    if truncated:
        warnings.warn(f"{len(truncated)} (state, control) pairs lost every successor to boundary "
                      "truncation and were removed", stacklevel=2)
    I_hat, O_hat = costs if costs is not None else (CostFn.zero(), CostFn.zero())
    cs = CostedSystem(sys_, I_hat, O_hat)
    profile = BallProfile(kappa=kappa, beta=plant.beta, lam=1.0, norm=plant.norm,
                          orientation="alternating", state_dims=plant.dim,
                          control_rule="equal", dist_free=tuple(range(plant.dim)))
    report = AbstractionReport(n_s, n_c, sys_.n_transitions, plant.beta, cov, truncated, blocked)
    return cs, profile, report


def _covering_witness(grid: GridSpec, norm, kappa):
    probe = grid.box.lattice(float(grid.h.min()) / 4)
    for p in probe:
        try:
            q = grid.quantize(p, norm, kappa=np.inf)
        except OutOfDomain:
            continue
        if vec_norm(p - q, norm) > kappa + TOL:
            return p.tolist()
    return grid.box.lo.tolist()
