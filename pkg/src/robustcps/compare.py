"""Comparison functions.

``KFunction`` models class-K gains c -> gamma(c) and ``KldFunction`` models
KL functions with the identity/semigroup laws mu(c, 0) = c and
mu(c, s + t) = mu(mu(c, s), t).  Both carry a ``tag`` and JSON-able
``params`` so certificates round-trip through files.

Time arguments of KLD functions are naturals.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np

#: grid used by the axiom checks: c in {0, 0.1, ..., 10}, s, t in {0..20}
C_GRID = np.round(np.arange(0, 101) * 0.1, 12)
T_GRID = np.arange(0, 21)
AXIOM_TOL = 1e-9
DEFAULT_HORIZON = 10_000


class HorizonError(ValueError):
    pass


# ---------------------------------------------------------------------------
# class K
# ---------------------------------------------------------------------------


class KFunction:
    """Evaluable class-K function with an optional exact inverse."""

    def __init__(self, fn: Callable, tag: str, params: dict, inverse: Callable | None = None):
        self._fn = fn
        self.tag = tag
        self.params = params
        self.inverse = inverse

    def __call__(self, c):
        out = self._fn(np.asarray(c, dtype=float))
        return float(out) if np.ndim(out) == 0 else out

    def __repr__(self):
        return f"KFunction({self.tag}, {self.params})"

    def to_json(self) -> dict:
        params = dict(self.params)
        if self.tag == "amplified":
            params = {"inner": self.params["inner"].to_json()}
        if self.tag == "max":
            params = {"parts": [p.to_json() for p in self.params["parts"]]}
        return {"tag": self.tag, "params": params}

    @staticmethod
    def from_json(d: dict) -> "KFunction":
        tag, p = d["tag"], d.get("params", {})
        if tag == "linear":
            return k_linear(p["slope"])
        if tag == "power":
            return k_power(p["exponent"], p.get("scale", 1.0))
        if tag == "table":
            return k_table(p["x"], p["y"])
        if tag == "zero":
            return k_zero()
        if tag == "sat_linear":
            return k_sat_linear(p["kappa"])
        if tag == "amplified":
            return amplified(KFunction.from_json(p["inner"]))
        if tag == "max":
            return k_max(*[KFunction.from_json(q) for q in p["parts"]])
        raise ValueError(f"unknown K tag {tag!r}")

    @property
    def slope(self) -> float | None:
        """Scalar gain when the function is linear, else None."""
        if self.tag == "linear":
            return float(self.params["slope"])
        if self.tag == "zero":
            return 0.0
        if self.tag == "amplified":
            inner = self.params["inner"].slope
            return None if inner is None else 4.0 * inner
        return None


def k_linear(slope: float) -> KFunction:
    if slope <= 0:
        raise ValueError("a linear K function needs a positive slope")
    a = float(slope)
    return KFunction(lambda c: a * c, "linear", {"slope": a}, lambda y: np.asarray(y, dtype=float) / a)


def k_identity() -> KFunction:
    return k_linear(1.0)


def k_power(exponent: float, scale: float = 1.0) -> KFunction:
    if exponent <= 0 or scale <= 0:
        raise ValueError("power K function needs positive exponent and scale")
    p, a = float(exponent), float(scale)
    return KFunction(lambda c: a * np.power(c, p), "power", {"exponent": p, "scale": a},
                     lambda y: np.power(np.asarray(y, dtype=float) / a, 1.0 / p))


def k_zero() -> KFunction:
    """The zero gain.  Not strictly increasing; accepted where a gain may vanish."""
    return KFunction(lambda c: np.zeros_like(c, dtype=float), "zero", {})


def k_sat_linear(kappa: float) -> KFunction:
    """c -> c + min(c, kappa)."""
    k = float(kappa)

    def inv(y):
        y = np.asarray(y, dtype=float)
        return np.where(y <= 2 * k, y / 2, y - k)
    return KFunction(lambda c: c + np.minimum(c, k), "sat_linear", {"kappa": k}, inv)


def k_table(xs, ys) -> KFunction:
    """Monotone piecewise-linear interpolant through ``(xs, ys)``; linear
    extrapolation with the last slope beyond the table."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x[0] != 0 or y[0] != 0:
        raise ValueError("table must start at (0, 0)")
    if np.any(np.diff(x) <= 0) or np.any(np.diff(y) <= 0):
        raise ValueError("table must be strictly increasing")
    s_end = (y[-1] - y[-2]) / (x[-1] - x[-2])

    def f(c):
        c = np.asarray(c, dtype=float)
        return np.where(c <= x[-1], np.interp(c, x, y), y[-1] + s_end * (c - x[-1]))

    def inv(v):
        v = np.asarray(v, dtype=float)
        return np.where(v <= y[-1], np.interp(v, y, x), x[-1] + (v - y[-1]) / s_end)
    return KFunction(f, "table", {"x": x.tolist(), "y": y.tolist()}, inv)


def amplified(gamma: KFunction) -> KFunction:
    """c -> 2 gamma(2c)."""
    inv = None
    if gamma.inverse is not None:
        inv = lambda y: gamma.inverse(np.asarray(y, dtype=float) / 2) / 2  # noqa: E731
    return KFunction(lambda c: 2 * gamma(2 * np.asarray(c)), "amplified", {"inner": gamma}, inv)


def k_max(*parts: KFunction) -> KFunction:
    return KFunction(lambda c: np.max([np.asarray(p(c), dtype=float) for p in parts], axis=0),
                     "max", {"parts": list(parts)})


def check_k(gamma: KFunction, grid=C_GRID, tol=AXIOM_TOL) -> list[str]:
    """Violations of gamma(0) = 0 and strict increase on ``grid``."""
    out = []
    g0 = gamma(0.0)
    if abs(g0) > tol:
        out.append(f"gamma(0) = {g0}")
    if gamma.tag != "zero":
        v = np.asarray(gamma(np.asarray(grid)), dtype=float)
        bad = np.nonzero(np.diff(v) <= 0)[0]
        if len(bad):
            out.append(f"not strictly increasing at c = {grid[bad[0]]}")
    return out


def is_subadditive(gamma: KFunction, grid=C_GRID, tol=AXIOM_TOL) -> tuple[bool, tuple | None]:
    """Check gamma(a + b) <= gamma(a) + gamma(b) on ``grid`` x ``grid``."""
    g = np.asarray(grid, dtype=float)
    a, b = np.meshgrid(g, g, indexing="ij")
    lhs = gamma(a + b)
    rhs = gamma(a) + gamma(b)
    bad = np.argwhere(lhs > rhs + tol)
    if len(bad):
        i, j = bad[0]
        return False, (float(g[i]), float(g[j]))
    return True, None


# ---------------------------------------------------------------------------
# class KLD
# ---------------------------------------------------------------------------


class KldFunction:
    """Evaluable KLD function (c, t) -> mu(c, t) with natural ``t``."""

    def __init__(self, fn: Callable, tag: str, params: dict):
        self._fn = fn
        self.tag = tag
        self.params = params

    def __call__(self, c, t):
        t_arr = np.asarray(t)
        if np.any(t_arr < 0):
            raise ValueError("time argument must be a natural number")
        out = self._fn(np.asarray(c, dtype=float), t_arr)
        return float(out) if np.ndim(out) == 0 else out

    def __repr__(self):
        return f"KldFunction({self.tag}, {self.params})"

    def to_json(self) -> dict:
        if self.tag in ("exponential", "linear_decay", "zero"):
            return {"tag": self.tag, "params": dict(self.params)}
        raise ValueError(f"{self.tag} KLD functions have no closed-form serialization")

    @staticmethod
    def from_json(d: dict) -> "KldFunction":
        tag, p = d["tag"], d.get("params", {})
        if tag == "exponential":
            return kld_exponential(p["beta_prime"])
        if tag == "linear_decay":
            return kld_linear_decay(p["eta"])
        if tag == "zero":
            return kld_zero()
        raise ValueError(f"unknown KLD tag {tag!r}")


def kld_exponential(beta_prime: float) -> KldFunction:
    b = float(beta_prime)
    if not 0 < b < 1:
        raise ValueError(f"beta' must lie in (0, 1), got {b}")
    return KldFunction(lambda c, t: np.power(b, t) * c, "exponential", {"beta_prime": b})


def kld_linear_decay(eta: float) -> KldFunction:
    e = float(eta)
    if e <= 0:
        raise ValueError(f"eta must be positive, got {e}")
    return KldFunction(lambda c, t: np.maximum(c - e * t, 0.0), "linear_decay", {"eta": e})


def kld_zero() -> KldFunction:
    """mu(c, 0) = c and mu(c, t) = 0 for t >= 1."""
    return KldFunction(lambda c, t: np.where(t == 0, c, 0.0 * c), "zero", {})


class _Iterated:
    """mu(c, 0) = c, mu(c, t + 1) = g(mu(c, t)), memoized per rounded c."""

    def __init__(self, g: Callable[[float], float], horizon: int):
        self.g = g
        self.horizon = horizon
        self._memo: dict[float, list[float]] = {}
        self._lock = threading.Lock()

    def value(self, c: float, t: int) -> float:
        if t > self.horizon:
            raise HorizonError(f"t = {t} exceeds the iteration horizon {self.horizon}")
        key = round(c, 12)
        with self._lock:
            seq = self._memo.setdefault(key, [float(c)])
            while len(seq) <= t:
                seq.append(float(self.g(seq[-1])))
            return seq[t]

    def __call__(self, c, t):
        c_b, t_b = np.broadcast_arrays(np.asarray(c, dtype=float), np.asarray(t))
        out = np.empty(c_b.shape)
        for idx in np.ndindex(c_b.shape):
            out[idx] = self.value(float(c_b[idx]), int(t_b[idx]))
        return out if out.ndim else out[()]


def kld_iterated(g: Callable[[float], float], *, horizon: int = DEFAULT_HORIZON,
                 description: str = "") -> KldFunction:
    it = _Iterated(g, horizon)
    return KldFunction(it, "iterated", {"g": description, "horizon": horizon})


def check_kld(mu: KldFunction, cs=C_GRID, ts=T_GRID, tol=AXIOM_TOL, *,
              decreasing=True) -> list[str]:
    """Violations of the KLD axioms on the grid.

    ``decreasing=False`` skips the nonincreasing-in-time check, for
    iterated constructions whose step map can exceed the identity.
    """
    out = []
    cs = np.asarray(cs, dtype=float)
    ts = np.asarray(ts)
    C, T = np.meshgrid(cs, ts, indexing="ij")
    V = np.asarray(mu(C, T), dtype=float)
    if np.any(np.abs(V[:, 0] - cs) > tol):
        out.append("mu(c, 0) != c")
    if np.any(V < -tol):
        out.append("negative value")
    if np.any(np.diff(V, axis=0) < -tol):
        out.append("not nondecreasing in c")
    if decreasing and np.any(np.diff(V, axis=1) > tol):
        out.append("not nonincreasing in t")
    for si, s in enumerate(ts):
        inner = V[:, si]
        lhs = np.asarray(mu(inner[:, None], ts[None, :]), dtype=float)
        full = ts[None, :] + s
        rhs = np.asarray(mu(cs[:, None], full), dtype=float)
        if np.any(np.abs(lhs - rhs) > tol * np.maximum(1, np.abs(rhs))):
            out.append(f"semigroup fails at s = {s}")
            break
    return out


# ---------------------------------------------------------------------------
# combinators
# ---------------------------------------------------------------------------


def amplify_bound(mu: KldFunction, gamma: KFunction, c_prime: float):
    """Split a gain evaluated at a sum: returns ``(gamma', sigma)`` with
    gamma'(c) = 2 gamma(2c) and sigma = mu(gamma'(c'), 0), so that
    mu(gamma(c + c'), t) <= mu(gamma'(c), t) + sigma."""
    gp = amplified(gamma)
    return gp, float(mu(gp(float(c_prime)), 0))


def transform_kld(mu: KldFunction, gamma: KFunction, *, horizon: int = DEFAULT_HORIZON) -> KldFunction:
    """KLD function mu' with gamma(mu(c, t)) = mu'(gamma(c), t)."""
    if gamma.inverse is None:
        raise ValueError("transform_kld needs a gain with an inverse")

    def g(c):
        return float(gamma(mu(float(gamma.inverse(c)), 1)))
    return kld_iterated(g, horizon=horizon, description=f"conj({mu.tag},{gamma.tag})")


def max_sum_bound(mu_a: KldFunction, mu_b: KldFunction, *, horizon: int = DEFAULT_HORIZON) -> KldFunction:
    """KLD function mu with
    max_{t'<=t} mu_a(c, t') + max_{t'<=t} mu_b(c, t') <= max_{t'<=t} mu(2c, t')."""

    def g(c):
        return max(2 * float(mu_a(c, 1)), 2 * float(mu_b(c, 1)))
    return kld_iterated(g, horizon=horizon, description=f"maxsum({mu_a.tag},{mu_b.tag})")


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PIodsCertificate:
    gamma: KFunction
    mu: KldFunction
    rho: float = 0.0

    def __post_init__(self):
        if self.rho < 0 or math.isnan(self.rho):
            raise ValueError("rho must be nonnegative")

    def to_json(self) -> dict:
        return {"gamma": self.gamma.to_json(), "mu": self.mu.to_json(), "rho": self.rho}

    @staticmethod
    def from_json(d: dict) -> "PIodsCertificate":
        return PIodsCertificate(KFunction.from_json(d["gamma"]), KldFunction.from_json(d["mu"]),
                                float(d.get("rho", 0.0)))


def transport_aiosr(cert: PIodsCertificate, epsilon: float) -> PIodsCertificate:
    """Certificate carried over an epsilon-approximate input-output
    simulation: gamma'(c) = 2 gamma(2c), rho' = mu(gamma'(eps), 0) + eps + rho."""
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    gp = amplified(cert.gamma)
    if epsilon == 0:
        return PIodsCertificate(gp, cert.mu, cert.rho)
    rho = float(cert.mu(gp(float(epsilon)), 0)) + float(epsilon) + cert.rho
    return PIodsCertificate(gp, cert.mu, rho)
