"""Offline and online evaluation of the pIODS inequality on traces

    O_t <= max_{t' <= t} mu(gamma(I_t'), t - t') + rho

plus per-step margins and empirical fitting of rho and a scalar gain.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .compare import KFunction, KldFunction, PIodsCertificate, k_linear, k_zero

TOL = 1e-9
_KIND = {"exponential": (0, "beta_prime"), "linear_decay": (1, "eta"), "zero": (2, None)}


def _kind(mu: KldFunction):
    if mu.tag in _KIND:
        k, name = _KIND[mu.tag]
        return k, (mu.params[name] if name else 0.0)
    return None


def rhs_values(g, mu: KldFunction, *, fast: bool = False) -> np.ndarray:
    """``max_{t' <= t} mu(g_t', t - t')`` for every ``t`` (``g`` already gained).

    The reference path is the O(T^2) brute force; ``fast`` selects the
    running-max recursion for the exponential, linear-decay and zero tags.
    """
    g = np.asarray(g, dtype=float)
    kind = _kind(mu)
    if fast and kind is not None:
        inc = IncrementalBound(mu, k_linear(1.0), 0.0)
        return np.array([inc.push(v) for v in g])
    if kind is not None:
        return np.asarray(kernels.rhs_bruteforce(g, kind[0], float(kind[1])))
    out = np.zeros(len(g))
    for t in range(len(g)):
        lags = t - np.arange(t + 1)
        out[t] = max(float(mu(g[s], int(lag))) for s, lag in zip(range(t + 1), lags))
    return out


class IncrementalBound:
    """Running state ``b_t = max{decay(b_{t-1}), gamma(I_t)}``; ``push``
    returns ``b_t + rho``.  Unsupported KLD tags fall back to the brute
    force over the stored history (``note`` says so)."""

    def __init__(self, mu: KldFunction, gamma: KFunction, rho: float = 0.0):
        self.mu, self.gamma, self.rho = mu, gamma, float(rho)
        self.kind = _kind(mu)
        self.note = None if self.kind is not None else f"no recursion for {mu.tag}; brute force"
        self.b = 0.0
        self.history: list[float] = []
        self.t = 0

    def push(self, I_t) -> float:
        g = float(self.gamma(float(I_t)))
        if self.kind is None:
            self.history.append(g)
            self.b = float(rhs_values(self.history, self.mu)[-1])
        else:
            kind, p = self.kind
            if self.t == 0:
                decayed = 0.0
            elif kind == 0:
                decayed = p * self.b
            elif kind == 1:
                decayed = max(self.b - p, 0.0)
            else:
                decayed = 0.0
            self.b = max(decayed, g)
        self.t += 1
        return self.b + self.rho


def incremental_bound(mu: KldFunction, gamma: KFunction, rho: float = 0.0) -> IncrementalBound:
    return IncrementalBound(mu, gamma, rho)


@dataclass
class Evaluation:
    rhs: np.ndarray
    margins: np.ndarray
    passed: bool
    min_margin: float
    argmin_t: int
    tol: float = TOL
    fitted: dict = field(default_factory=dict)

    def __bool__(self):
        return self.passed

    def summary(self) -> dict:
        return {"verdict": "pass" if self.passed else "fail", "min_margin": self.min_margin,
                "argmin_t": self.argmin_t, "steps": int(len(self.margins)),
                "fitted": self.fitted}

    def margin_rows(self, I, O):
        return [[t, float(I[t]), float(O[t]), float(self.rhs[t]), float(self.margins[t])]
                for t in range(len(self.margins))]


def eval_piods(I, O, cert: PIodsCertificate, *, tol: float = TOL, fast: bool = False) -> Evaluation:
    """Per-step margins ``rhs_t - O_t`` of ``cert`` on one trace."""
    I = np.asarray(I, dtype=float)
    O = np.asarray(O, dtype=float)
    if I.shape != O.shape:
        raise ValueError("I and O must have equal length")
    g = np.asarray(cert.gamma(I), dtype=float) if len(I) else I
    rhs = rhs_values(g, cert.mu, fast=fast) + cert.rho
    return _evaluation(rhs, O, tol)


def eval_bound(bound, O, *, tol: float = TOL) -> Evaluation:
    """Margins of an explicitly computed right-hand side."""
    return _evaluation(np.asarray(bound, dtype=float), np.asarray(O, dtype=float), tol)


def _evaluation(rhs, O, tol):
    margins = rhs - O
    if len(margins):
        i = int(np.argmin(margins))
        mm = float(margins[i])
    else:
        i, mm = -1, float("inf")
    return Evaluation(rhs, margins, bool(mm >= -tol), mm, i, tol)


def _traces(traces):
    traces = list(traces)
    if not traces:
        raise ValueError("empty trace set")
    return [(np.asarray(I, dtype=float), np.asarray(O, dtype=float)) for I, O in traces]


def fit_rho(traces, gamma: KFunction, mu: KldFunction) -> float:
    """Smallest rho making every trace satisfy the inequality:
    the maximum over all steps of ``O_t`` minus the max-term (floored at 0)."""
    best = 0.0
    for I, O in _traces(traces):
        if len(I):
            best = max(best, float(np.max(O - rhs_values(gamma(I), mu))))
    return best


def fit_gamma(traces, mu: KldFunction, rho: float = 0.0, *, tol: float = 1e-6,
              hi: float | None = None) -> float:
    """Smallest scalar gain ``g`` (``gamma(c) = g c``) satisfying every trace,
    by bisection (the right-hand side is nondecreasing in ``g``).  Returns
    ``inf`` when no gain works (an output cost at zero input cost above rho)."""
    tr = _traces(traces)

    def ok(g):
        gain = k_linear(g) if g > 0 else k_zero()
        return all(eval_piods(I, O, PIodsCertificate(gain, mu, rho)).passed for I, O in tr)
    if ok(0.0):
        return 0.0
    hi = 1.0 if hi is None else float(hi)
    while not ok(hi):
        hi *= 2
        if hi > 1e12:
            return float("inf")
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


MARGIN_HEADER = ["t", "I", "O", "rhs", "margin"]
