"""Seeded randomized suites shared by the property tests and the acceptance
report.  Each returns a :class:`SuiteResult`; the caller asserts on it."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from robustcps.compare import (PIodsCertificate, amplify_bound, k_identity, k_linear, k_power,
                               k_sat_linear, k_table, kld_exponential, kld_iterated,
                               kld_linear_decay, kld_zero, max_sum_bound, transform_kld,
                               transport_aiosr)
from robustcps.compose import CompositionError, ExplicitSync, compose, lift_interconnection
from robustcps.core import CostedSystem, CostFn, System, simulate
from robustcps.monitor import IncrementalBound, eval_piods
from robustcps.refine import controller_controls
from robustcps.relations import (ExplicitRelation, check_acasr, check_iosr, check_sr,
                                 eps_trace_bound, match_trace, max_asr, transport_sr)
from robustcps.synthesis import SynthesisTarget, closed_loop, synthesize, verify_closed_loop

N = 1000


@dataclass
class SuiteResult:
    name: str
    cases: int = 0
    skipped: int = 0
    required: int = N
    n_failed: int = 0
    failures: list = field(default_factory=list)

    @property
    def passed(self):
        return self.cases >= self.required and self.n_failed == 0

    def fail(self, what):
        self.n_failed += 1
        if len(self.failures) < 5:
            self.failures.append(what)

    def line(self):
        return f"{self.name}: {self.cases} cases, {self.skipped} skipped, {self.n_failed} failures"


# ---------------------------------------------------------------------------
# comparison functions
# ---------------------------------------------------------------------------


def _random_kld(rng):
    k = int(rng.integers(4))
    if k == 0:
        return kld_exponential(float(rng.uniform(0.05, 0.99)))
    if k == 1:
        return kld_linear_decay(float(rng.uniform(0.05, 2.0)))
    if k == 2:
        return kld_zero()
    a = float(rng.uniform(0.1, 0.95))
    return kld_iterated(lambda c: a * c / (1.0 + 0.1 * c))


def kld_axioms(n=N, seed=0):
    rng = np.random.default_rng(seed)
    res = SuiteResult("KLD axioms")
    tol = 1e-9
    for _ in range(n):
        mu = _random_kld(rng)
        c, dc = rng.uniform(0, 10, 2)
        s, t = (int(v) for v in rng.integers(0, 25, 2))
        v = mu(c, t)
        ok = (abs(mu(c, 0) - c) <= tol and v >= -tol
              and mu(c + dc, t) >= v - tol
              and mu(c, t + 1) <= v + tol
              and abs(mu(mu(c, s), t) - mu(c, s + t)) <= tol * max(1.0, abs(v)))
        res.cases += 1
        if not ok:
            res.fail((mu.tag, c, s, t))
    return res


def _random_gain(rng):
    k = int(rng.integers(5))
    if k == 0:
        return k_identity()
    if k == 1:
        return k_linear(float(rng.uniform(0.1, 5)))
    if k == 2:
        return k_power(float(rng.uniform(0.5, 3)), float(rng.uniform(0.5, 2)))
    if k == 3:
        return k_sat_linear(float(rng.uniform(0.01, 1)))
    xs = np.concatenate([[0.0], np.cumsum(rng.uniform(0.1, 2, 4))])
    ys = np.concatenate([[0.0], np.cumsum(rng.uniform(0.1, 2, 4))])
    return k_table(xs, ys)


def combinators(n=N, seed=1):
    """Gain-splitting inequality, conjugation equality and max-sum inequality."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("combinator identities")
    tol = 1e-9
    for i in range(n):
        mu, mu_b = _random_kld(rng), _random_kld(rng)
        g = _random_gain(rng)
        c, c2 = rng.uniform(0, 5, 2)
        t = int(rng.integers(0, 15))
        kind = i % 3
        if kind == 0:
            gp, sigma = amplify_bound(mu, g, c2)
            lhs, rhs = mu(g(c + c2), t), mu(gp(c), t) + sigma
            ok = lhs <= rhs + tol * max(1.0, abs(rhs))
        elif kind == 1:
            mp = transform_kld(mu, g)
            lhs, rhs = g(mu(c, t)), mp(g(c), t)
            ok = abs(lhs - rhs) <= tol * max(1.0, abs(rhs))
        else:
            m = max_sum_bound(mu, mu_b)
            lhs, rhs = mu(c, t) + mu_b(c, t), m(2 * c, t)
            ok = lhs <= rhs + tol * max(1.0, abs(rhs))
        res.cases += 1
        if not ok:
            res.fail((kind, mu.tag, g.tag, c, c2, t, lhs, rhs))
    return res


# ---------------------------------------------------------------------------
# monitor
# ---------------------------------------------------------------------------


def monitor_equivalence(n=N, seed=2):
    rng = np.random.default_rng(seed)
    res = SuiteResult("monitor incremental vs brute force")
    for _ in range(n):
        mu = _random_kld(rng)
        if mu.tag == "iterated":
            mu = kld_linear_decay(float(rng.uniform(0.05, 2)))
        gain = k_linear(float(rng.uniform(0.1, 4)))
        rho = float(rng.uniform(0, 1))
        T = int(rng.integers(1, 80))
        I = rng.exponential(1.0, T) * (rng.random(T) < 0.7)
        O = rng.uniform(0, 3, T)
        brute = eval_piods(I, O, PIodsCertificate(gain, mu, rho)).rhs
        inc = IncrementalBound(mu, gain, rho)
        online = np.array([inc.push(v) for v in I])
        res.cases += 1
        if np.max(np.abs(online - brute)) > 1e-12:
            res.fail((mu.tag, T, float(np.max(np.abs(online - brute)))))
    return res


# ---------------------------------------------------------------------------
# trace matching
# ---------------------------------------------------------------------------


def eps_recursion(n=N, seed=3):
    """Matched traces of the one-dimensional example: realized distance within
    eps_t, eps_t following its recursion and staying below the closed-form bound."""
    from robustcps.scenarios import _plain, example1
    sc = example1()
    p = _plain(sc.profile)
    g = sc.plant.system
    rng = np.random.default_rng(seed)
    res = SuiteResult("eps recursion on matched traces")
    kappa, beta, lam = p.params()
    for _ in range(n):
        T = int(rng.integers(1, 25))
        x0 = np.array([rng.uniform(-1, 1)])
        dist = rng.uniform(-0.4, 0.4, T) * (rng.random(T) < 0.8)
        beh = simulate(g, x0, [(np.zeros(0), np.array([v])) for v in dist])
        m = match_trace(sc.plant, sc.cs_hat, p, beh)
        rec = np.all(np.abs(m.eps[1:] - (kappa + beta * m.eps[:-1] + lam * m.sd[:-1])) <= 1e-9)
        ok = (rec and np.all(m.dist <= m.eps + 1e-9)
              and np.all(m.eps <= eps_trace_bound(p, 0.8, m.sd)[:-1] + 1e-9))
        res.cases += 1
        if not ok:
            res.fail((float(x0[0]), dist.tolist()))
    return res


# ---------------------------------------------------------------------------
# random finite systems
# ---------------------------------------------------------------------------


def rand_game(rng, name, nmax=5, p_succ=0.4):
    n = int(rng.integers(1, nmax + 1))
    nc, nd = int(rng.integers(1, 3)), int(rng.integers(1, 3))
    st = [f"{name}{i}" for i in range(n)]
    C = [f"c{i}" for i in range(nc)]
    D = [f"d{i}" for i in range(nd)]
    tr = []
    for x in st:
        for c in C:
            if rng.random() < 0.85:
                for d in D:
                    ys = [y for y in st if rng.random() < p_succ] or [st[int(rng.integers(n))]]
                    tr += [(x, (c, d), y) for y in ys]
    init = [st[i] for i in range(n) if rng.random() < 0.5] or [st[0]]
    return System(st, init, None, tr, controls=C, disturbances=D, name=name)


def _pruned(rng, sh, name):
    ren = {x: name + x[1:] for x in sh.states}
    by = {}
    for a, u, b in sh.transitions():
        by.setdefault((a, u), []).append(b)
    tr = []
    for (a, u), bs in by.items():
        keep = [b for b in bs if rng.random() < 0.6] or [bs[0]]
        tr += [(ren[sh.states[a]], sh.inputs[u], ren[sh.states[b]]) for b in keep]
    return System([ren[x] for x in sh.states], [ren[x] for x in sh.initial], None, tr,
                  controls=sh.controls, disturbances=sh.disturbances, name=name)


def composition(n_checked=N, seed=4, max_draws=20 * N):
    """Random component pairs with their maximal alternating relations; the
    lifted interconnection must give an alternating relation between the
    composites whenever the lifting preconditions hold."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("composed relation on random components")
    draws = 0
    while res.cases < n_checked and draws < max_draws:
        draws += 1
        comps = []
        for _ in (0, 1):
            sh = rand_game(rng, "p")
            s = _pruned(rng, sh, "q") if rng.random() < 0.8 else rand_game(rng, "q")
            rel, rep = max_asr(sh, s)
            if rep["empty"] or rep["uncovered_initial"]:
                break
            comps.append((sh, s, rel))
        if len(comps) < 2:
            res.skipped += 1
            continue
        (sh1, s1, r1), (sh2, s2, r2) = comps
        ps = 1.0 if rng.random() < 0.4 else 0.85
        pi = 1.0 if rng.random() < 0.6 else 0.9
        H = [(s1.states[a], s2.states[b], s1.inputs[u], s2.inputs[v])
             for a in range(s1.n_states) for b in range(s2.n_states) if rng.random() < ps
             for u in s1.enabled_inputs(a) for v in s2.enabled_inputs(b) if rng.random() < pi]
        try:
            H_hat, prof, lr = lift_interconnection(ExplicitSync(H), r1, r2, abstract=(sh1, sh2),
                                                   concrete=(s1, s2))
        except CompositionError:
            res.skipped += 1
            continue
        if not (lr.controls_preserved and lr.initial_covered):
            res.skipped += 1
            continue
        cc = CostedSystem.zero_costs(compose(s1, s2, ExplicitSync(H)))
        ch = CostedSystem.zero_costs(compose(sh1, sh2, H_hat))
        v = check_acasr(cc, ch, prof)
        res.cases += 1
        if not v.passed:
            res.fail(v.counterexample)
    return res


def _random_costs(rng, s, scale=2.0):
    I, O = {}, {}
    for a, u, _ in s.transitions():
        key = (s.states[a], s.inputs[u])
        I[key] = 0.25 * int(rng.integers(0, int(4 * scale) + 1)) * (rng.random() < 0.6)
        O[key] = 0.25 * int(rng.integers(0, int(4 * scale) + 1)) * (rng.random() < 0.7)
    return CostFn.table(s, I), CostFn.table(s, O)


def synthesis_soundness(n=N, seed=5):
    """Every synthesized controller's closed loop model-checks and is non-blocking."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("synthesis soundness")
    while res.cases < n:
        s = rand_game(rng, "x", nmax=6)
        cs = CostedSystem(s, *_random_costs(rng, s))
        target = SynthesisTarget(float(rng.choice([0.0, 0.5, 1.0, 2.0])),
                                 float(rng.choice([0.25, 0.5, 1.0])),
                                 float(rng.choice([0.0, 0.5, 1.0])))
        ctl = synthesize(cs, target)
        if not ctl.realizable:
            res.skipped += 1
            continue
        cl = closed_loop(ctl, cs)
        v = verify_closed_loop(cl, target)
        blocking = [k for k in range(cl.system.n_states)
                    if not len(controller_controls(cl.system, k))]
        res.cases += 1
        if not v.passed or blocking:
            res.fail((target, v.counterexample if not v.passed else None, blocking[:1]))
    return res


def nonblocking_runs(runs=N, seed=6):
    """Refined closed loop on the coarse robot grid: in-bound disturbances with
    dropouts never block and every step is counted."""
    from robustcps.refine import refine
    from robustcps.scenarios import robot, robot_runs
    sc = robot(8.0)
    target = SynthesisTarget(2.0, 0.7)
    ctl = synthesize(sc.cs_hat, target)
    rc = refine(ctl, sc.profile, sc.plant, sc.cs_hat, validate=False)
    r = robot_runs(sc, rc, target, runs=runs, seed=seed)
    res = SuiteResult("non-blocking closed-loop runs", cases=r["count"] - r["blocked"])
    if r["blocked"]:
        res.fail(f"{r['blocked']} blocked runs")
    if r["failures"]:
        res.fail(f"{r['failures']} bound violations")
    return res


# ---------------------------------------------------------------------------
# certificate transport over (approximate) input-output simulations
# ---------------------------------------------------------------------------


def _closed_system(rng, nmax=8):
    n = int(rng.integers(1, nmax + 1))
    st = [f"a{i}" for i in range(n)]
    U = [f"u{i}" for i in range(int(rng.integers(1, 3)))]
    tr = []
    for x in st:
        for u in U:
            if rng.random() < 0.8:
                tr += [(x, u, y) for y in ([y for y in st if rng.random() < 0.35]
                                           or [st[int(rng.integers(n))]])]
    if not tr:
        tr = [(st[0], U[0], st[0])]
    init = [x for x in st if rng.random() < 0.4] or [st[0]]
    return System(st, init, U, tr)


def _refined_copy(rng, sh, nmax=8):
    """Concrete system simulated by ``sh``: states split into copies, a
    subset of the transitions kept; returns the system and the relation."""
    copies = {x: [f"{x}c0"] for x in sh.states}
    budget = nmax - sh.n_states
    for x in sh.states:
        if budget > 0 and rng.random() < 0.3:
            copies[x].append(f"{x}c1")
            budget -= 1
    states = [c for x in sh.states for c in copies[x]]
    by = {}
    for a, u, b in sh.transitions():
        by.setdefault((sh.states[a], sh.inputs[u]), []).append(sh.states[b])
    tr = []
    for (x, u), ys in by.items():
        for c in copies[x]:
            if rng.random() < 0.9:
                targets = [t for y in ys for t in copies[y] if rng.random() < 0.7]
                if not targets:
                    y = ys[int(rng.integers(len(ys)))]
                    targets = [copies[y][0]]
                tr += [(c, u, t) for t in targets]
    init = [c for x in sh.initial for c in copies[x] if rng.random() < 0.7] or [copies[sh.initial[0]][0]]
    s = System(states, init, list(sh.inputs), tr)
    rel = ExplicitRelation([(x, c, u, u) for x in sh.states for c in copies[x] for u in sh.inputs])
    return s, rel


def _as_target(cert):
    slope = cert.gamma.slope
    if slope is None or cert.mu.tag != "linear_decay":
        raise ValueError("certificate outside the model-checkable family")
    return SynthesisTarget(float(slope), float(cert.mu.params["eta"]), float(cert.rho))


def transport(n=200, seed=7):
    """Abstract certificate model-checks, the relation checkers pass, hence
    the transported certificate model-checks on the concrete system."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("certificate transport", required=n)
    draws = 0
    while res.cases < n and draws < 50 * n:
        draws += 1
        sh = _closed_system(rng)
        I_hat, O_hat = _random_costs(rng, sh, scale=1.0)
        cs_hat = CostedSystem(sh, I_hat, O_hat)
        g = float(rng.choice([0.5, 1.0, 2.0]))
        eta = float(rng.choice([0.25, 0.5, 1.0]))
        cert = None
        for rho in (0.0, 0.5, 1.0, 2.0):
            t = SynthesisTarget(g, eta, rho)
            if verify_closed_loop(cs_hat, t).passed:
                cert = t.certificate()
                break
        if cert is None:
            res.skipped += 1
            continue
        s, rel = _refined_copy(rng, sh)
        eps = float(rng.choice([0.0, 0.25, 0.5]))
        # concrete costs inside the eps-band around the abstract ones
        I, O = {}, {}
        for a, u, _ in s.transitions():
            x, ul = s.states[a], s.inputs[u]
            xh = x[:-2]
            I[x, ul] = max(0.0, I_hat(xh, ul) + 0.25 * int(rng.integers(-int(4 * eps), 3)))
            O[x, ul] = max(0.0, O_hat(xh, ul) - 0.25 * int(rng.integers(-int(4 * eps), 3)))
        cs = CostedSystem(s, CostFn.table(s, I), CostFn.table(s, O))
        if not (check_sr(s, sh, rel).passed and check_iosr(cs, cs_hat, rel, eps).passed):
            res.skipped += 1
            continue
        moved = transport_sr(cert) if eps == 0 and rng.random() < 0.5 else transport_aiosr(cert, eps)
        v = verify_closed_loop(cs, _as_target(moved))
        res.cases += 1
        if not v.passed:
            res.fail((eps, cert.to_json(), v.counterexample))
    return res


ALL = {"kld": kld_axioms, "combinators": combinators, "monitor": monitor_equivalence,
       "eps": eps_recursion, "composition": composition, "synthesis": synthesis_soundness,
       "nonblocking": nonblocking_runs, "transport": transport}
