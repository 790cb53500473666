"""Command-line front end.

Exit codes: 0 pass, 1 failed verdict, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import formats
from .abstraction import GridSpec, SwitchedAffinePlant, abstract_plant
from .compare import KFunction, k_identity, k_zero
from .compose import ExplicitSync, FullSync, ProfileSync, ZeroControlWhen, compose
from .core import BlockedExecution, Box, CostedSystem, CostFn, Policy, simulate
from .formats import FormatError

PASS, FAIL, USAGE = 0, 1, 2

PLANT_SCHEMA = {
    "type": "object",
    "required": ["modes", "domain"],
    "properties": {
        "modes": {"type": "array", "minItems": 1,
                  "items": {"type": "object", "required": ["A", "B"]}},
        "domain": {"type": "object", "required": ["lo", "hi"]},
        "norm": {"enum": ["2", "inf"]},
        "state_eta": {"type": "number", "exclusiveMinimum": 0},
        "kappa": {"type": "number", "exclusiveMinimum": 0},
        "control_box": {"type": "object", "required": ["lo", "hi"]},
        "control_eta": {"type": "number", "exclusiveMinimum": 0},
        "disturbance_bound": {"type": "number", "minimum": 0},
        "beta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
    },
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _stable(doc):
    """Drop wall-clock fields so reports are byte-identical across runs."""
    if isinstance(doc, dict):
        return {k: _stable(v) for k, v in doc.items() if not k.endswith("_s")}
    if isinstance(doc, list):
        return [_stable(v) for v in doc]
    return doc


def _emit(args, name, doc):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    formats.write_json(out / name, _stable(doc))
    return out / name


def _load_config(path_or_doc, base: Path | None = None):
    if isinstance(path_or_doc, dict):
        return path_or_doc
    return formats.read_json(path_or_doc)


def _resolve(cfg_path, rel):
    p = Path(rel)
    return p if p.is_absolute() else Path(cfg_path).parent / p


def _gain(doc, default):
    if doc is None:
        return default
    if isinstance(doc, str):
        return {"zero": k_zero(), "identity": k_identity()}[doc]
    return KFunction.from_json(doc)


def build_plant(doc, scale: float = 1.0):
    """Plant, abstraction, profile and report from a plant config; grid
    parameters are multiplied by ``scale``."""
    formats.validate(doc, PLANT_SCHEMA)
    modes = [(m["A"], m["B"]) for m in doc["modes"]]
    domain = Box(doc["domain"]["lo"], doc["domain"]["hi"])
    cbox = Box(doc["control_box"]["lo"], doc["control_box"]["hi"]) if "control_box" in doc else None
    eta = float(doc.get("state_eta", doc.get("kappa", 0.1))) * scale
    kappa = float(doc["kappa"]) * scale if "kappa" in doc else None
    plant = SwitchedAffinePlant(modes, domain, norm=doc.get("norm", "2"), control_box=cbox,
                                disturbance_bound=float(doc.get("disturbance_bound", 1.0)))
    ceta = doc.get("control_eta")
    cs_hat, prof, rep = abstract_plant(plant, GridSpec(domain, eta, kappa=kappa),
                                       control_eta=None if ceta is None else float(ceta) * scale)
    if "beta" in doc:
        prof = prof.with_params(beta=float(doc["beta"]))
    return plant, cs_hat, prof, rep


def _override(prof, doc):
    kw = {k: float(doc[k]) for k in ("kappa", "beta") if k in doc}
    if "lambda" in doc:
        kw["lam"] = float(doc["lambda"])
    if "orientation" in doc:
        kw["orientation"] = doc["orientation"]
    return prof.with_params(**kw) if kw else prof


def _scenario(name, scale):
    from . import scenarios
    builders = {"e1": (scenarios.example1, 1.0), "boost": (scenarios.boost, 20.0),
                "robot": (scenarios.robot, 4.0)}
    if name not in builders:
        raise ConfigError(f"/example: unknown example {name!r}")
    fn, default = builders[name]
    return fn(scale or default)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_abstract(args):
    doc = _load_config(args.config)
    plant, cs_hat, prof, rep = build_plant(doc, args.scale or 1.0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    formats.save_system(out / "abstraction.json", cs_hat)
    formats.write_json(out / "profile.json", prof.to_json())
    _emit(args, "abstract_report.json", {"abstraction": rep.to_json(), "profile": prof.to_json()})
    print(f"abstraction: {rep.n_states} states, {rep.n_transitions} transitions, beta={rep.beta:.6g}")
    return PASS


def _sync_from(doc):
    if doc is None or doc.get("rule") == "full":
        return FullSync()
    if doc.get("rule") == "dropout-zero-control":
        return ZeroControlWhen(doc.get("trigger", "a1"))
    if "pairs" in doc:
        return ExplicitSync([tuple(formats._label(a) for a in t) for t in doc["pairs"]])
    if "profile" in doc:
        return ProfileSync(formats.profile_from_json(doc["profile"]), doc.get("abstract", "left"))
    raise ConfigError("/sync: unknown synchronizer")


def cmd_compose(args):
    cfg = _load_config(args.config)
    for key in ("left", "right"):
        if key not in cfg:
            raise FormatError(f"missing {key!r}", "/")
    left = formats.load_system(_resolve(args.config, cfg["left"]))
    right = formats.load_system(_resolve(args.config, cfg["right"]))
    sync = _sync_from(cfg.get("sync"))
    comp = compose(left.system, right.system, sync)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    formats.save_system(out / "composite.json", comp, costs=False)
    _emit(args, "compose_report.json", {"states": comp.n_states, "transitions": comp.n_transitions,
                                        "sync": sync.to_json()})
    print(f"composite: {comp.n_states} states, {comp.n_transitions} transitions")
    return PASS


def _relation_inputs(args, cfg):
    """(concrete, abstract, profile, gains, sampling) from an example, a plant
    config or finite system files."""
    from .relations import CostGains, Sampling
    sampling = Sampling(**cfg["sampling"]) if "sampling" in cfg else None
    if "example" in cfg:
        sc = _scenario(cfg["example"], args.scale)
        if sc.name == "robot" and sampling is None:
            from .scenarios import ROBOT_SAMPLING
            sampling = ROBOT_SAMPLING
        return sc.plant, sc.cs_hat, _override(sc.profile, cfg.get("profile", {})), sc.gains, sampling
    gd = cfg.get("gains")
    gains = None if gd is None else CostGains(_gain(gd.get("gamma_I"), k_zero()),
                                              _gain(gd.get("gamma_O"), k_identity()))
    if "plant" in cfg:
        doc = cfg["plant"] if isinstance(cfg["plant"], dict) else formats.read_json(
            _resolve(args.config, cfg["plant"]))
        plant, cs_hat, prof, _ = build_plant(doc, args.scale or 1.0)
        cs = CostedSystem(plant.generator(), CostFn.zero(), CostFn.zero())
        return cs, cs_hat, _override(prof, cfg.get("profile", {})), gains, sampling
    cs = formats.load_system(_resolve(args.config, cfg["concrete"]))
    cs_hat = formats.load_system(_resolve(args.config, cfg["abstract"]))
    if "relation" in cfg:
        prof = formats.relation_from_json(formats.read_json(_resolve(args.config, cfg["relation"])))
    else:
        prof = formats.profile_from_json(cfg["profile"])
    return cs, cs_hat, prof, gains, sampling


def cmd_check_relation(args):
    from .relations import ExplicitRelation, check_acasr, check_acsr, check_sr
    cfg = _load_config(args.config)
    cs, cs_hat, prof, gains, sampling = _relation_inputs(args, cfg)
    kind = cfg.get("kind")
    if kind == "sr":
        if not isinstance(prof, ExplicitRelation):
            raise ConfigError("/kind: 'sr' needs an explicit relation")
        v = check_sr(cs.system, cs_hat.system, prof)
    elif prof.orientation == "alternating":
        v = check_acasr(cs, cs_hat, prof, gains, sampling=sampling, threads=args.threads)
    else:
        if isinstance(prof, ExplicitRelation):
            prof = prof.as_profile()
        v = check_acsr(cs, cs_hat, prof, gains, sampling=sampling, threads=args.threads)
    _emit(args, "relation_verdict.json", v.to_json())
    print(f"relation check: {'pass' if v.passed else 'FAIL'} ({v.mode}, {v.checked} obligations)")
    if not v.passed:
        print(f"counterexample: {json.dumps(formats.to_plain(v.counterexample))}")
    return PASS if v.passed else FAIL


def cmd_synthesize(args):
    from .synthesis import closed_loop, synthesize
    cfg = _load_config(args.config)
    cs_hat = formats.load_system(_resolve(args.config, cfg["system"]))
    target = formats.target_from_json(cfg["target"])
    res = synthesize(cs_hat, target)
    _emit(args, "synthesis_report.json", res.report())
    if not res.realizable:
        print(f"UNREALIZABLE: {len(res.losing_initial)} losing initial states")
        return FAIL
    formats.save_system(Path(args.out) / "controller.json", res.system, costs=False)
    formats.write_json(Path(args.out) / "controller_relation.json", res.relation.to_json())
    # the closed loop with the abstract costs, input to `verify`
    formats.save_system(Path(args.out) / "closed_loop.json", closed_loop(res, cs_hat))
    print(f"controller: {res.system.n_states} states")
    return PASS


def cmd_verify(args):
    from .synthesis import verify_closed_loop
    cfg = _load_config(args.config)
    closed = formats.load_system(_resolve(args.config, cfg["system"]))
    target = formats.target_from_json(cfg["target"])
    v = verify_closed_loop(closed, target)
    _emit(args, "verify_report.json", v.to_json())
    print(f"closed-loop verification: {'pass' if v.passed else 'FAIL'}")
    return PASS if v.passed else FAIL


def _oracle(doc, dims, seed):
    from .refine import DropoutDisturbance, JointDisturbance, RandomDisturbance, ScriptedDisturbance
    if doc is None:
        return ScriptedDisturbance([np.zeros(dims)])
    if "script" in doc:
        return ScriptedDisturbance([np.asarray(v, dtype=float) for v in doc["script"]])
    parts = []
    if "random" in doc:
        r = doc["random"]
        # a dropout flag occupies the last disturbance coordinate
        rdims = dims - 1 if "dropout" in doc else dims
        parts.append(RandomDisturbance(r["bound"], rdims, norm=r.get("norm", "inf"),
                                       seed=r.get("seed", seed)))
    if "dropout" in doc:
        d = doc["dropout"]
        parts.append(DropoutDisturbance(d.get("at"), horizon=d.get("horizon", 20),
                                        seed=d.get("seed", seed)))
    if not parts:
        raise ConfigError("/disturbance: expected script, random or dropout")
    return parts[0] if len(parts) == 1 else JointDisturbance(*parts)


def cmd_refine(args):
    """Synthesize for a target on an example's abstraction, refine, run once
    and check the transported bound on the run."""
    from .monitor import eval_bound
    from .refine import refine, run
    from .relations import transport_acsr
    from .synthesis import synthesize
    cfg = _load_config(args.config)
    if "example" not in cfg:
        raise FormatError("missing 'example'", "/")
    sc = _scenario(cfg["example"], args.scale)
    prof = _override(sc.profile, cfg.get("profile", {}))
    target = formats.target_from_json(cfg.get("target", {"gamma": 0, "eta": 1}))
    ctl = synthesize(sc.cs_hat, target)
    if not ctl.realizable:
        _emit(args, "refine_report.json", {"synthesis": ctl.report()})
        print("UNREALIZABLE abstract target; nothing to refine")
        return FAIL
    rc = refine(ctl, prof, sc.plant, sc.cs_hat, validate=bool(cfg.get("validate", False)),
                threads=args.threads)
    oracle = _oracle(cfg.get("disturbance"), sc.plant.system.disturbance.dim, args.seed)
    if "x0" not in cfg:
        raise FormatError("missing 'x0'", "/")
    x0 = np.asarray(cfg["x0"], dtype=float)
    horizon = int(cfg.get("horizon", 50))
    try:
        log = run(rc, x0, oracle, horizon, seed=args.seed)
    except BlockedExecution as e:
        _emit(args, "refine_report.json", {"blocked": str(e)})
        print(f"blocked execution: {e}")
        return FAIL
    beta_prime = float(cfg.get("beta_prime", sc.constants.get("beta_prime", (prof.beta + 1) / 2)))
    ev = transport_acsr(target.certificate(), prof, sc.gains, beta_prime)
    I = log.column("I")
    gamma_seq = np.array([float(np.max(np.abs(r["ud"][:2]))) if len(r["ud"]) else 0.0
                          for r in log.records]) if sc.name == "robot" else I
    first = I if sc.name == "robot" else np.zeros_like(I)
    bound = ev(first, gamma_seq)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    formats.write_run_log(out / "run_log.csv", log.records, bound)
    res = eval_bound(bound, log.column("O"))
    _emit(args, "refine_report.json", {"validation": rc.validation, "monitor": res.summary(),
                                       "horizon": horizon, "target": target.to_json()})
    print(f"refined run: {horizon} steps, bound {'pass' if res.passed else 'FAIL'} "
          f"(min margin {res.min_margin:.6g})")
    return PASS if res.passed else FAIL


def cmd_simulate(args):
    cfg = _load_config(args.config)
    cs = formats.load_system(_resolve(args.config, cfg["system"]))
    s = cs.system
    inputs = [formats._label(u) for u in cfg["inputs"]]
    x0 = formats._label(cfg.get("x0", s.initial[0]))
    beh = simulate(s, x0, inputs, Policy(cfg.get("policy", "first"), seed=args.seed))
    beh = beh.with_costs(cs)
    Path(args.out).mkdir(parents=True, exist_ok=True)
    formats.write_trace_csv(Path(args.out) / "trace.csv", beh)
    print(f"simulated {len(beh)} steps")
    return PASS


def cmd_monitor(args):
    from .monitor import MARGIN_HEADER, eval_bound, eval_piods, fit_rho
    cols = formats.read_csv_columns(args.trace)
    I, O = np.asarray(cols["I"]), np.asarray(cols["O"])
    if args.cert:
        cert = formats.certificate_from_json(formats.read_json(args.cert))
        res = eval_piods(I, O, cert)
        res.fitted = {"rho": fit_rho([(I, O)], cert.gamma, cert.mu)}
    elif "bound" in cols:
        res = eval_bound(cols["bound"], O)
    else:
        raise ConfigError("monitor needs --cert or a trace with a bound column")
    Path(args.out).mkdir(parents=True, exist_ok=True)
    (Path(args.out) / "margins.csv").write_text(formats.csv_text(MARGIN_HEADER, res.margin_rows(I, O)))
    _emit(args, "monitor_summary.json", res.summary())
    print(f"monitor: {'pass' if res.passed else 'FAIL'} (min margin {res.min_margin:.6g} "
          f"at t={res.argmin_t})")
    return PASS if res.passed else FAIL


def cmd_example(args):
    from . import scenarios
    name = args.name
    scale = args.scale
    if name == "e1":
        rep = scenarios.run_e1(scale or 1.0, runs=args.runs or 1000, seed=args.seed,
                               threads=args.threads)
    elif name == "boost":
        rep = scenarios.run_boost(scale or 20.0, runs=args.runs or 100, seed=args.seed,
                                  threads=args.threads)
    else:
        rep = scenarios.run_robot(scale or 4.0, runs=args.runs or 1000, seed=args.seed,
                                  threads=args.threads)
    _emit(args, f"example_{name}.json", rep)
    _print_example(name, rep)
    return PASS if rep.get("passed") else FAIL


def _print_example(name, rep):
    print(f"example {name} (scale {rep['scale']}):")
    if "inequality" in rep:
        print(f"  {rep['inequality']}")
    if "relation" in rep:
        v = rep["relation"]
        print(f"  relation check: {'pass' if v['passed'] else 'FAIL'} ({v['mode']}, "
              f"{v['checked']} obligations)")
    reference = rep.get("reference", {})
    for key, val in sorted(rep.get("constants", {}).items()):
        ref = reference.get(key)
        tail = "" if ref is None else f" (reference {ref:.6g})"
        print(f"  {key} = {val:.6g}{tail}")
    if name == "boost":
        n = rep["norms"]
        print(f"  |A1|_2 = {n['A1']:.6f}, |A2|_2 = {n['A2']:.6f}, declared beta = {n['beta']}")
        print(f"  abstraction: {rep['abstraction']['states']} states")
        syn = rep["synthesis"]
        print(f"  invariance controller realizable: {syn['realizable']}")
        if "analysis" in syn:
            a = syn["analysis"]
            lo1, hi1 = a["duty_ratio_x1"]
            lo2, hi2 = a["duty_ratio_x2"]
            print(f"  mode-1 duty ratio holding x1: [{lo1:.3f}, {hi1:.3f}], "
                  f"holding x2: [{lo2:.3f}, {hi2:.3f}]")
    if name == "robot":
        for row in rep.get("frontier", []):
            print(f"  frontier: eta = {row['eta']}, smallest realizable gamma = {row['gamma_min']}")
        if "gamma_O_kappa_delta" in reference:
            print(f"  at kappa = {reference['kappa']}: gamma_O(kappa_delta) = "
                  f"{reference['gamma_O_kappa_delta']:.6g}, printed constant {reference['printed_constant']}")
    if rep.get("runs"):
        r = rep["runs"]
        print(f"  runs: {r['count']}, failures: {r['failures']}, blocked: {r['blocked']}, "
              f"min margin: {r['min_margin']:.6g}")
    print(f"  verdict: {'pass' if rep.get('passed') else 'FAIL'}")


def cmd_plot(args):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    matplotlib.rcParams["svg.hashsalt"] = "robustcps"
    cols = formats.read_csv_columns(args.csv)
    t = np.asarray(cols["t"])
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(t, cols["O"], label="output cost")
    if "rhs" in cols:
        ax.plot(t, cols["rhs"], "--", label="bound")
    elif "bound" in cols:
        ax.plot(t, cols["bound"], "--", label="bound")
    ax.set_xlabel("t")
    ax.legend()
    fig.tight_layout()
    Path(args.out).mkdir(parents=True, exist_ok=True)
    target = Path(args.out) / (Path(args.csv).stem + ".svg")
    fig.savefig(target, format="svg", metadata={"Date": None})
    plt.close(fig)
    print(f"wrote {target}")
    return PASS


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _globals(parser, suppress=False):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=d(0), help="RNG seed (default 0)")
    parser.add_argument("--threads", type=int, default=d(1), help="worker threads (default 1)")
    parser.add_argument("--out", default=d("."), help="output directory (default .)")
    parser.add_argument("--scale", type=float, default=d(None),
                        help="grid scale factor for examples and plant configs")


def build_parser():
    # global flags are accepted before or after the subcommand; the
    # subcommand copies suppress their defaults so they do not override
    common = argparse.ArgumentParser(add_help=False)
    _globals(common, suppress=True)
    p = argparse.ArgumentParser(prog="robustcps",
                                description="contractive abstractions, synthesis and refinement")
    _globals(p)
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in (("abstract", cmd_abstract), ("compose", cmd_compose),
                     ("check-relation", cmd_check_relation), ("synthesize", cmd_synthesize),
                     ("verify", cmd_verify), ("refine", cmd_refine), ("simulate", cmd_simulate)):
        sp = sub.add_parser(name, parents=[common])
        sp.add_argument("config")
        sp.set_defaults(fn=fn)
    sp = sub.add_parser("monitor", parents=[common])
    sp.add_argument("trace")
    sp.add_argument("--cert")
    sp.set_defaults(fn=cmd_monitor)
    sp = sub.add_parser("example", parents=[common])
    sp.add_argument("name", choices=["e1", "boost", "robot"])
    sp.add_argument("--runs", type=int, default=None)
    sp.set_defaults(fn=cmd_example)
    sp = sub.add_parser("plot", parents=[common])
    sp.add_argument("csv")
    sp.set_defaults(fn=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (FormatError, ConfigError, KeyError, FileNotFoundError) as e:
        msg = f"/: missing required key {e}" if isinstance(e, KeyError) else str(e)
        print(f"error: {msg}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
