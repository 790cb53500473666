"""JSON and CSV readers and writers for systems, relations, targets,
certificates, traces, run logs and margin tables.

JSON output is deterministic (sorted keys, fixed indentation) so reports are
byte-identical across runs with the same inputs.
"""
from __future__ import annotations

import csv
import io
import json
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .core import BOT, CostedSystem, CostFn, System, canon

# ---------------------------------------------------------------------------
# schemas
# ---------------------------------------------------------------------------

SYSTEM_SCHEMA = {
    "type": "object",
    "required": ["states", "initial", "inputs", "transitions"],
    "properties": {
        "name": {"type": "string"},
        "states": {"type": "array", "minItems": 1},
        "initial": {"type": "array"},
        "inputs": {
            "oneOf": [
                {"type": "array", "minItems": 1},
                {"type": "object", "required": ["control", "disturbance"],
                 "properties": {"control": {"type": "array", "minItems": 1},
                                "disturbance": {"type": "array", "minItems": 1}}},
            ]
        },
        "transitions": {"type": "array",
                        "items": {"type": "array", "minItems": 3, "maxItems": 3}},
        "coords": {"type": "array"},
        "control_coords": {"type": "array"},
        "dist_coords": {"type": "array"},
        "costs": {"type": "array",
                  "items": {"type": "object", "required": ["state", "input"],
                            "properties": {"I": {"type": "number", "minimum": 0},
                                           "O": {"type": "number", "minimum": 0}}}},
    },
}

TARGET_SCHEMA = {
    "type": "object",
    "required": ["gamma", "eta"],
    "properties": {"gamma": {"type": "number", "minimum": 0},
                   "eta": {"type": "number", "exclusiveMinimum": 0},
                   "rho": {"type": "number", "minimum": 0}},
}

PROFILE_SCHEMA = {
    "type": "object",
    "required": ["kappa", "beta", "lambda"],
    "properties": {"kappa": {"type": "number", "minimum": 0},
                   "beta": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                   "lambda": {"type": "number", "minimum": 0},
                   "orientation": {"enum": ["plain", "alternating"]}},
}

_TAGGED = {"type": "object", "required": ["tag"],
           "properties": {"tag": {"type": "string"}, "params": {"type": "object"}}}

CERTIFICATE_SCHEMA = {
    "type": "object",
    "required": ["gamma", "mu"],
    "properties": {"gamma": _TAGGED, "mu": _TAGGED, "rho": {"type": "number", "minimum": 0}},
}

RELATION_SCHEMA = {
    "type": "object",
    "required": ["tuples"],
    "properties": {"tuples": {"type": "array",
                              "items": {"type": "array", "minItems": 4, "maxItems": 4}},
                   "pairs": {"type": "array",
                             "items": {"type": "array", "minItems": 2, "maxItems": 2}},
                   "orientation": {"enum": ["plain", "alternating"]}},
}


class FormatError(ValueError):
    """Invalid document; ``path`` is a JSON pointer to the offending value."""

    def __init__(self, message, path="/"):
        super().__init__(f"{path}: {message}")
        self.path = path


def validate(doc, schema):
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as e:
        pointer = "/" + "/".join(str(p) for p in e.absolute_path)
        raise FormatError(e.message, pointer) from None


# ---------------------------------------------------------------------------
# generic JSON
# ---------------------------------------------------------------------------


def to_plain(v):
    """JSON-compatible form of labels, arrays and numpy scalars."""
    if isinstance(v, np.ndarray):
        return [to_plain(a) for a in v.tolist()]
    if isinstance(v, (tuple, list)):
        return [to_plain(a) for a in v]
    if isinstance(v, dict):
        return {str(k): to_plain(a) for k, a in v.items()}
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        v = float(v)
    if isinstance(v, float) and not np.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def dumps(doc) -> str:
    return json.dumps(to_plain(doc), sort_keys=True, indent=2) + "\n"


def write_json(path, doc):
    Path(path).write_text(dumps(doc))


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"invalid JSON ({e.msg} at line {e.lineno})") from None


def _label(v):
    """Labels read from JSON: lists become tuples."""
    return canon(v)


# ---------------------------------------------------------------------------
# systems
# ---------------------------------------------------------------------------


def system_from_json(doc) -> CostedSystem:
    validate(doc, SYSTEM_SCHEMA)
    states = [_label(s) for s in doc["states"]]
    inputs = doc["inputs"]
    kw = {}
    if isinstance(inputs, dict):
        kw["controls"] = [_label(c) for c in inputs["control"]]
        kw["disturbances"] = [_label(d) for d in inputs["disturbance"]]
        labels = None
    else:
        labels = [_label(u) for u in inputs]
    for key in ("coords", "control_coords", "dist_coords"):
        if key in doc:
            kw[key] = np.asarray(doc[key], dtype=float)
    trans = []
    for i, (x, u, y) in enumerate(doc["transitions"]):
        trans.append((_label(x), _label(u), _label(y)))
    try:
        s = System(states, [_label(x) for x in doc["initial"]], labels, trans,
                   name=doc.get("name", ""), **kw)
    except (KeyError, ValueError) as e:
        raise FormatError(str(e), "/transitions") from None
    costs = doc.get("costs")
    if not costs:
        return CostedSystem.zero_costs(s)
    I_tab, O_tab = {}, {}
    for c in costs:
        key = (_label(c["state"]), _label(c["input"]))
        I_tab[key] = float(c.get("I", 0.0))
        O_tab[key] = float(c.get("O", 0.0))
    return CostedSystem(s, CostFn.table(s, I_tab), CostFn.table(s, O_tab))


def system_to_json(cs, *, costs=True) -> dict:
    s = cs.system if isinstance(cs, CostedSystem) else cs
    doc = {"name": s.name, "states": list(s.states), "initial": list(s.initial)}
    if s.has_split:
        doc["inputs"] = {"control": list(s.controls), "disturbance": list(s.disturbances)}
    else:
        doc["inputs"] = list(s.inputs)
    doc["transitions"] = [[s.states[a], s.inputs[u], s.states[b]] for a, u, b in s.transitions()]
    if s.coords is not None:
        doc["coords"] = s.coords
    if s.control_coords is not None:
        doc["control_coords"] = s.control_coords
    if s.dist_coords is not None:
        doc["dist_coords"] = s.dist_coords
    if costs and isinstance(cs, CostedSystem):
        I, O = cs.key_costs()
        rows = []
        for k, i, o in zip(s.keys, I, O):
            if i or o:
                a, u = divmod(int(k), s.n_inputs)
                rows.append({"state": s.states[a], "input": s.inputs[u], "I": float(i), "O": float(o)})
        if rows:
            doc["costs"] = rows
    return to_plain(doc)


def load_system(path) -> CostedSystem:
    return system_from_json(read_json(path))


def save_system(path, cs, **kw):
    write_json(path, system_to_json(cs, **kw))


def load_data_system(name: str) -> CostedSystem:
    """One of the embedded system files (``reference``, ``dropout``)."""
    text = resources.files("robustcps").joinpath("data", f"{name}.json").read_text()
    return system_from_json(json.loads(text))


# ---------------------------------------------------------------------------
# relations, targets, profiles
# ---------------------------------------------------------------------------


def relation_from_json(doc):
    from .relations import ExplicitRelation
    validate(doc, RELATION_SCHEMA)
    return ExplicitRelation([tuple(_label(a) for a in t) for t in doc["tuples"]],
                            doc.get("orientation", "plain"),
                            [tuple(_label(a) for a in p) for p in doc.get("pairs", [])])


def target_from_json(doc):
    from .synthesis import SynthesisTarget
    validate(doc, TARGET_SCHEMA)
    return SynthesisTarget.from_json(doc)


def profile_from_json(doc):
    from .relations import BallProfile
    validate(doc, PROFILE_SCHEMA)
    return BallProfile.from_json(doc)


def certificate_from_json(doc):
    from .compare import PIodsCertificate
    validate(doc, CERTIFICATE_SCHEMA)
    try:
        return PIodsCertificate.from_json(doc)
    except (KeyError, ValueError) as e:
        raise FormatError(str(e), "/") from None


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _cell(v):
    v = to_plain(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return json.dumps(v)
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(r[h]) if isinstance(r, dict) else _cell(v) for h, v in
                    (zip(header, [r[h] for h in header]) if isinstance(r, dict) else zip(header, r))])
    return buf.getvalue()


def write_trace_csv(path, behavior):
    """Trace CSV: ``t, state, input, I, O``."""
    rows = []
    for t, (x, u) in enumerate(zip(behavior.states, behavior.inputs)):
        rows.append([t, x, u, behavior.I[t] if behavior.I is not None else 0.0,
                     behavior.O[t] if behavior.O is not None else 0.0])
    Path(path).write_text(csv_text(["t", "state", "input", "I", "O"], rows))


def read_trace_csv(path):
    """Returns ``(I, O)`` arrays from a trace or run-log CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise FormatError("empty trace")
    try:
        I = np.array([float(r["I"]) for r in rows])
        O = np.array([float(r["O"]) for r in rows])
    except KeyError as e:
        raise FormatError(f"missing column {e}") from None
    return I, O


def read_csv_columns(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise FormatError("empty table")
    out = {}
    for k in rows[0]:
        try:
            out[k] = np.array([float(r[k]) for r in rows])
        except ValueError:
            out[k] = [r[k] for r in rows]
    return out


def run_log_rows(records, bound=None):
    """Flattened run-log rows with columns ``t, x…, xh…, uc…, ud…, eps, I, O, bound``."""
    if not records:
        return [], []
    r0 = records[0]
    def flat(name, v):
        v = v if isinstance(v, list) else [v]
        return [(f"{name}{i + 1}", a) for i, a in enumerate(v)]
    header = ["t"] + [k for k, _ in flat("x", r0["x"])] + [k for k, _ in flat("xh", r0["xh"])] \
        + [k for k, _ in flat("uc", r0["uc"])] + [k for k, _ in flat("ud", r0["ud"])] \
        + ["eps", "sd", "I", "O", "bound"]
    rows = []
    for i, r in enumerate(records):
        row = {"t": r["t"]}
        for name in ("x", "xh", "uc", "ud"):
            row.update(flat(name, r[name]))
        row.update(eps=r["eps"], sd=r["sd"], I=r["I"], O=r["O"],
                   bound=float("nan") if bound is None else float(bound[i]))
        rows.append(row)
    return header, rows


def write_run_log(path, records, bound=None):
    header, rows = run_log_rows(records, bound)
    Path(path).write_text(csv_text(header, rows))


__all__ = ["BOT", "CERTIFICATE_SCHEMA", "FormatError", "validate", "dumps", "write_json", "read_json", "to_plain",
           "system_from_json", "system_to_json", "load_system", "save_system",
           "load_data_system", "relation_from_json", "target_from_json", "profile_from_json",
           "certificate_from_json", "csv_text", "write_trace_csv", "read_trace_csv",
           "read_csv_columns", "run_log_rows", "write_run_log"]
