"""Run configuration: parsing, strict validation and defaults.

A configuration is a YAML (or JSON) mapping with the sections ``kernel``,
``potential``, ``grid``, ``problem``, ``method``, ``output`` and an
optional top-level ``seed``. Unknown keys are rejected with their full key
path. Every default that is filled in is recorded in the resolved spec.
"""
import copy
import math
import re
from dataclasses import dataclass

import yaml

from .errors import ParseError, ValidationError

__all__ = ["METHODS", "RunSpec", "load_document", "parse_config", "resolve"]

METHODS = ("trotter", "volterra", "dyson", "mc", "cn", "compare", "verify-kernel", "sample-paths")

_KERNEL_KEYS = {
    "heat": {"D": 1.0},
    "spectral": {"terms": None, "band": 64.0},
    "lagrangian": {"terms": None, "convention": "auto", "band": 64.0},
    "ou": {"theta": 1.0, "sigma": 1.0},
    "tabulated": {"sample_from": None, "times": None, "perturb": None},
}

_POTENTIAL_KEYS = {
    "zero": {},
    "constant": {"c": None},
    "harmonic": {"omega": 1.0},
    "linear": {"slope": 1.0},
    "table": {"x": None, "v": None},
}

_GRID_DEFAULTS = {"a": -12.0, "b": 12.0, "n": 1025}
_PROBLEM_DEFAULTS = {"x": 0.0, "y": 0.0, "t": 1.0, "initial": None}
_METHOD_DEFAULTS = {
    "name": None,
    "N": 512,
    "scheme": "strang",
    "M": 256,
    "order": 10,
    "time_steps": 256,
    "segments": "auto",
    "split_threshold": 2.0,
    "n_paths": 100000,
    "mc_steps": 256,
    "workers": 1,
    "bins": 512,
    "transport": "auto",
    "residual": False,
    "ck_s": None,
    "deltas": [0.1, 0.01, 0.001],
    "tolerance": 1e-3,
    "mc_sigmas": 3.0,
    "ck_tolerance": 1e-8,
    "normalization_tolerance": 1e-10,
    "budget": 1e-10,
}
_OUTPUT_DEFAULTS = {"path": "pathmeasure_out", "format": "both"}
_TOP = ("kernel", "potential", "grid", "problem", "method", "output", "seed")
DEFAULT_SEED = 20240101


@dataclass
class RunSpec:
    """Fully resolved configuration; ``data`` holds every section with defaults."""

    data: dict

    @property
    def method(self):
        return self.data["method"]["name"]

    def section(self, name):
        return self.data[name]

    def to_dict(self):
        return copy.deepcopy(self.data)


def _mapping(value, key):
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ValidationError(key, f"must be a mapping, got {type(value).__name__}")
    return value


def _strict(section, allowed, key):
    for k in section:
        if k not in allowed:
            raise ValidationError(f"{key}.{k}" if key else str(k), "unknown key")


def _number(value, key, positive=False, nonneg=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(key, f"must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(key, "must be finite")
    if positive and not value > 0:
        raise ValidationError(key, f"must be > 0, got {value}")
    if nonneg and value < 0:
        raise ValidationError(key, f"must be >= 0, got {value}")
    return value


def _integer(value, key, minimum):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(key, f"must be an integer, got {value!r}")
    if value < minimum:
        raise ValidationError(key, f"must be >= {minimum}, got {value}")
    return value


def _terms(value, key):
    if not isinstance(value, list) or not value:
        raise ValidationError(key, "must be a nonempty list of [order, coeff] pairs")
    out = []
    for i, item in enumerate(value):
        if not isinstance(item, (list, tuple)) or len(item) != 2:
            raise ValidationError(f"{key}[{i}]", "must be an [order, coeff] pair")
        out.append([_integer(item[0], f"{key}[{i}][0]", 1), _number(item[1], f"{key}[{i}][1]")])
    return out


def _resolve_kernel(raw, key="kernel", allow_tabulated=True):
    raw = _mapping(raw, key)
    kind = raw.get("kind", "heat")
    if kind not in _KERNEL_KEYS or (kind == "tabulated" and not allow_tabulated):
        raise ValidationError(f"{key}.kind", f"must be one of {sorted(_KERNEL_KEYS)}, got {kind!r}")
    allowed = dict(_KERNEL_KEYS[kind])
    _strict(raw, set(allowed) | {"kind"}, key)
    out = {"kind": kind}
    for k, default in allowed.items():
        out[k] = raw.get(k, default)
    if kind == "heat":
        out["D"] = _number(out["D"], f"{key}.D", positive=True)
    elif kind in ("spectral", "lagrangian"):
        if out["terms"] is None:
            raise ValidationError(f"{key}.terms", "is required")
        out["terms"] = _terms(out["terms"], f"{key}.terms")
        out["band"] = _number(out["band"], f"{key}.band", positive=True)
        if kind == "lagrangian" and out["convention"] not in ("literal", "generator", "auto"):
            raise ValidationError(f"{key}.convention", "must be literal, generator or auto")
    elif kind == "ou":
        out["theta"] = _number(out["theta"], f"{key}.theta", positive=True)
        out["sigma"] = _number(out["sigma"], f"{key}.sigma", positive=True)
    else:
        if out["sample_from"] is None:
            raise ValidationError(f"{key}.sample_from", "is required for tabulated kernels")
        out["sample_from"] = _resolve_kernel(out["sample_from"], f"{key}.sample_from", allow_tabulated=False)
        if out["times"] is not None:
            if not isinstance(out["times"], list) or not out["times"]:
                raise ValidationError(f"{key}.times", "must be a nonempty list")
            out["times"] = [_number(v, f"{key}.times[{i}]", positive=True) for i, v in enumerate(out["times"])]
        if out["perturb"] is not None:
            p = _mapping(out["perturb"], f"{key}.perturb")
            _strict(p, {"t", "x", "y", "amount"}, f"{key}.perturb")
            pt = p.get("t")
            out["perturb"] = {
                "t": None if pt is None else _number(pt, f"{key}.perturb.t", positive=True),
                "x": _number(p.get("x", 0.0), f"{key}.perturb.x"),
                "y": _number(p.get("y", 0.0), f"{key}.perturb.y"),
                "amount": _number(p.get("amount", 0.01), f"{key}.perturb.amount"),
            }
    return out


def _resolve_potential(raw):
    raw = _mapping(raw, "potential")
    name = raw.get("name", "zero")
    if name not in _POTENTIAL_KEYS:
        raise ValidationError("potential.name", f"must be one of {sorted(_POTENTIAL_KEYS)}, got {name!r}")
    allowed = _POTENTIAL_KEYS[name]
    _strict(raw, set(allowed) | {"name"}, "potential")
    out = {"name": name}
    for k, default in allowed.items():
        out[k] = raw.get(k, default)
    if name == "constant":
        if out["c"] is None:
            raise ValidationError("potential.c", "is required")
        out["c"] = _number(out["c"], "potential.c")
    elif name == "harmonic":
        out["omega"] = _number(out["omega"], "potential.omega")
    elif name == "linear":
        out["slope"] = _number(out["slope"], "potential.slope")
    elif name == "table":
        for k in ("x", "v"):
            if not isinstance(out[k], list) or len(out[k]) < 2:
                raise ValidationError(f"potential.{k}", "must be a list of at least 2 numbers")
            out[k] = [_number(v, f"potential.{k}[{i}]") for i, v in enumerate(out[k])]
        if len(out["x"]) != len(out["v"]):
            raise ValidationError("potential.v", "must have the same length as potential.x")
        if any(b <= a for a, b in zip(out["x"], out["x"][1:])):
            raise ValidationError("potential.x", "must be strictly increasing")
    return out


def _resolve_simple(raw, defaults, key):
    raw = _mapping(raw, key)
    _strict(raw, set(defaults), key)
    out = dict(defaults)
    out.update(raw)
    return out


def resolve(doc):
    """Validate a parsed document and fill defaults. Returns a ``RunSpec``."""
    if not isinstance(doc, dict):
        raise ValidationError("<root>", "configuration must be a mapping")
    _strict(doc, set(_TOP), "")
    data = {
        "kernel": _resolve_kernel(doc.get("kernel")),
        "potential": _resolve_potential(doc.get("potential")),
    }
    grid = _resolve_simple(doc.get("grid"), _GRID_DEFAULTS, "grid")
    grid["a"] = _number(grid["a"], "grid.a")
    grid["b"] = _number(grid["b"], "grid.b")
    grid["n"] = _integer(grid["n"], "grid.n", 2)
    if not grid["b"] > grid["a"]:
        raise ValidationError("grid.b", f"must be > grid.a ({grid['a']}), got {grid['b']}")
    data["grid"] = grid

    prob = _resolve_simple(doc.get("problem"), _PROBLEM_DEFAULTS, "problem")
    prob["x"] = _number(prob["x"], "problem.x")
    prob["y"] = _number(prob["y"], "problem.y")
    prob["t"] = _number(prob["t"], "problem.t", positive=True)
    if prob["initial"] is not None and not isinstance(prob["initial"], str):
        raise ValidationError("problem.initial", "must be a path to a field CSV")
    h = (grid["b"] - grid["a"]) / (grid["n"] - 1)
    for k in ("x", "y"):
        j = round((prob[k] - grid["a"]) / h)
        if j < 0 or j >= grid["n"] or abs(grid["a"] + j * h - prob[k]) > 1e-9 * h:
            raise ValidationError(f"problem.{k}", f"must be a grid point, got {prob[k]}")
    data["problem"] = prob

    m = _resolve_simple(doc.get("method"), _METHOD_DEFAULTS, "method")
    if m["name"] not in METHODS:
        raise ValidationError("method.name", f"must be one of {list(METHODS)}, got {m['name']!r}")
    for k in ("N", "M", "time_steps", "n_paths", "mc_steps", "workers"):
        m[k] = _integer(m[k], f"method.{k}", 1)
    m["order"] = _integer(m["order"], "method.order", 0)
    m["bins"] = _integer(m["bins"], "method.bins", 2)
    if m["scheme"] not in ("lie", "strang"):
        raise ValidationError("method.scheme", f"must be lie or strang, got {m['scheme']!r}")
    if m["transport"] not in ("auto", "direct", "spectral"):
        raise ValidationError("method.transport", "must be auto, direct or spectral")
    if m["segments"] != "auto":
        m["segments"] = _integer(m["segments"], "method.segments", 1)
    if not isinstance(m["residual"], bool):
        raise ValidationError("method.residual", "must be true or false")
    for k in ("split_threshold", "tolerance", "mc_sigmas", "ck_tolerance", "normalization_tolerance", "budget"):
        m[k] = _number(m[k], f"method.{k}", positive=True)
    if m["ck_s"] is None:
        m["ck_s"] = prob["t"] / 2.0
    m["ck_s"] = _number(m["ck_s"], "method.ck_s", positive=True)
    if not m["ck_s"] < prob["t"]:
        raise ValidationError("method.ck_s", f"must be < problem.t ({prob['t']})")
    if not isinstance(m["deltas"], list) or not m["deltas"]:
        raise ValidationError("method.deltas", "must be a nonempty list")
    m["deltas"] = [_number(v, f"method.deltas[{i}]", positive=True) for i, v in enumerate(m["deltas"])]
    if any(b >= a for a, b in zip(m["deltas"], m["deltas"][1:])):
        raise ValidationError("method.deltas", "must be strictly decreasing")
    data["method"] = m

    out = _resolve_simple(doc.get("output"), _OUTPUT_DEFAULTS, "output")
    if not isinstance(out["path"], str) or not out["path"]:
        raise ValidationError("output.path", "must be a nonempty string")
    if out["format"] not in ("json", "csv", "both"):
        raise ValidationError("output.format", "must be json, csv or both")
    data["output"] = out

    seed = doc.get("seed", DEFAULT_SEED)
    data["seed"] = _integer(seed, "seed", 0)

    kern = data["kernel"]
    if kern["kind"] == "tabulated" and kern["times"] is None:
        s, t = m["ck_s"], prob["t"]
        kern["times"] = sorted({s, t - s, t})
    if kern["kind"] == "tabulated" and kern["perturb"] is not None and kern["perturb"]["t"] is None:
        kern["perturb"]["t"] = prob["t"]
    return RunSpec(data)


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e-8`` style exponents (YAML 1.2, JSON) as floats."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


def load_document(text):
    """Parse YAML or JSON text into Python objects; raises ``ParseError``."""
    try:
        return yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as err:
        raise ParseError(f"cannot parse configuration: {err}") from err


def parse_config(text):
    """Parse YAML/JSON text into a validated ``RunSpec``.

    Raises
    ------
    ParseError
        Syntax errors.
    ValidationError
        Semantic errors; ``.key`` names the offending key path.
    """
    return resolve(load_document(text))
