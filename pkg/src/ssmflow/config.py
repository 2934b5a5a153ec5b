"""Strict JSON run configuration."""

import json
import math
from dataclasses import dataclass, field
from typing import Optional

from .errors import ConfigError

TASKS = ("laminar", "spectrum", "tw", "continue", "ssm", "reduce", "lift")
MODELS = ("newtonian", "oldroydb")
STYLES = ("graph", "normal-form", "mixed")

# allowed keys per block, with a type tag used by the validator
SCHEMA = {
    "": {"model": "str", "grid": "dict", "params": "dict", "task": "str", "output_dir": "str",
         "spectrum": "dict", "ssm": "dict", "tw": "dict", "continuation": "dict", "lift": "dict"},
    "grid": {"k": "num", "n1": "int", "n2": "int"},
    "params": {"re": "num", "wi": "num", "beta_visc": "num", "eps": "num", "xhat2": "num"},
    "spectrum": {"method": "str", "shift": "cnum", "count": "int", "beta_split": "num"},
    "ssm": {"beta_split": "num", "order": "int", "style": "str", "res_tol": "num", "cross_tol": "num",
            "err_tol": "num"},
    "tw": {"seed": "str", "state": "str", "tol": "num", "max_iter": "int"},
    "continuation": {"param": "str", "range": "pair", "step": "num", "direction": "num", "max_points": "int",
                     "weight": "num", "step_max": "num", "tol": "num", "max_iter": "int"},
    "lift": {"t_end": "num", "samples": "int", "rho0": "num", "nx": "int"},
}

NEEDS = {
    "laminar": (),
    "spectrum": (),
    "tw": ("tw",),
    "continue": ("tw", "continuation"),
    "ssm": ("ssm",),
    "reduce": ("ssm",),
    "lift": ("ssm",),
}


@dataclass
class RunConfig:
    model: str
    grid: dict
    params: dict
    task: str
    output_dir: Optional[str] = None
    spectrum: dict = field(default_factory=dict)
    ssm: dict = field(default_factory=dict)
    tw: dict = field(default_factory=dict)
    continuation: dict = field(default_factory=dict)
    lift: dict = field(default_factory=dict)
    source: Optional[str] = None

    def to_dict(self):
        out = {"model": self.model, "grid": dict(self.grid), "params": dict(self.params), "task": self.task}
        if self.output_dir is not None:
            out["output_dir"] = self.output_dir
        for name in ("spectrum", "ssm", "tw", "continuation", "lift"):
            block = getattr(self, name)
            if block:
                out[name] = dict(block)
        return out


def _no_duplicates(pairs):
    seen = {}
    for k, v in pairs:
        if k in seen:
            raise ValueError(f"duplicate key {k!r}")
        seen[k] = v
    return seen


def _type_ok(tag, v):
    num = isinstance(v, (int, float)) and not isinstance(v, bool)
    if tag == "num":
        return num
    if tag == "int":
        return isinstance(v, int) and not isinstance(v, bool)
    if tag == "str":
        return isinstance(v, str)
    if tag == "dict":
        return isinstance(v, dict)
    if tag == "bool":
        return isinstance(v, bool)
    if tag == "pair":
        return isinstance(v, list) and len(v) == 2 and all(_type_ok("num", x) for x in v)
    if tag == "cnum":
        return num or (isinstance(v, list) and len(v) == 2 and all(_type_ok("num", x) for x in v))
    return False


def _check_keys(block, name, errors):
    allowed = SCHEMA[name]
    where = f"{name}." if name else ""
    for key, val in block.items():
        if key not in allowed:
            errors.append(f"unknown key '{where}{key}'")
            continue
        if not _type_ok(allowed[key], val):
            errors.append(f"'{where}{key}' has the wrong type ({type(val).__name__})")
        elif allowed[key] in ("num", "pair") and not all(math.isfinite(x) for x in (val if isinstance(val, list) else [val])):
            errors.append(f"'{where}{key}' must be finite")


def _num(block, key):
    v = block.get(key)
    return v if isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) else None


def validate(doc):
    """Return a :class:`RunConfig` or raise :class:`ConfigError` listing every violation."""
    errors = []
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    _check_keys(doc, "", errors)
    for name in SCHEMA:
        if name and isinstance(doc.get(name), dict):
            _check_keys(doc[name], name, errors)
    for key in ("model", "grid", "params", "task"):
        if key not in doc:
            errors.append(f"missing required field '{key}'")
    model = doc.get("model")
    if isinstance(model, str) and model not in MODELS:
        errors.append(f"model must be one of {', '.join(MODELS)}")
    task = doc.get("task")
    if isinstance(task, str) and task not in TASKS:
        errors.append(f"task must be one of {', '.join(TASKS)}")

    grid = doc.get("grid") if isinstance(doc.get("grid"), dict) else {}
    for key in ("k", "n1", "n2"):
        if "grid" in doc and key not in grid:
            errors.append(f"missing required field 'grid.{key}'")
    if _num(grid, "k") is not None and grid["k"] <= 0:
        errors.append("k must be > 0")
    if isinstance(grid.get("n1"), int) and grid["n1"] < 1:
        errors.append("n1 must be ≥ 1")
    if isinstance(grid.get("n2"), int) and grid["n2"] < 4:
        errors.append("n2 must be ≥ 4")

    params = doc.get("params") if isinstance(doc.get("params"), dict) else {}
    if "params" in doc and "re" not in params:
        errors.append("missing required field 'params.re'")
    if _num(params, "re") is not None and params["re"] < 0:
        errors.append("re must be ≥ 0")
    if model == "oldroydb":
        for key in ("wi", "beta_visc"):
            if key not in params:
                errors.append(f"missing required field 'params.{key}' for model oldroydb")
        if _num(params, "wi") is not None and params["wi"] <= 0:
            errors.append("wi must be > 0")
        b = _num(params, "beta_visc")
        if b is not None and not 0 <= b <= 1:
            errors.append("beta_visc must lie in [0, 1]")
        if _num(params, "eps") is not None and params["eps"] < 0:
            errors.append("eps must be ≥ 0")
    elif model == "newtonian":
        for key in ("wi", "beta_visc", "eps"):
            if key in params:
                errors.append(f"params.{key} only applies to model oldroydb")
        if _num(params, "re") == 0:
            errors.append("re must be > 0 for model newtonian")
    xh = _num(params, "xhat2")
    if xh is not None and not -1 < xh < 1:
        errors.append("xhat2 must lie in (-1, 1)")

    if task in NEEDS:
        for block in NEEDS[task]:
            if not isinstance(doc.get(block), dict):
                errors.append(f"task {task} requires the '{block}' block")
    tw_seed = doc["tw"].get("seed", "ssm") if isinstance(doc.get("tw"), dict) else "ssm"
    if task in ("ssm", "reduce", "lift") or (task in ("tw", "continue") and tw_seed == "ssm"):
        ssm = doc.get("ssm") if isinstance(doc.get("ssm"), dict) else None
        if ssm is None:
            if task in ("tw", "continue"):
                errors.append(f"task {task} with an ssm seed requires the 'ssm' block")
        elif "beta_split" not in ssm:
            errors.append(f"task {task} requires 'ssm.beta_split'")
    ssm = doc.get("ssm") if isinstance(doc.get("ssm"), dict) else {}
    if isinstance(ssm.get("order"), int) and ssm["order"] < 1:
        errors.append("ssm.order must be ≥ 1")
    if isinstance(ssm.get("style"), str) and ssm["style"] not in STYLES:
        errors.append(f"ssm.style must be one of {', '.join(STYLES)}")
    for key in ("res_tol", "cross_tol", "err_tol"):
        if _num(ssm, key) is not None and ssm[key] <= 0:
            errors.append(f"ssm.{key} must be > 0")

    spec = doc.get("spectrum") if isinstance(doc.get("spectrum"), dict) else {}
    if isinstance(spec.get("method"), str) and spec["method"] not in ("auto", "blocks", "dense", "arnoldi"):
        errors.append("spectrum.method must be one of auto, blocks, dense, arnoldi")
    if isinstance(spec.get("count"), int) and spec["count"] < 1:
        errors.append("spectrum.count must be ≥ 1")

    tw = doc.get("tw") if isinstance(doc.get("tw"), dict) else {}
    seed = tw.get("seed", "ssm")
    if isinstance(seed, str) and seed not in ("ssm", "state"):
        errors.append("tw.seed must be 'ssm' or 'state'")
    if seed == "state" and "state" not in tw:
        errors.append("tw.seed 'state' requires 'tw.state'")

    cont = doc.get("continuation") if isinstance(doc.get("continuation"), dict) else {}
    if task == "continue":
        for key in ("range", "step"):
            if key not in cont:
                errors.append(f"task continue requires 'continuation.{key}'")
    par = cont.get("param", "re")
    if isinstance(par, str) and par not in ("re", "wi"):
        errors.append("continuation.param must be 're' or 'wi'")
    if par == "wi" and model == "newtonian":
        errors.append("continuation.param 'wi' needs model oldroydb")
    rng = cont.get("range")
    if _type_ok("pair", rng) and not rng[0] < rng[1]:
        errors.append("continuation.range must be increasing")
    for key in ("step", "weight", "step_max", "tol"):
        if _num(cont, key) is not None and cont[key] <= 0:
            errors.append(f"continuation.{key} must be > 0")
    for name, block in (("tw", tw), ("continuation", cont)):
        if isinstance(block.get("max_iter"), int) and block["max_iter"] < 1:
            errors.append(f"{name}.max_iter must be ≥ 1")
    if _num(cont, "direction") is not None and cont["direction"] == 0:
        errors.append("continuation.direction must be nonzero")

    lift = doc.get("lift") if isinstance(doc.get("lift"), dict) else {}
    if _num(lift, "rho0") is not None and lift["rho0"] <= 0:
        errors.append("lift.rho0 must be > 0")
    if _num(lift, "t_end") is not None and lift["t_end"] <= 0:
        errors.append("lift.t_end must be > 0")
    if isinstance(lift.get("samples"), int) and lift["samples"] < 2:
        errors.append("lift.samples must be ≥ 2")

    if errors:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors), violations=errors)
    return RunConfig(
        model=model,
        grid=dict(grid),
        params=dict(params),
        task=task,
        output_dir=doc.get("output_dir"),
        spectrum=dict(spec),
        ssm=dict(ssm),
        tw=dict(tw),
        continuation=dict(cont),
        lift=dict(lift),
    )


def parse_config(text, source="<string>"):
    try:
        doc = json.loads(text, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}", line=exc.lineno, column=exc.colno
        ) from exc
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    cfg = validate(doc)
    cfg.source = source
    return cfg


def load_config(path):
    """Parse and validate a configuration file.

    Raises
    ------
    ConfigError
        Unreadable file, malformed JSON (with line and column), unknown keys
        or invalid values (all violations listed).
    """
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    return parse_config(text, str(path))
