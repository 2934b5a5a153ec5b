"""Serialization of states, spectra, branches, expansion tables and orbits.

Every float is written with 17 significant digits so binary64 values
survive a write/read cycle exactly.  JSON documents carry a ``format`` tag
and an integer ``version``.
"""

import csv
import hashlib
import json
import math
import os

import numpy as np

from .errors import SerializationError
from .models import StateVector
from .spectral import ModeGrid

FORMAT_VERSION = 1


def fmt(x):
    """Decimal form of a float with 17 significant digits."""
    x = float(x)
    if not math.isfinite(x):
        raise SerializationError(f"non-finite value {x!r} cannot be serialized")
    s = "%.17g" % x
    # keep a float literal so that -0.0 survives a JSON round trip
    return s if ("." in s or "e" in s or "n" in s) else s + ".0"


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1)) if indent else ""
    end = " " * (indent * level) if indent else ""
    sep = ",\n" if indent else ","
    nl = "\n" if indent else ""
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [pad + json.dumps(str(k)) + ": " + _encode(v, indent, level + 1) for k, v in obj.items()]
        return "{" + nl + sep.join(items) + nl + end + "}"
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        # numeric rows stay on one line
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_encode(v, 0, 0) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[" + nl + sep.join(items) + nl + end + "]"
    raise SerializationError(f"cannot serialize object of type {type(obj).__name__}")


def dumps(obj, indent=1):
    """JSON text with 17-digit floats (the stdlib encoder uses shortest repr)."""
    return _encode(obj, indent, 0) + "\n"


def write_json(path, obj):
    try:
        with open(path, "w") as fh:
            fh.write(dumps(obj))
    except OSError as exc:
        raise SerializationError(f"cannot write {path}: {exc}") from exc


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, ValueError) as exc:
        raise SerializationError(f"cannot read {path}: {exc}") from exc


def write_csv(path, header, rows):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([v if isinstance(v, str) else (str(int(v)) if isinstance(v, (bool, int, np.integer, np.bool_)) else fmt(v)) for v in row])
    except OSError as exc:
        raise SerializationError(f"cannot write {path}: {exc}") from exc


def read_csv(path):
    """Header and float rows of a CSV file."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise SerializationError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise SerializationError(f"{path} is empty")
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(rows[0]))


def _check(doc, kind):
    if doc.get("format") != kind:
        raise SerializationError(f"expected format {kind!r}, got {doc.get('format')!r}")
    if doc.get("version") != FORMAT_VERSION:
        raise SerializationError(f"unsupported {kind} version {doc.get('version')!r}")


def _cvec(z):
    z = np.asarray(z, dtype=complex)
    return {"re": z.real.tolist(), "im": z.imag.tolist()}


def _complex(re, im):
    # assigning parts keeps signed zeros that ``re + 1j * im`` would lose
    re = np.asarray(re, dtype=float)
    out = np.empty(re.shape, dtype=complex)
    out.real = re
    out.imag = np.asarray(im, dtype=float)
    return out


def _uncvec(d):
    return _complex(d["re"], d["im"])


# ----------------------------------------------------------------------
# grids and states


def grid_to_dict(grid):
    return {"k": grid.k, "n1": grid.n1, "n2": grid.n2, "nfields": grid.nfields}


def grid_from_dict(d):
    return ModeGrid(float(d["k"]), int(d["n1"]), int(d["n2"]), int(d.get("nfields", 3)))


def state_to_dict(grid, state, params=None, extra=None):
    coeffs = np.asarray(state.coeffs, dtype=complex)
    doc = {
        "format": "ssmflow.state",
        "version": FORMAT_VERSION,
        "grid": grid_to_dict(grid),
        "f": float(state.f),
        "c": float(state.c),
        "coeffs": {"shape": list(coeffs.shape), **_cvec(coeffs.reshape(-1))},
    }
    if params is not None:
        doc["params"] = {k: v for k, v in vars(params).items() if v is not None}
    if extra:
        doc.update(extra)
    return doc


def state_from_dict(doc):
    _check(doc, "ssmflow.state")
    grid = grid_from_dict(doc["grid"])
    shape = tuple(doc["coeffs"]["shape"])
    coeffs = _uncvec(doc["coeffs"]).reshape(shape)
    return grid, StateVector(coeffs, float(doc["f"]), float(doc["c"]))


def save_state(path, grid, state, params=None, extra=None):
    write_json(path, state_to_dict(grid, state, params, extra))


def load_state(path):
    return state_from_dict(read_json(path))


def write_physical_csv(path, x1, x2, fields, names):
    """Row-major over ``x1`` then ``x2``; ``fields`` has shape (nf, nx, ny)."""
    rows = []
    for i, a in enumerate(x1):
        for j, b in enumerate(x2):
            rows.append([a, b] + [fields[f, i, j] for f in range(len(names))])
    write_csv(path, ["x1", "x2"] + list(names), rows)


# ----------------------------------------------------------------------
# spectra


def write_spectrum_csv(path, values, beta_split=None):
    values = np.asarray(values, dtype=complex)
    flag = values.real > beta_split if beta_split is not None else np.zeros(values.size, dtype=bool)
    write_csv(
        path,
        ["re_lambda", "im_lambda", "in_sigma1"],
        [[z.real, z.imag, int(s)] for z, s in zip(values, flag)],
    )


def read_spectrum_csv(path):
    header, data = read_csv(path)
    if header != ["re_lambda", "im_lambda", "in_sigma1"]:
        raise SerializationError(f"unexpected spectrum header {header}")
    return _complex(data[:, 0], data[:, 1]), data[:, 2].astype(bool)


# ----------------------------------------------------------------------
# branches


def branch_to_dict(branch, param_name="re"):
    pts = []
    for p in branch.points:
        pts.append(
            {
                "param": p.param,
                "x": np.asarray(p.x, dtype=float),
                "tangent": None if p.tangent is None else np.asarray(p.tangent, dtype=float),
                "iterations": int(p.iterations),
                "stability": p.stability,
                "observables": p.observables,
            }
        )
    return {
        "format": "ssmflow.branch",
        "version": FORMAT_VERSION,
        "param": param_name,
        "steps": [float(s) for s in branch.steps],
        "folds": [{"param": f.param, "index": int(f.index), "x": np.asarray(f.x, dtype=float)} for f in branch.folds],
        "points": pts,
    }


def branch_from_dict(doc):
    from .continuation import Branch, BranchPoint, Fold

    _check(doc, "ssmflow.branch")
    points = []
    for p in doc["points"]:
        t = None if p["tangent"] is None else np.asarray(p["tangent"], dtype=float)
        points.append(
            BranchPoint(
                np.asarray(p["x"], dtype=float),
                float(p["param"]),
                t,
                int(p["iterations"]),
                None,
                p.get("stability"),
                p.get("observables"),
            )
        )
    folds = [Fold(float(f["param"]), np.asarray(f["x"], dtype=float), int(f["index"])) for f in doc["folds"]]
    return Branch(points, list(doc["steps"]), folds)


def write_branch_csv(path, branch, param_name="re", extra=None):
    """One row per point: parameter, tangent parameter component, wave speed and observables.

    ``extra`` maps column names to per-point callables.
    """
    keys = []
    for p in branch.points:
        for k in p.observables or {}:
            if k not in keys:
                keys.append(k)
    extra = extra or {}
    header = [param_name, "t_" + param_name, "iterations", "stability"] + keys + list(extra)
    rows = []
    for p in branch.points:
        obs = p.observables or {}
        tp = p.tangent[-1] if p.tangent is not None else float("nan")
        row = [p.param, tp, p.iterations, -1 if p.stability is None else p.stability]
        row += [obs.get(k, float("nan")) for k in keys]
        row += [f(p) for f in extra.values()]
        rows.append(row)
    write_csv(path, header, rows)


# ----------------------------------------------------------------------
# expansion tables


def _alpha_key(alpha):
    return [int(a) for a in alpha]


def table_to_dict(table):
    from .ssm import ExpansionTable  # noqa: F401  (type only)

    monos = []
    for alpha in sorted(table.k_coeffs, key=lambda a: (sum(a), tuple(-x for x in a))):
        k = np.asarray(table.k_coeffs[alpha], dtype=complex)
        rv = np.asarray(table.r_coeffs.get(alpha, np.zeros(table.r)), dtype=complex)
        monos.append(
            {
                "alpha": _alpha_key(alpha),
                "style": table.style.get(alpha, ""),
                "residual": table.residuals.get(alpha),
                "k_re": k.real,
                "k_im": k.imag,
                "r_re": rv.real,
                "r_im": rv.imag,
            }
        )
    res = []
    for e in table.resonance_log:
        m = e.get("matched")
        d = e.get("distance")
        res.append(
            {
                "alpha": _alpha_key(e["alpha"]),
                "kind": e["kind"],
                "q": [int(q) for q in e.get("q", [])],
                "matched": None if m is None else [complex(m).real, complex(m).imag],
                "distance": None if d is None or not math.isfinite(d) else float(d),
            }
        )
    doc = {
        "format": "ssmflow.expansion",
        "version": FORMAT_VERSION,
        "r": int(table.r),
        "order": int(table.order),
        "style": sorted({s for s in table.style.values() if s not in ("linear",)}) or ["linear"],
        "eigenvalues": _cvec(table.values),
        "partner": [int(p) for p in table.partner],
        "monomials": monos,
        "resonances": res,
    }
    if table.r1 is not None:
        doc["linear_part"] = _cvec(np.asarray(table.r1).reshape(-1))
    return doc


def table_from_dict(doc):
    from .ssm import ExpansionTable

    _check(doc, "ssmflow.expansion")
    r = int(doc["r"])
    table = ExpansionTable(r, int(doc["order"]), _uncvec(doc["eigenvalues"]))
    table.partner = list(doc["partner"])
    if "linear_part" in doc:
        table.r1 = _uncvec(doc["linear_part"]).reshape(r, r)
    for m in doc["monomials"]:
        a = tuple(m["alpha"])
        table.k_coeffs[a] = _complex(m["k_re"], m["k_im"])
        table.r_coeffs[a] = _complex(m["r_re"], m["r_im"])
        table.style[a] = m.get("style", "")
        if m.get("residual") is not None:
            table.residuals[a] = float(m["residual"])
    for e in doc["resonances"]:
        mt = e["matched"]
        table.resonance_log.append(
            {
                "alpha": tuple(e["alpha"]),
                "kind": e["kind"],
                "q": list(e["q"]),
                "matched": None if mt is None else complex(mt[0], mt[1]),
                "distance": np.inf if e["distance"] is None else float(e["distance"]),
            }
        )
    return table


def save_table(path, table):
    write_json(path, table_to_dict(table))


def load_table(path):
    return table_from_dict(read_json(path))


# ----------------------------------------------------------------------
# orbits


def write_orbit_csv(path, trajectory):
    """Columns t, Re/Im of each reduced coordinate, then the observables."""
    theta = np.asarray(trajectory.theta, dtype=complex)
    r = theta.shape[1]
    obs = trajectory.observables or [{} for _ in trajectory.t]
    keys = [k for k in ("e", "d", "mwnv", "svf", "T_ratio") if obs and k in obs[0]]
    header = ["t"]
    for i in range(r):
        header += [f"theta{i + 1}_re", f"theta{i + 1}_im"]
    header += keys
    rows = []
    for t, th, o in zip(trajectory.t, theta, obs):
        row = [t]
        for z in th:
            row += [z.real, z.imag]
        rows.append(row + [o[k] for k in keys])
    write_csv(path, header, rows)


# ----------------------------------------------------------------------
# hashing


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def payload_digest(paths):
    """Combined hash of output files (sorted by base name)."""
    h = hashlib.sha256()
    for p in sorted(paths, key=os.path.basename):
        h.update(os.path.basename(p).encode())
        h.update(file_digest(p).encode())
    return h.hexdigest()
