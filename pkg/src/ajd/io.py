"""File formats: JSON specs and reports, CSV series.

Every CSV starts with a comment line ``# ajd-<kind> schema_version=1 ...``
carrying ``key=value`` metadata; every JSON report carries
``"schema_version": 1`` and ``"kind"``.  Floats are written with ``repr`` so
identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math

import numpy as np

from .errors import SchemaError
from .model import ModelSpec
from .simulate import PathSample, SkeletonSample

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# specs and JSON reports
# ---------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def spec_from_json(text):
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"spec is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise SchemaError("spec must be a JSON object")
    try:
        return ModelSpec.from_dict(obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"spec does not match the schema: {exc}") from exc


def load_spec(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise SchemaError(f"cannot read spec file {path}: {exc}") from exc
    return spec_from_json(text)


def spec_to_json(spec):
    return json.dumps(_jsonable(spec.to_dict()), indent=2, sort_keys=True) + "\n"


def dump_spec(spec, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(spec_to_json(spec))


def report_to_json(kind, payload):
    obj = {"schema_version": SCHEMA_VERSION, "kind": kind}
    obj.update(_jsonable(payload))
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def parse_report(text, kind=None):
    """Parse a JSON report and check its schema header."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"report is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict) or obj.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError("report lacks schema_version=1")
    if kind is not None and obj.get("kind") != kind:
        raise SchemaError(f"expected report kind {kind!r}, got {obj.get('kind')!r}")
    return obj


# ---------------------------------------------------------------------------
# CSV helpers
# ---------------------------------------------------------------------------


def _header(kind, **meta):
    extra = "".join(f" {k}={v!r}" if isinstance(v, float) else f" {k}={v}" for k, v in meta.items())
    return f"# ajd-{kind} schema_version={SCHEMA_VERSION}{extra}\n"


def _fmt(v):
    return repr(float(v))


def _parse_header(line, kind):
    if not line.startswith(f"# ajd-{kind} "):
        raise SchemaError(f"missing '# ajd-{kind}' header line")
    meta = {}
    for tok in line[2:].split()[1:]:
        if "=" not in tok:
            raise SchemaError(f"malformed header token {tok!r}")
        k, v = tok.split("=", 1)
        meta[k] = v
    if meta.get("schema_version") != str(SCHEMA_VERSION):
        raise SchemaError("unsupported schema_version")
    return meta


def _read_rows(text, kind, columns_start):
    lines = text.splitlines()
    if not lines:
        raise SchemaError("empty file")
    meta = _parse_header(lines[0], kind)
    reader = csv.reader(lines[1:])
    try:
        cols = next(reader)
    except StopIteration as exc:
        raise SchemaError("missing column header") from exc
    if cols[: len(columns_start)] != columns_start:
        raise SchemaError(f"columns must start with {columns_start}, got {cols}")
    rows = [r for r in reader if r]
    return meta, cols, rows


def _state_columns(cols, start):
    xs = cols[start:]
    d = 0
    while d < len(xs) and xs[d] == f"x_{d + 1}":
        d += 1
    if d == 0:
        raise SchemaError("no state columns x_1..x_d")
    return d


# ---------------------------------------------------------------------------
# paths
# ---------------------------------------------------------------------------


def paths_to_csv(paths):
    """``path_id,t,x_1..x_d,is_jump``.

    Each jump appears as two rows with the same ``t``: the left limit with
    ``is_jump=0`` followed by the post-jump state with ``is_jump=1``.
    """
    paths = list(paths)
    d = paths[0].states.shape[1]
    first = paths[0]
    out = _io.StringIO()
    out.write(_header("paths", seed=first.seed, dt=float(first.dt), scheme=first.scheme,
                      record_stride=first.record_stride))
    out.write(",".join(["path_id", "t"] + [f"x_{i + 1}" for i in range(d)] + ["is_jump"]) + "\n")
    for p in paths:
        pid = str(p.path_index)
        k = 0
        for t, x, flag in zip(p.times, p.states, p.is_jump):
            ts = _fmt(t)
            if flag:
                pre = p.pre_jump_states[k]
                k += 1
                out.write(",".join([pid, ts] + [_fmt(v) for v in pre] + ["0"]) + "\n")
            out.write(",".join([pid, ts] + [_fmt(v) for v in x] + ["1" if flag else "0"]) + "\n")
    return out.getvalue()


def paths_from_csv(text):
    meta, cols, rows = _read_rows(text, "paths", ["path_id", "t"])
    d = _state_columns(cols, 2)
    if len(cols) != d + 3 or cols[-1] != "is_jump":
        raise SchemaError("path CSV must end with an is_jump column")
    by_id = {}
    try:
        for r in rows:
            by_id.setdefault(int(r[0]), []).append(
                (float(r[1]), [float(v) for v in r[2: 2 + d]], r[-1] == "1"))
    except (ValueError, IndexError) as exc:
        raise SchemaError(f"malformed path row: {exc}") from exc
    seed = int(meta.get("seed", 0))
    dt = float(meta.get("dt", "nan"))
    stride = int(meta.get("record_stride", 1))
    out = []
    for pid, recs in by_id.items():
        times, states, flags, pre = [], [], [], []
        for i, (t, x, flag) in enumerate(recs):
            nxt = recs[i + 1] if i + 1 < len(recs) else None
            if not flag and nxt is not None and nxt[2] and nxt[0] == t:
                pre.append(x)
                continue
            if flag and (not pre or len(pre) != sum(flags) + 1):
                raise SchemaError(f"jump row at t={t} lacks its left-limit row")
            times.append(t)
            states.append(x)
            flags.append(flag)
        out.append(PathSample(np.array(times), np.array(states).reshape(-1, d),
                              np.array(flags, dtype=bool), np.array(pre).reshape(-1, d),
                              seed, pid, dt, stride))
    return out


# ---------------------------------------------------------------------------
# skeletons
# ---------------------------------------------------------------------------


def skeleton_to_csv(skel):
    d = skel.states.shape[1]
    out = _io.StringIO()
    out.write(_header("skeleton", delta=float(skel.delta), seed=skel.seed,
                      path_index=skel.path_index, dt=float(skel.dt)))
    out.write(",".join(["k", "t"] + [f"x_{i + 1}" for i in range(d)]) + "\n")
    for k, x in enumerate(skel.states):
        out.write(",".join([str(k), _fmt(k * skel.delta)] + [_fmt(v) for v in x]) + "\n")
    return out.getvalue()


def skeleton_from_csv(text):
    meta, cols, rows = _read_rows(text, "skeleton", ["k", "t"])
    d = _state_columns(cols, 2)
    try:
        delta = float(meta["delta"])
        states = np.array([[float(v) for v in r[2: 2 + d]] for r in rows]).reshape(-1, d)
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"malformed skeleton file: {exc}") from exc
    return SkeletonSample(delta, states, int(meta.get("seed", 0)),
                          int(meta.get("path_index", 0)), float(meta.get("dt", "nan")))


def load_skeleton(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return skeleton_from_csv(fh.read())
    except OSError as exc:
        raise SchemaError(f"cannot read data file {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# transform solutions
# ---------------------------------------------------------------------------


def transform_to_csv(sol, thin=1):
    d = sol.psi.shape[1]
    out = _io.StringIO()
    u = ";".join(f"{float(z.real)!r}{float(z.imag):+.17g}j" for z in sol.u)
    out.write(_header("transform", u=u, step_error_estimate=float(sol.step_error_estimate)))
    cols = ["t", "phi_re", "phi_im"]
    for i in range(d):
        cols += [f"psi_{i + 1}_re", f"psi_{i + 1}_im"]
    out.write(",".join(cols) + "\n")
    idx = list(range(0, len(sol.grid), max(1, int(thin))))
    if idx[-1] != len(sol.grid) - 1:
        idx.append(len(sol.grid) - 1)
    for k in idx:
        row = [sol.grid[k], sol.phi[k].real, sol.phi[k].imag]
        for z in sol.psi[k]:
            row += [z.real, z.imag]
        out.write(",".join(_fmt(v) for v in row) + "\n")
    return out.getvalue()


def transform_from_csv(text):
    """Return ``(meta, t, phi, psi)`` with complex ``phi`` (n,) and ``psi`` (n, d)."""
    meta, cols, rows = _read_rows(text, "transform", ["t", "phi_re", "phi_im"])
    if (len(cols) - 3) % 2:
        raise SchemaError("psi columns must come in re/im pairs")
    try:
        arr = np.array([[float(v) for v in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise SchemaError(f"malformed transform row: {exc}") from exc
    t = arr[:, 0]
    phi = arr[:, 1] + 1j * arr[:, 2]
    psi = arr[:, 3::2] + 1j * arr[:, 4::2]
    return meta, t, phi, psi
