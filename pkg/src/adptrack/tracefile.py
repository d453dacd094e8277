"""CSV persistence of learning traces with a JSON metadata sidecar.

Column order: t, x1..xn, u, c, u_total, reference, error, gamma_hat, xi_hat,
tracker gains, optimizer gains (row-major), tracker kernel upper triangle,
optimizer kernel upper triangle.  Floats use 17 significant digits, which
round-trips IEEE doubles exactly.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np

from .critic import triu_index
from .engine import LearningTrace

FLOAT_FORMAT = "%.17g"


def _numbered(prefix, count):
    return [f"{prefix}{i + 1}" for i in range(count)]


def _triangle(prefix, d):
    i, j, _ = triu_index(d)
    return [f"{prefix}_{a + 1}_{b + 1}" for a, b in zip(i, j)]


def _dim(packed):
    return int(round((np.sqrt(8 * packed + 1) - 1) / 2))


def trace_columns(n, m, p, dE=None, dX=None):
    dE = p + 1 if dE is None else dE
    dX = n + m if dX is None else dX
    u = ["u"] if m == 1 else _numbered("u", m)
    ut = ["u_total"] if m == 1 else _numbered("u_total", m)
    return (["t"] + _numbered("x", n) + u + ["c"] + ut
            + ["reference", "error", "gamma_hat", "xi_hat"]
            + _numbered("tracker_gain", p)
            + [f"optimizer_gain_{a + 1}_{b + 1}" for a in range(m) for b in range(n)]
            + _triangle("tracker_kernel", dE) + _triangle("optimizer_kernel", dX))


def _matrix(trace):
    cols = [trace.t[:, None], trace.x, trace.u, trace.c[:, None], trace.u_total,
            trace.reference[:, None], trace.error[:, None], trace.gamma_hat[:, None],
            trace.xi_hat[:, None], trace.tracker_gain, trace.optimizer_gain,
            trace.tracker_kernel, trace.optimizer_kernel]
    cols = [np.asarray(c, dtype=float) for c in cols]
    return np.hstack([c.reshape(len(trace), c.shape[1] if c.ndim == 2 else 1) for c in cols])


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_trace(trace: LearningTrace, path, extra_metadata: dict | None = None) -> None:
    """Write the CSV and, alongside it, ``<stem>.meta.json`` with the metadata."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    p = trace.tracker_gain.shape[1]
    header = ",".join(trace_columns(trace.n, trace.m, p, _dim(trace.tracker_kernel.shape[1]),
                                    _dim(trace.optimizer_kernel.shape[1])))
    data = _matrix(trace)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        if data.shape[0]:
            np.savetxt(fh, data, fmt=FLOAT_FORMAT, delimiter=",")
    meta = dict(trace.metadata)
    if trace.rounds:
        meta["policy_iteration_rounds"] = [
            {"index": r.index, "start_step": r.start_step, "end_step": r.end_step,
             "evaluated_gain": r.evaluated_gain, "kernel": r.kernel.matrix,
             "improved_gain": r.improved_gain} for r in trace.rounds]
    if extra_metadata:
        meta.update(extra_metadata)
    with open(sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(_jsonable(meta), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_trace(path) -> LearningTrace:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        body = fh.read()
    if body.strip():
        data = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2, dtype=float)
    else:
        data = np.zeros((0, len(header)))
    if data.shape[1] != len(header):
        raise ValueError(f"{path}: {data.shape[1]} values per row, header has {len(header)}")

    def group(pred):
        return [i for i, name in enumerate(header) if pred(name)]

    def is_indexed(name, prefix):
        rest = name[len(prefix):]
        return name.startswith(prefix) and rest.isdigit()

    idx = {
        "t": group(lambda s: s == "t"),
        "x": group(lambda s: is_indexed(s, "x")),
        "u": group(lambda s: s == "u" or is_indexed(s, "u")),
        "c": group(lambda s: s == "c"),
        "u_total": group(lambda s: s == "u_total" or is_indexed(s, "u_total")),
        "reference": group(lambda s: s == "reference"),
        "error": group(lambda s: s == "error"),
        "gamma_hat": group(lambda s: s == "gamma_hat"),
        "xi_hat": group(lambda s: s == "xi_hat"),
        "tracker_gain": group(lambda s: is_indexed(s, "tracker_gain")),
        "optimizer_gain": group(lambda s: s.startswith("optimizer_gain_")),
        "tracker_kernel": group(lambda s: s.startswith("tracker_kernel_")),
        "optimizer_kernel": group(lambda s: s.startswith("optimizer_kernel_")),
    }
    cols = {}
    for name, where in idx.items():
        block = data[:, where]
        cols[name] = block[:, 0].copy() if name in ("t", "c", "reference", "error", "gamma_hat",
                                                   "xi_hat") else block.copy()
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        with open(side, encoding="utf-8") as fh:
            meta = json.load(fh)
    return LearningTrace(**cols, metadata=meta)


__all__ = ["write_trace", "read_trace", "trace_columns", "sidecar_path", "FLOAT_FORMAT"]
