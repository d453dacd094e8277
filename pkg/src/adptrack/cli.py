"""Command-line interface: ``adptrack run | poles | report``.

``run`` executes scenarios, writes one trace CSV (plus metadata sidecar) per
scenario and a ``report.json`` into the output directory, and exits with
status 1 when any episode failed (divergence or insufficient excitation).
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, config_to_dict, load_config, parse_config
from .engine import run_episode
from .errors import ConfigError, DivergenceError, ExcitationError
from .metrics import avg_accumulated_squared_error, closed_loop_poles, naci, rms
from .tracefile import read_trace, sidecar_path, write_trace


def _pairs(poles):
    return [[float(p.real), float(p.imag)] for p in poles.values]


def _trace_name(cfg: ScenarioConfig, index: int, taken: set) -> str:
    name = cfg.name
    if name in taken:
        name = f"{name}_{index}"
    taken.add(name)
    return name + ".csv"


def _execute(job):
    """Worker: run one scenario and persist its trace; returns status fields only."""
    cfg, path = job
    extra = {"config": config_to_dict(cfg)}
    try:
        trace = run_episode(cfg.mode, cfg)
    except (DivergenceError, ExcitationError) as exc:
        status = "diverged" if isinstance(exc, DivergenceError) else "excitation_error"
        partial = getattr(exc, "trace", None)
        if partial is not None:
            write_trace(partial, path, {**extra, "status": status, "message": str(exc)})
        return {"status": status, "message": str(exc), "step": exc.step,
                "trace": str(path) if partial is not None else None}
    write_trace(trace, path, {**extra, "status": "ok"})
    return {"status": "ok", "message": "", "step": None, "trace": str(path)}


def summarize_trace(trace, meta=None) -> dict:
    """Report entry recomputed from a (persisted) trace and its metadata."""
    meta = trace.metadata if meta is None else meta
    entry = {"name": meta.get("name"), "mode": meta.get("mode"), "steps": len(trace),
             "converged": meta.get("converged"), "converged_step": meta.get("converged_step")}
    if len(trace) == 0:
        return entry
    with np.errstate(over="ignore", invalid="ignore"):
        entry.update(_trace_metrics(trace, meta))
    return entry


def _trace_metrics(trace, meta) -> dict:
    entry = {}
    cfg = parse_config(meta["config"]) if "config" in meta else None
    entry["final_gains"] = {"tracker": trace.final_tracker_gain().tolist(),
                            "optimizer": trace.final_optimizer_gain().reshape(-1).tolist()}
    entry["avg_sq_error"] = float(avg_accumulated_squared_error(trace)[-1])
    entry["rms_error"] = rms(trace.error)
    entry["naci"] = None
    if cfg is not None:
        w = cfg.naci.weights(cfg.steps)
        if len(trace) >= w.N:
            entry["naci"] = naci(trace, w)
        plant = cfg.plant.build()
        entry["poles"] = {
            "open_loop": _pairs(closed_loop_poles(plant)),
            "closed_loop": _pairs(closed_loop_poles(plant, trace.final_optimizer_gain())),
        }
    return entry


def run_scenarios(configs, parallelism: int = 1, out_dir=None) -> dict:
    """Run every config, persist traces, and build the report from the files on disk."""
    configs = list(configs)
    taken = set()
    jobs = []
    for i, cfg in enumerate(configs):
        root = Path(out_dir if out_dir is not None else cfg.output)
        jobs.append((cfg, root / _trace_name(cfg, i, taken)))
    if parallelism > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(_execute, jobs))
    else:
        outcomes = [_execute(job) for job in jobs]

    scenarios = []
    for (cfg, path), outcome in zip(jobs, outcomes):
        entry = {"name": cfg.name, "mode": cfg.mode.value}
        if outcome["trace"] is not None:
            trace = read_trace(path)
            entry.update(summarize_trace(trace))
        entry.update(outcome)
        scenarios.append(entry)
    ok = all(s["status"] == "ok" for s in scenarios)
    comparison = {
        key: {s["name"]: s.get(key) for s in scenarios if s["status"] == "ok"}
        for key in ("naci", "avg_sq_error")
    }
    return {"status": "ok" if ok else "failed", "scenarios": scenarios, "comparison": comparison}


def _finite(obj):
    """Replace non-finite floats (diverged episodes) by null so the output is strict JSON."""
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite(v) for v in obj]
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _dump(obj, stream=None):
    stream = sys.stdout if stream is None else stream
    json.dump(_finite(obj), stream, indent=2)
    stream.write("\n")


def _cmd_run(args) -> int:
    configs = []
    errors = []
    for path in args.configs:
        try:
            configs.append(load_config(path))
        except ConfigError as exc:
            errors.extend(f"{path}: {e}" for e in exc.errors)
        except OSError as exc:
            errors.append(f"{path}: {exc}")
    if errors:
        for e in errors:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    report = run_scenarios(configs, args.parallel, args.out)
    if args.out is not None or configs:
        out = Path(args.out if args.out is not None else configs[0].output)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.json", "w", encoding="utf-8") as fh:
            _dump(report, fh)
    _dump(report)
    return 0 if report["status"] == "ok" else 1


def _cmd_poles(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    plant = cfg.plant.build()
    out = {"Ts": plant.Ts, "open_loop": _pairs(closed_loop_poles(plant))}
    if cfg.optimizer.initial_gain is not None:
        K = np.array(cfg.optimizer.initial_gain).reshape(plant.m, plant.n)
        out["initial_gain_closed_loop"] = _pairs(closed_loop_poles(plant, K))
    _dump(out)
    return 0


def _cmd_report(args) -> int:
    entries = []
    for path in args.traces:
        trace = read_trace(path)
        entry = summarize_trace(trace)
        entry["trace"] = str(path)
        entry["status"] = trace.metadata.get("status", "ok")
        entries.append(entry)
    _dump({"scenarios": entries})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adptrack", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run scenarios and write traces plus report.json")
    run.add_argument("configs", nargs="*", help="scenario YAML files")
    run.add_argument("--parallel", type=int, default=1, metavar="N",
                     help="number of worker processes (default 1)")
    run.add_argument("--out", default=None, metavar="DIR",
                     help="output directory (default: each config's 'output')")
    run.set_defaults(func=_cmd_run)
    poles = sub.add_parser("poles", help="continuous-time poles of a scenario's plant")
    poles.add_argument("config")
    poles.set_defaults(func=_cmd_poles)
    report = sub.add_parser("report", help="recompute metrics from trace files")
    report.add_argument("traces", nargs="+")
    report.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "parallel", 1) < 1:
        print("--parallel must be at least 1", file=sys.stderr)
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
