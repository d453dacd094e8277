"""Scenario configuration: YAML grammar, validation and lossless serialization.

Every field is optional except ``mode``; see README.md for the grammar.  With
``plant.preset: flexible_wing_trim`` the weights, initial state, trajectory
and NACI normalizations default to the flexible-wing benchmark values.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigError, ContractError
from .metrics import WING_NACI_V1, WING_NACI_V2, NaciWeights
from .modes import Mode
from .plant import (FLEXIBLE_WING_A, FLEXIBLE_WING_B, FLEXIBLE_WING_TS, FLEXIBLE_WING_X0,
                    ROLL_ANGLE, Constant, DampedComposite, PlantModel, Sinusoid,
                    UncertaintyConfig, flexible_wing_trim)

PRESETS = {
    "flexible_wing_trim": dict(
        A=FLEXIBLE_WING_A, B=FLEXIBLE_WING_B, Ts=FLEXIBLE_WING_TS, x0=FLEXIBLE_WING_X0,
        Q=(0.0625, 25.0, 25.0, 100.0, 100.0), R=(907.0,), S=(1e-4, 1e-4, 1e-4), M=(1e-4,),
        trajectory=Sinusoid(25.0, 10.0), tracked_state=ROLL_ANGLE,
        naci=(WING_NACI_V1, WING_NACI_V2),
    ),
}

KERNEL_INITS = ("zero", "stage")
NORMALIZATIONS = ("proximal", "none")
GUARDS = ("psd", "none")


def _diag(entries):
    n = len(entries)
    return tuple(tuple(float(entries[i]) if i == j else 0.0 for j in range(n)) for i in range(n))


def _to_array(mat):
    return np.array(mat, dtype=float)


@dataclass(frozen=True)
class PlantSource:
    preset: str | None = "flexible_wing_trim"
    A: tuple | None = None
    B: tuple | None = None
    Ts: float = FLEXIBLE_WING_TS

    def build(self) -> PlantModel:
        if self.preset is not None:
            return flexible_wing_trim(self.Ts)
        return PlantModel(_to_array(self.A), _to_array(self.B), self.Ts)

    @property
    def n(self) -> int:
        return len(PRESETS[self.preset]["A"]) if self.preset else len(self.A)

    @property
    def m(self) -> int:
        return len(PRESETS[self.preset]["B"][0]) if self.preset else len(self.B[0])


@dataclass(frozen=True)
class TrackingSettings:
    state_index: int = ROLL_ANGLE
    memory: int = 2
    selector: tuple | None = None


@dataclass(frozen=True)
class WeightSettings:
    Q: tuple
    R: tuple
    S: tuple
    M: tuple


@dataclass(frozen=True)
class RateSettings:
    """Fixed learning rates, or per-step uniform draws from ``band`` when given."""

    critic: float = 1e-4
    actor: float = 1e-4
    band: tuple | None = None
    seed: int = 0
    normalization: str = "proximal"


@dataclass(frozen=True)
class LoopSettings:
    enabled: bool = True
    initial_gain: tuple | None = None
    initial_kernel: str | tuple = "zero"
    rates: RateSettings | None = None


@dataclass(frozen=True)
class DitherConfig:
    amplitude: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class LearningSettings:
    epsilon: float = 1e-6
    window: int = 100
    stop_on_convergence: bool = False
    ridge: float = 1e-9
    target_guard: str = "psd"


@dataclass(frozen=True)
class NaciSettings:
    V1: tuple
    V2: tuple
    N: int | None = None

    def weights(self, steps: int) -> NaciWeights:
        return NaciWeights(np.diag(self.V1), np.diag(self.V2), self.N or steps)


@dataclass(frozen=True)
class PolicyIterationSettings:
    rounds: int = 5
    samples_per_round: int | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    mode: Mode
    weights: WeightSettings
    naci: NaciSettings
    name: str = "scenario"
    duration: float = 10.0
    plant: PlantSource = field(default_factory=PlantSource)
    initial_state: tuple = FLEXIBLE_WING_X0
    trajectory: Sinusoid | DampedComposite | Constant = Sinusoid(25.0, 10.0)
    tracking: TrackingSettings = field(default_factory=TrackingSettings)
    rates: RateSettings = field(default_factory=RateSettings)
    tracker: LoopSettings = field(default_factory=LoopSettings)
    optimizer: LoopSettings = field(default_factory=LoopSettings)
    uncertainty: UncertaintyConfig = field(default_factory=UncertaintyConfig)
    dither: DitherConfig = field(default_factory=DitherConfig)
    learning: LearningSettings = field(default_factory=LearningSettings)
    policy_iteration: PolicyIterationSettings = field(default_factory=PolicyIterationSettings)
    output: str = "out"

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.plant.Ts))

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def config_hash(self) -> str:
        return hashlib.sha256(serialize_config(self).encode()).hexdigest()[:16]


# -- parsing -------------------------------------------------------------------


class _Errors:
    def __init__(self):
        self.items = []

    def add(self, path, msg):
        self.items.append(f"{path}: {msg}")


def _section(raw, path, errs, allowed):
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        errs.add(path, "expected a mapping")
        return {}
    for key in raw:
        if key not in allowed:
            errs.add(f"{path}.{key}" if path else str(key), "unknown key")
    return raw


def _number(raw, key, path, errs, default, lo=None, hi=None, lo_open=False, hi_open=False,
            integer=False):
    if key not in raw or raw[key] is None:
        return default
    val = raw[key]
    where = f"{path}.{key}" if path else key
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        errs.add(where, f"expected a number, got {val!r}")
        return default
    if integer and (not float(val).is_integer()):
        errs.add(where, f"expected an integer, got {val!r}")
        return default
    val = int(val) if integer else float(val)
    if not math.isfinite(val):
        errs.add(where, "must be finite")
        return default
    if lo is not None and (val < lo or (lo_open and val == lo)):
        errs.add(where, f"{val} out of range (must be {'>' if lo_open else '>='} {lo})")
        return default
    if hi is not None and (val > hi or (hi_open and val == hi)):
        errs.add(where, f"{val} out of range (must be {'<' if hi_open else '<='} {hi})")
        return default
    return val


def _vector(val, where, errs, length=None):
    if val is None:
        return None
    if isinstance(val, (int, float)) and not isinstance(val, bool):
        val = [val]
    try:
        arr = np.array(val, dtype=float)
    except (TypeError, ValueError):
        errs.add(where, "expected a list of numbers")
        return None
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        errs.add(where, "expected a flat list of finite numbers")
        return None
    if length is not None and arr.size != length:
        errs.add(where, f"expected {length} entries, got {arr.size}")
        return None
    return tuple(float(v) for v in arr)


def _matrix(val, where, errs, shape=None, allow_diag=False):
    """Nested list, or a flat list of diagonal entries when ``allow_diag``."""
    if val is None:
        return None
    if isinstance(val, (int, float)) and not isinstance(val, bool):
        val = [[val]]
    try:
        arr = np.array(val, dtype=float)
    except (TypeError, ValueError):
        errs.add(where, "expected a matrix (list of rows)")
        return None
    if arr.ndim == 1 and allow_diag:
        arr = np.diag(arr)
    if arr.ndim != 2 or not np.all(np.isfinite(arr)):
        errs.add(where, "expected a matrix of finite numbers")
        return None
    if shape is not None and arr.shape != shape:
        errs.add(where, f"expected shape {shape}, got {arr.shape}")
        return None
    return tuple(tuple(float(v) for v in row) for row in arr)


def _spd(mat, where, errs):
    if mat is None:
        return None
    arr = np.array(mat)
    if not np.allclose(arr, arr.T, rtol=0, atol=1e-12 * max(1.0, np.max(np.abs(arr)))):
        errs.add(where, "must be symmetric")
        return None
    if np.min(np.linalg.eigvalsh(arr)) <= 0:
        errs.add(where, "must be positive definite")
        return None
    return mat


def _rate(raw, key, path, errs, default):
    return _number(raw, key, path, errs, default, lo=0.0, hi=1.0, hi_open=True)


def _parse_rates(raw, path, errs, base=None):
    raw = _section(raw, path, errs, {"critic", "actor", "band", "seed", "normalization"})
    base = base or RateSettings()
    critic = _rate(raw, "critic", path, errs, base.critic)
    actor = _rate(raw, "actor", path, errs, base.actor)
    band = base.band
    if "band" in raw:
        band = _vector(raw["band"], f"{path}.band", errs, length=2) if raw["band"] is not None else None
        if band is not None:
            lo, hi = band
            if not (0 <= lo <= hi < 1):
                errs.add(f"{path}.band", f"{list(band)} out of range (need 0 <= low <= high < 1)")
                band = None
    seed = _number(raw, "seed", path, errs, base.seed, lo=0, integer=True)
    norm = raw.get("normalization", base.normalization)
    if norm not in NORMALIZATIONS:
        errs.add(f"{path}.normalization", f"must be one of {NORMALIZATIONS}, got {norm!r}")
        norm = base.normalization
    return RateSettings(critic, actor, band, seed, norm)


def _parse_loop(raw, path, errs, gain_len, kernel_dim, base_rates):
    raw = _section(raw, path, errs, {"enabled", "initial_gain", "initial_kernel", "rates"})
    enabled = raw.get("enabled", True)
    if not isinstance(enabled, bool):
        errs.add(f"{path}.enabled", "expected true or false")
        enabled = True
    gain = _vector(raw.get("initial_gain"), f"{path}.initial_gain", errs, length=gain_len)
    kinit = raw.get("initial_kernel", "zero")
    if isinstance(kinit, str):
        if kinit not in KERNEL_INITS:
            errs.add(f"{path}.initial_kernel", f"must be one of {KERNEL_INITS} or a matrix")
            kinit = "zero"
    elif kinit is None:
        kinit = "zero"
    else:
        kinit = _matrix(kinit, f"{path}.initial_kernel", errs, shape=(kernel_dim, kernel_dim))
        if kinit is not None and not np.allclose(np.array(kinit), np.array(kinit).T):
            errs.add(f"{path}.initial_kernel", "must be symmetric")
        if kinit is None:
            kinit = "zero"
    rates = _parse_rates(raw["rates"], f"{path}.rates", errs, base_rates) if raw.get("rates") is not None else None
    return LoopSettings(enabled, gain, kinit, rates)


def _parse_trajectory(raw, errs, default):
    if raw is None:
        return default
    raw = _section(raw, "trajectory", errs, {"kind", "amplitude", "period", "terms", "decay", "level"})
    kind = raw.get("kind")
    if kind == "sinusoid":
        amp = _number(raw, "amplitude", "trajectory", errs, 25.0)
        period = _number(raw, "period", "trajectory", errs, 10.0, lo=0.0, lo_open=True)
        return Sinusoid(amp, period)
    if kind == "damped_composite":
        terms = []
        raw_terms = raw.get("terms") or []
        if not isinstance(raw_terms, list) or not raw_terms:
            errs.add("trajectory.terms", "expected a non-empty list of terms")
            raw_terms = []
        for i, t in enumerate(raw_terms):
            p = f"trajectory.terms[{i}]"
            t = _section(t, p, errs, {"amplitude", "frequency", "phase"})
            amp = _number(t, "amplitude", p, errs, 0.0)
            freq = _number(t, "frequency", p, errs, 0.0)
            phase = t.get("phase", "sin")
            if phase not in ("sin", "cos"):
                errs.add(f"{p}.phase", f"must be 'sin' or 'cos', got {phase!r}")
                phase = "sin"
            terms.append((amp, freq, phase))
        decay = _number(raw, "decay", "trajectory", errs, 0.0, lo=0.0)
        return DampedComposite(tuple(terms), decay)
    if kind == "constant":
        return Constant(_number(raw, "level", "trajectory", errs, 0.0))
    errs.add("trajectory.kind", f"must be sinusoid, damped_composite or constant, got {kind!r}")
    return default


def parse_config(text) -> ScenarioConfig:
    """Parse YAML text (or an already-loaded mapping) into a validated config.

    Raises ConfigError listing every invalid field.
    """
    if isinstance(text, dict):
        raw = text
    else:
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError([f"<document>: malformed YAML ({exc})"]) from None
    errs = _Errors()
    top = {"name", "mode", "duration", "plant", "initial_state", "trajectory", "tracking",
           "weights", "rates", "tracker", "optimizer", "uncertainty", "dither", "learning",
           "naci", "policy_iteration", "output"}
    raw = _section(raw, "", errs, top)

    name = raw.get("name", "scenario")
    if not isinstance(name, str) or not name:
        errs.add("name", "expected a non-empty string")
        name = "scenario"

    mode = raw.get("mode")
    try:
        mode = Mode(mode)
    except ValueError:
        errs.add("mode", f"must be one of {[m.value for m in Mode]}, got {mode!r}")
        mode = Mode.OTA2

    # plant
    praw = _section(raw.get("plant"), "plant", errs, {"preset", "A", "B", "Ts"})
    preset = praw.get("preset")
    inline = "A" in praw or "B" in praw
    if preset is None and not inline:
        preset = "flexible_wing_trim"
    defaults = None
    A = B = None
    if preset is not None:
        if preset not in PRESETS:
            errs.add("plant.preset", f"unknown preset {preset!r}")
            preset = "flexible_wing_trim"
        if inline:
            errs.add("plant", "give either a preset or inline A/B matrices, not both")
        defaults = PRESETS[preset]
        n, m = len(defaults["A"]), len(defaults["B"][0])
        Ts = _number(praw, "Ts", "plant", errs, defaults["Ts"], lo=0.0, lo_open=True)
    else:
        A = _matrix(praw.get("A"), "plant.A", errs)
        if A is None:
            if "A" not in praw:
                errs.add("plant.A", "required for an inline plant")
            n = 0
        else:
            n = len(A)
            if len(A[0]) != n:
                errs.add("plant.A", f"must be square, got {n}x{len(A[0])}")
                A = None
        Braw = praw.get("B")
        if isinstance(Braw, list) and Braw and not isinstance(Braw[0], list):
            Braw = [[v] for v in Braw]
        B = _matrix(Braw, "plant.B", errs)
        if B is None:
            if "B" not in praw:
                errs.add("plant.B", "required for an inline plant")
            m = 1
        else:
            m = len(B[0])
            if A is not None and len(B) != n:
                errs.add("plant.B", f"has {len(B)} rows, A has dimension {n}")
                B = None
        if "Ts" not in praw:
            errs.add("plant.Ts", "required for an inline plant")
        Ts = _number(praw, "Ts", "plant", errs, 1.0, lo=0.0, lo_open=True)
    plant = PlantSource(preset, A, B, Ts)

    duration = _number(raw, "duration", "", errs, 10.0, lo=0.0)
    steps = duration / Ts
    if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
        errs.add("duration", f"{duration} s is not an integer number of {Ts} s samples")

    x0_default = defaults["x0"] if defaults else (0.0,) * n
    x0 = _vector(raw.get("initial_state"), "initial_state", errs, length=n) or x0_default

    trajectory = _parse_trajectory(raw.get("trajectory"), errs,
                                   defaults["trajectory"] if defaults else Constant(0.0))

    traw = _section(raw.get("tracking"), "tracking", errs, {"state_index", "memory", "selector"})
    idx_default = defaults["tracked_state"] if defaults else 0
    state_index = _number(traw, "state_index", "tracking", errs, idx_default, lo=0,
                          hi=max(n - 1, 0), integer=True)
    memory = _number(traw, "memory", "tracking", errs, 2, lo=0, integer=True)
    selector = _vector(traw.get("selector"), "tracking.selector", errs, length=m)
    tracking = TrackingSettings(state_index, memory, selector)
    p = memory + 1

    wraw = _section(raw.get("weights"), "weights", errs, {"Q", "R", "S", "M"})
    wdims = {"Q": n, "R": m, "S": p, "M": 1}
    wvals = {}
    for key, dim in wdims.items():
        where = f"weights.{key}"
        value = None
        if key in wraw:
            value = _spd(_matrix(wraw[key], where, errs, shape=(dim, dim), allow_diag=True),
                         where, errs)
        elif defaults:
            entries = defaults[key]
            if len(entries) != dim:
                # the error weight follows the configured memory depth
                entries = (entries[0],) * dim
            value = _diag(entries)
        elif key in ("S", "M"):
            value = _diag((1.0,) * dim)
        else:
            errs.add(where, "required for an inline plant")
        wvals[key] = value or _diag((1.0,) * max(dim, 1))
    weights = WeightSettings(**wvals)

    rates = _parse_rates(raw.get("rates"), "rates", errs)
    tracker = _parse_loop(raw.get("tracker"), "tracker", errs, p, p + 1, rates)
    optimizer = _parse_loop(raw.get("optimizer"), "optimizer", errs, m * n, n + m, rates)

    uraw = _section(raw.get("uncertainty"), "uncertainty", errs,
                    {"amplitude", "seed", "std_fraction", "domain"})
    domain = uraw.get("domain", "continuous")
    if domain not in ("continuous", "discrete"):
        errs.add("uncertainty.domain", f"must be continuous or discrete, got {domain!r}")
        domain = "continuous"
    uncertainty = UncertaintyConfig(
        _number(uraw, "amplitude", "uncertainty", errs, 0.0, lo=0.0, hi=1.0, hi_open=True),
        _number(uraw, "seed", "uncertainty", errs, 0, lo=0, integer=True),
        _number(uraw, "std_fraction", "uncertainty", errs, 0.5, lo=0.0, lo_open=True),
        domain)

    draw = _section(raw.get("dither"), "dither", errs, {"amplitude", "seed"})
    dither = DitherConfig(_number(draw, "amplitude", "dither", errs, 0.0, lo=0.0),
                          _number(draw, "seed", "dither", errs, 0, lo=0, integer=True))

    lraw = _section(raw.get("learning"), "learning", errs,
                    {"epsilon", "window", "stop_on_convergence", "ridge", "target_guard"})
    stop = lraw.get("stop_on_convergence", False)
    if not isinstance(stop, bool):
        errs.add("learning.stop_on_convergence", "expected true or false")
        stop = False
    guard = lraw.get("target_guard", "psd")
    if guard not in GUARDS:
        errs.add("learning.target_guard", f"must be one of {GUARDS}, got {guard!r}")
        guard = "psd"
    learning = LearningSettings(
        _number(lraw, "epsilon", "learning", errs, 1e-6, lo=0.0, lo_open=True),
        _number(lraw, "window", "learning", errs, 100, lo=1, integer=True),
        stop,
        _number(lraw, "ridge", "learning", errs, 1e-9, lo=0.0),
        guard)

    nraw = _section(raw.get("naci"), "naci", errs, {"V1", "V2", "N"})
    v1_default = defaults["naci"][0] if defaults else (1.0,) * n
    v2_default = defaults["naci"][1] if defaults else (1.0,) * m
    V1 = _vector(nraw.get("V1"), "naci.V1", errs, length=n) or v1_default
    V2 = _vector(nraw.get("V2"), "naci.V2", errs, length=m) or v2_default
    for key, vals in (("V1", V1), ("V2", V2)):
        if any(v <= 0 for v in vals):
            errs.add(f"naci.{key}", "diagonal entries must be positive")
    N = _number(nraw, "N", "naci", errs, None, lo=1, integer=True)
    if N is not None and N > round(steps):
        errs.add("naci.N", f"{N} exceeds the {round(steps)} simulated steps")
    naci = NaciSettings(tuple(V1), tuple(V2), N)

    piraw = _section(raw.get("policy_iteration"), "policy_iteration", errs,
                     {"rounds", "samples_per_round"})
    nu = (n + m) * (n + m + 1) // 2
    pi = PolicyIterationSettings(
        _number(piraw, "rounds", "policy_iteration", errs, 5, lo=1, integer=True),
        _number(piraw, "samples_per_round", "policy_iteration", errs, None, lo=nu, integer=True))
    if mode is Mode.PI_BASELINE and pi.rounds * (pi.samples_per_round or nu) > round(steps):
        errs.add("duration", f"policy iteration needs {pi.rounds * (pi.samples_per_round or nu)} steps")

    output = raw.get("output", "out")
    if not isinstance(output, str):
        errs.add("output", "expected a path string")
        output = "out"

    if errs.items:
        raise ConfigError(errs.items)
    return ScenarioConfig(
        mode=mode, weights=weights, naci=naci, name=name, duration=duration, plant=plant,
        initial_state=tuple(float(v) for v in x0), trajectory=trajectory, tracking=tracking,
        rates=rates, tracker=tracker, optimizer=optimizer, uncertainty=uncertainty,
        dither=dither, learning=learning, policy_iteration=pi, output=output)


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


# -- serialization -------------------------------------------------------------


def _lists(obj):
    if isinstance(obj, tuple):
        return [_lists(v) for v in obj]
    return obj


def _rates_dict(r: RateSettings):
    return {"critic": r.critic, "actor": r.actor, "band": _lists(r.band), "seed": r.seed,
            "normalization": r.normalization}


def _loop_dict(l: LoopSettings):
    return {"enabled": l.enabled, "initial_gain": _lists(l.initial_gain),
            "initial_kernel": _lists(l.initial_kernel),
            **({"rates": _rates_dict(l.rates)} if l.rates is not None else {})}


def _trajectory_dict(t):
    if isinstance(t, Sinusoid):
        return {"kind": "sinusoid", "amplitude": t.amplitude, "period": t.period}
    if isinstance(t, DampedComposite):
        return {"kind": "damped_composite", "decay": t.decay,
                "terms": [{"amplitude": a, "frequency": w, "phase": p} for a, w, p in t.terms]}
    return {"kind": "constant", "level": t.level}


def config_to_dict(cfg: ScenarioConfig) -> dict:
    plant = {"Ts": cfg.plant.Ts}
    if cfg.plant.preset is not None:
        plant["preset"] = cfg.plant.preset
    else:
        plant["A"] = _lists(cfg.plant.A)
        plant["B"] = _lists(cfg.plant.B)
    return {
        "name": cfg.name,
        "mode": cfg.mode.value,
        "duration": cfg.duration,
        "plant": plant,
        "initial_state": _lists(cfg.initial_state),
        "trajectory": _trajectory_dict(cfg.trajectory),
        "tracking": {"state_index": cfg.tracking.state_index, "memory": cfg.tracking.memory,
                     "selector": _lists(cfg.tracking.selector)},
        "weights": {k: _lists(getattr(cfg.weights, k)) for k in ("Q", "R", "S", "M")},
        "rates": _rates_dict(cfg.rates),
        "tracker": _loop_dict(cfg.tracker),
        "optimizer": _loop_dict(cfg.optimizer),
        "uncertainty": {"amplitude": cfg.uncertainty.amplitude, "seed": cfg.uncertainty.seed,
                        "std_fraction": cfg.uncertainty.std_fraction,
                        "domain": cfg.uncertainty.domain},
        "dither": {"amplitude": cfg.dither.amplitude, "seed": cfg.dither.seed},
        "learning": dataclasses.asdict(cfg.learning),
        "naci": {"V1": list(cfg.naci.V1), "V2": list(cfg.naci.V2), "N": cfg.naci.N},
        "policy_iteration": dataclasses.asdict(cfg.policy_iteration),
        "output": cfg.output,
    }


def serialize_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=None)


__all__ = [
    "ScenarioConfig", "PlantSource", "TrackingSettings", "WeightSettings", "RateSettings",
    "LoopSettings", "DitherConfig", "LearningSettings", "NaciSettings",
    "PolicyIterationSettings", "parse_config", "load_config", "serialize_config",
    "config_to_dict", "PRESETS", "ConfigError",
]
