"""Discrete-time LTI plant, reference trajectories, error memory and model uncertainty."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import ContractError

# Lateral trim model of the flexible wing aircraft, sampled at 1 ms.
# State order: lateral velocity (m/s), roll rate, yaw rate, roll angle, yaw angle (deg).
FLEXIBLE_WING_A = (
    (0.9998, -0.0002, -0.0108, 0.0097, -0.0013),
    (-0.0015, 0.9789, 0.0074, 0.0, 0.0),
    (0.0003, 0.0037, 0.9979, 0.0, 0.0),
    (0.0, 0.0010, 0.0, 1.0, 0.0),
    (0.0, 0.0, 0.0010, 0.0, 1.0),
)
FLEXIBLE_WING_B = ((0.0,), (0.0036,), (0.0004,), (0.0,), (0.0,))
FLEXIBLE_WING_TS = 0.001
FLEXIBLE_WING_X0 = (40.0, 1.6, 0.8, -0.8, 0.2)
ROLL_ANGLE = 3


def _as_matrix(value, name, ncols=None):
    arr = np.array(value, dtype=float)
    if arr.ndim == 1 and ncols == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ContractError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class PlantModel:
    """X_{k+1} = A X_k + B u_k sampled every ``Ts`` seconds."""

    A: np.ndarray
    B: np.ndarray
    Ts: float

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B", ncols=1)
        if A.shape[0] != A.shape[1]:
            raise ContractError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise ContractError(f"B has {B.shape[0]} rows, A has dimension {A.shape[0]}")
        if not (self.Ts > 0 and math.isfinite(self.Ts)):
            raise ContractError(f"Ts must be positive, got {self.Ts}")
        A.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Ts", float(self.Ts))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def __eq__(self, other):
        if not isinstance(other, PlantModel):
            return NotImplemented
        return (self.Ts == other.Ts and np.array_equal(self.A, other.A)
                and np.array_equal(self.B, other.B))

    def __hash__(self):
        return hash((self.A.tobytes(), self.B.tobytes(), self.Ts))


def flexible_wing_trim(Ts: float = FLEXIBLE_WING_TS) -> PlantModel:
    """The flexible-wing lateral model, resampled when ``Ts`` differs from 1 ms."""
    model = PlantModel(FLEXIBLE_WING_A, FLEXIBLE_WING_B, FLEXIBLE_WING_TS)
    if Ts != FLEXIBLE_WING_TS:
        model = resample(model, Ts)
    return model


def step_plant(model: PlantModel, x, u_total) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u_total, dtype=float))
    if x.shape != (model.n,):
        raise ContractError(f"state has shape {x.shape}, expected ({model.n},)")
    if u.shape != (model.m,):
        raise ContractError(f"control has shape {u.shape}, expected ({model.m},)")
    return model.A @ x + model.B @ u


# -- continuous-time view ----------------------------------------------------

@functools.lru_cache(maxsize=32)
def _continuous_cached(a_bytes, b_bytes, n, m, Ts):
    A = np.frombuffer(a_bytes).reshape(n, n)
    B = np.frombuffer(b_bytes).reshape(n, m)
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = A
    aug[:n, n:] = B
    aug[n:, n:] = np.eye(m)
    L = sla.logm(aug)
    if np.iscomplexobj(L):
        if np.max(np.abs(L.imag)) > 1e-8 * max(1.0, np.max(np.abs(L.real))):
            raise ContractError("plant has no real matrix logarithm (negative real eigenvalue?)")
        L = L.real
    L = L / Ts
    Ac, Bc = L[:n, :n].copy(), L[:n, n:].copy()
    Ac.setflags(write=False)
    Bc.setflags(write=False)
    return Ac, Bc


def continuous_matrices(model: PlantModel):
    """(Ac, Bc) whose zero-order-hold discretization at model.Ts gives (A, B)."""
    A = np.ascontiguousarray(model.A)
    B = np.ascontiguousarray(model.B)
    return _continuous_cached(A.tobytes(), B.tobytes(), model.n, model.m, model.Ts)


def discretize(Ac, Bc, Ts: float) -> PlantModel:
    """Zero-order-hold discretization via the augmented matrix exponential."""
    Ac = np.asarray(Ac, dtype=float)
    Bc = _as_matrix(Bc, "Bc", ncols=1)
    n, m = Bc.shape
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = Ac
    aug[:n, n:] = Bc
    E = sla.expm(aug * Ts)
    return PlantModel(E[:n, :n], E[:n, n:], Ts)


def resample(model: PlantModel, Ts: float) -> PlantModel:
    if Ts == model.Ts:
        return model
    Ac, Bc = continuous_matrices(model)
    return discretize(Ac, Bc, Ts)


# -- uncertainty ---------------------------------------------------------------

@dataclass(frozen=True)
class UncertaintyConfig:
    """Per-entry multiplicative perturbation a -> a(1 + delta).

    delta ~ N(0, (std_fraction * amplitude)^2) clipped to [-amplitude, amplitude].
    ``domain`` selects whether the continuous-time matrices (re-discretized
    afterwards) or the discrete matrices are perturbed.
    """

    amplitude: float = 0.0
    seed: int = 0
    std_fraction: float = 0.5
    domain: str = "continuous"

    def __post_init__(self):
        if not 0.0 <= self.amplitude < 1.0:
            raise ContractError(f"uncertainty amplitude must lie in [0, 1), got {self.amplitude}")
        if self.std_fraction <= 0:
            raise ContractError("std_fraction must be positive")
        if self.domain not in ("continuous", "discrete"):
            raise ContractError(f"unknown uncertainty domain {self.domain!r}")

    @property
    def sigma(self) -> float:
        return self.amplitude * self.std_fraction


def perturbation_draws(cfg: UncertaintyConfig, step: int, n: int, m: int):
    """The (dA, dB) relative deviations used at ``step``; pure in (seed, step)."""
    rng = np.random.default_rng([int(cfg.seed), int(step)])
    raw = rng.normal(0.0, cfg.sigma, size=n * n + n * m)
    raw = np.clip(raw, -cfg.amplitude, cfg.amplitude)
    return raw[: n * n].reshape(n, n), raw[n * n:].reshape(n, m)


def perturb_model(nominal: PlantModel, cfg: UncertaintyConfig, step: int) -> PlantModel:
    if cfg.amplitude == 0:
        return nominal
    dA, dB = perturbation_draws(cfg, step, nominal.n, nominal.m)
    if cfg.domain == "discrete":
        return PlantModel(nominal.A * (1 + dA), nominal.B * (1 + dB), nominal.Ts)
    Ac, Bc = continuous_matrices(nominal)
    return discretize(Ac * (1 + dA), Bc * (1 + dB), nominal.Ts)


# -- reference trajectories ------------------------------------------------------

@dataclass(frozen=True)
class Sinusoid:
    amplitude: float
    period: float

    def __post_init__(self):
        if not self.period > 0:
            raise ContractError(f"period must be positive, got {self.period}")

    def value(self, t):
        return self.amplitude * np.sin(2 * np.pi * np.asarray(t, dtype=float) / self.period)


@dataclass(frozen=True)
class DampedComposite:
    """sum_i a_i * {sin|cos}(w_i t), scaled by exp(-decay * t)."""

    terms: tuple
    decay: float = 0.0

    def __post_init__(self):
        terms = tuple((float(a), float(w), str(p)) for a, w, p in self.terms)
        for _, _, phase in terms:
            if phase not in ("sin", "cos"):
                raise ContractError(f"term phase must be 'sin' or 'cos', got {phase!r}")
        if self.decay < 0:
            raise ContractError(f"decay rate must be non-negative, got {self.decay}")
        object.__setattr__(self, "terms", terms)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        total = np.zeros_like(t)
        for amp, omega, phase in self.terms:
            total = total + amp * (np.sin(omega * t) if phase == "sin" else np.cos(omega * t))
        return total * np.exp(-self.decay * t)


@dataclass(frozen=True)
class Constant:
    level: float

    def value(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.level)


TrajectorySpec = Sinusoid | DampedComposite | Constant

NOMINAL_TRAJECTORY = Sinusoid(25.0, 10.0)
UNCERTAIN_TRAJECTORY = DampedComposite(
    ((25.0, 6 * np.pi / 10, "sin"), (15.0, 16 * np.pi / 10, "cos")), decay=0.3)


def reference_signal(spec, t):
    """Closed-form reference at time ``t`` (scalar or array)."""
    out = spec.value(t)
    return float(out) if np.ndim(out) == 0 else out


def peak_amplitude(spec, duration: float, resolution: float = 1e-4) -> float:
    """Largest |reference| on a dense grid over [0, duration]."""
    t = np.arange(0.0, duration + resolution / 2, resolution)
    return float(np.max(np.abs(spec.value(t))))


# -- tracking error memory -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ErrorWindow:
    """Newest-first memory [e_k, e_{k-1}, ..., e_{k-depth}] of tracking errors."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.array(self.samples, dtype=float).reshape(-1)
        if s.size < 1:
            raise ContractError("error window needs at least one sample")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @classmethod
    def zeros(cls, depth: int = 2) -> "ErrorWindow":
        if depth < 0:
            raise ContractError("memory depth must be non-negative")
        return cls(np.zeros(depth + 1))

    @property
    def depth(self) -> int:
        return self.samples.size - 1

    def __eq__(self, other):
        return isinstance(other, ErrorWindow) and np.array_equal(self.samples, other.samples)


def shift_in(samples: np.ndarray, newest: float) -> np.ndarray:
    out = np.empty_like(samples)
    out[0] = newest
    out[1:] = samples[:-1]
    return out


def push_error(window: ErrorWindow, reference: float, measured: float):
    """Record e = reference - measured; returns (new window, E_k)."""
    E = shift_in(window.samples, float(reference) - float(measured))
    new = ErrorWindow(E)
    return new, new.samples.copy()


__all__ = [
    "PlantModel", "flexible_wing_trim", "step_plant", "continuous_matrices", "discretize",
    "resample", "UncertaintyConfig", "perturbation_draws", "perturb_model", "Sinusoid",
    "DampedComposite", "Constant", "TrajectorySpec", "reference_signal", "peak_amplitude",
    "ErrorWindow", "push_error", "NOMINAL_TRAJECTORY", "UNCERTAIN_TRAJECTORY",
    "FLEXIBLE_WING_A", "FLEXIBLE_WING_B", "FLEXIBLE_WING_TS", "FLEXIBLE_WING_X0", "ROLL_ANGLE",
]
