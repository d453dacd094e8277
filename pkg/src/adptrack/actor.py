"""Linear feedback actors: greedy extraction from kernels and gradient tracking of targets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .critic import QuadraticKernel
from .errors import ContractError, DivergenceError, SingularKernelError

DEFAULT_RIDGE = 1e-9
SINGULAR_TOL = 1e-12
ROLES = ("optimizer", "tracker")


@dataclass(frozen=True, eq=False)
class LinearPolicy:
    """control = gain @ v; gain is m x p."""

    gain: np.ndarray
    role: str = "optimizer"

    def __post_init__(self):
        g = np.array(self.gain, dtype=float)
        if g.ndim == 1:
            g = g.reshape(1, -1)
        if g.ndim != 2:
            raise ContractError(f"gain must be a matrix, got shape {g.shape}")
        if not np.all(np.isfinite(g)):
            raise ContractError("gain has non-finite entries")
        if self.role not in ROLES:
            raise ContractError(f"role must be one of {ROLES}, got {self.role!r}")
        g.setflags(write=False)
        object.__setattr__(self, "gain", g)

    @classmethod
    def zeros(cls, m: int, p: int, role: str = "optimizer") -> "LinearPolicy":
        return cls(np.zeros((m, p)), role)

    @property
    def outputs(self) -> int:
        return self.gain.shape[0]

    @property
    def inputs(self) -> int:
        return self.gain.shape[1]

    def __eq__(self, other):
        return (isinstance(other, LinearPolicy) and self.role == other.role
                and np.array_equal(self.gain, other.gain))


def greedy_gain(H: np.ndarray, split: int, ridge: float = DEFAULT_RIDGE) -> np.ndarray:
    huu = H[split:, split:]
    hux = H[split:, :split]
    m = huu.shape[0]
    if ridge == 0:
        if m == 1:
            if abs(huu[0, 0]) < SINGULAR_TOL:
                raise SingularKernelError("control block of the kernel is singular")
            return -hux / huu[0, 0]
        if abs(np.linalg.det(huu)) < SINGULAR_TOL:
            raise SingularKernelError("control block of the kernel is singular")
        return -np.linalg.solve(huu, hux)
    if m == 1:
        return -hux / (huu[0, 0] + ridge)
    return -np.linalg.solve(huu + ridge * np.eye(m), hux)


def policy_from_kernel(kernel: QuadraticKernel, ridge: float = DEFAULT_RIDGE,
                       role: str = "optimizer") -> LinearPolicy:
    """gain = -(H_UU + ridge I)^-1 H_UX, the minimizer of the kernel over the control block."""
    if ridge < 0:
        raise ContractError("ridge must be non-negative")
    if kernel.split >= kernel.dim:
        raise ContractError("kernel has an empty control block")
    return LinearPolicy(greedy_gain(kernel.matrix, kernel.split, ridge), role)


def apply_policy(p: LinearPolicy, v) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != p.inputs:
        raise ContractError(f"policy expects {p.inputs} inputs, got {v.size}")
    return p.gain @ v


def actor_step(gain, v, target_gain, rate):
    err = (gain - target_gain) @ v
    if not np.all(np.isfinite(err)):
        raise DivergenceError("non-finite actor update")
    if rate == 0 or not np.any(err):
        return gain
    return gain - rate * np.outer(err, v)


def actor_update(p: LinearPolicy, v, target_policy: LinearPolicy, rate: float) -> LinearPolicy:
    """gain <- gain - rate (gain v - target v) v^T."""
    if not 0 <= rate < 1:
        raise ContractError(f"learning rate must lie in [0, 1), got {rate}")
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != p.inputs or target_policy.gain.shape != p.gain.shape:
        raise ContractError("policy, target and regressor dimensions disagree")
    g = actor_step(p.gain, v, target_policy.gain, rate)
    if g is p.gain:
        return p
    if not np.all(np.isfinite(g)):
        raise DivergenceError("non-finite actor update")
    return LinearPolicy(g, p.role)


__all__ = ["LinearPolicy", "policy_from_kernel", "apply_policy", "actor_update", "greedy_gain",
           "DEFAULT_RIDGE"]
