"""Quadratic Q-function kernels and their temporal-difference update laws.

A kernel H of dimension d defines Gamma(z) = 1/2 z^T H z.  The packed kernel
vector stores (2 - delta_ij) H_ij for i <= j in row-major upper-triangle
order, so Gamma(z) = 1/2 quad_basis(z) . kernel_vector(H) with every monomial
z_i z_j counted once.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DivergenceError

SYMMETRY_TOL = 1e-12


@functools.lru_cache(maxsize=None)
def triu_index(d: int):
    """Row/column indices of the upper triangle and the packing weights."""
    i, j = np.triu_indices(d)
    w = np.where(i == j, 1.0, 2.0)
    for a in (i, j, w):
        a.setflags(write=False)
    return i, j, w


def packed_length(d: int) -> int:
    return d * (d + 1) // 2


def symmetrize(H: np.ndarray) -> np.ndarray:
    return 0.5 * (H + H.T)


@dataclass(frozen=True, eq=False)
class QuadraticKernel:
    """Symmetric d x d kernel; rows/cols [0, split) are state-like, [split, d) control-like."""

    matrix: np.ndarray
    split: int

    def __post_init__(self):
        H = np.array(self.matrix, dtype=float)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ContractError(f"kernel must be square, got shape {H.shape}")
        if not 0 <= self.split <= H.shape[0]:
            raise ContractError(f"split {self.split} outside [0, {H.shape[0]}]")
        scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
        if H.size and np.max(np.abs(H - H.T)) > SYMMETRY_TOL * scale:
            raise ContractError("kernel matrix is not symmetric")
        H = symmetrize(H)
        H.setflags(write=False)
        object.__setattr__(self, "matrix", H)
        object.__setattr__(self, "split", int(self.split))

    @classmethod
    def zeros(cls, d: int, split: int) -> "QuadraticKernel":
        return cls(np.zeros((d, d)), split)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def xx(self):
        return self.matrix[: self.split, : self.split]

    @property
    def xu(self):
        return self.matrix[: self.split, self.split:]

    @property
    def ux(self):
        return self.matrix[self.split:, : self.split]

    @property
    def uu(self):
        return self.matrix[self.split:, self.split:]

    def __eq__(self, other):
        return (isinstance(other, QuadraticKernel) and self.split == other.split
                and np.array_equal(self.matrix, other.matrix))


def quad_basis(z) -> np.ndarray:
    z = np.asarray(z, dtype=float).reshape(-1)
    i, j, _ = triu_index(z.size)
    return z[i] * z[j]


def pack(H: np.ndarray) -> np.ndarray:
    i, j, w = triu_index(H.shape[0])
    return w * H[i, j]


def unpack(vec: np.ndarray, d: int) -> np.ndarray:
    i, j, w = triu_index(d)
    H = np.empty((d, d))
    vals = vec / w
    H[i, j] = vals
    H[j, i] = vals
    return H


def dim_from_packed(length: int) -> int:
    d = int(round((math.sqrt(8 * length + 1) - 1) / 2))
    if packed_length(d) != length:
        raise ContractError(f"{length} is not a triangular number")
    return d


def kernel_vector(kernel: QuadraticKernel) -> np.ndarray:
    return pack(kernel.matrix)


def kernel_from_vector(kvec, split: int) -> QuadraticKernel:
    kvec = np.asarray(kvec, dtype=float).reshape(-1)
    return QuadraticKernel(unpack(kvec, dim_from_packed(kvec.size)), split)


def _check_len(z, d, name="z"):
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.size != d:
        raise ContractError(f"{name} has length {z.size}, kernel dimension is {d}")
    return z


def evaluate_value(kernel: QuadraticKernel, z) -> float:
    z = _check_len(z, kernel.dim)
    return 0.5 * float(z @ kernel.matrix @ z)


@dataclass(frozen=True, eq=False)
class CostWeights:
    """Stage cost 1/2 (s^T W_s s + c^T W_c c) with both weights symmetric positive definite."""

    state_weight: np.ndarray
    control_weight: np.ndarray

    def __post_init__(self):
        ws = np.atleast_2d(np.array(self.state_weight, dtype=float))
        wc = np.atleast_2d(np.array(self.control_weight, dtype=float))
        for name, W in (("state_weight", ws), ("control_weight", wc)):
            if W.shape[0] != W.shape[1]:
                raise ContractError(f"{name} must be square, got {W.shape}")
            if not np.allclose(W, W.T, rtol=0, atol=1e-12 * max(1.0, np.max(np.abs(W)))):
                raise ContractError(f"{name} must be symmetric")
            if np.min(np.linalg.eigvalsh(W)) <= 0:
                raise ContractError(f"{name} must be positive definite")
            W.setflags(write=False)
        object.__setattr__(self, "state_weight", ws)
        object.__setattr__(self, "control_weight", wc)

    @property
    def split(self) -> int:
        return self.state_weight.shape[0]

    @property
    def dim(self) -> int:
        return self.state_weight.shape[0] + self.control_weight.shape[0]

    def kernel(self) -> QuadraticKernel:
        """The kernel whose value equals the stage cost itself."""
        d, s = self.dim, self.split
        H = np.zeros((d, d))
        H[:s, :s] = self.state_weight
        H[s:, s:] = self.control_weight
        return QuadraticKernel(H, s)


def stage_cost(weights: CostWeights, state_part, control_part) -> float:
    s = _check_len(state_part, weights.state_weight.shape[0], "state part")
    c = _check_len(control_part, weights.control_weight.shape[0], "control part")
    return 0.5 * float(s @ weights.state_weight @ s + c @ weights.control_weight @ c)


@dataclass(frozen=True, eq=False)
class Transition:
    z_now: np.ndarray
    z_next: np.ndarray
    stage_cost: float

    def __post_init__(self):
        a = np.asarray(self.z_now, dtype=float).reshape(-1)
        b = np.asarray(self.z_next, dtype=float).reshape(-1)
        if a.size != b.size:
            raise ContractError("z_now and z_next differ in length")
        object.__setattr__(self, "z_now", a)
        object.__setattr__(self, "z_next", b)
        object.__setattr__(self, "stage_cost", float(self.stage_cost))


def _check_rate(rate):
    if not 0 <= rate < 1:
        raise ContractError(f"learning rate must lie in [0, 1), got {rate}")


# Raw array kernels of the update laws; the engine calls these directly.

def direct_residual(H, z, target):
    return 0.5 * float(z @ H @ z) - target


def direct_step(H, z, residual, rate):
    if not math.isfinite(residual):
        raise DivergenceError("non-finite critic residual")
    if residual == 0 or rate == 0:
        return H
    return symmetrize(H - (rate * residual) * np.outer(z, z))


def modified_residual(hvec, b, cost):
    return 0.5 * float(b @ hvec) - cost


def modified_step(hvec, b, residual, rate):
    if not math.isfinite(residual):
        raise DivergenceError("non-finite critic residual")
    if residual == 0 or rate == 0:
        return hvec
    return hvec - (rate * residual) * b


def critic_update_direct(kernel: QuadraticKernel, tr: Transition, next_value: float,
                         rate: float) -> QuadraticKernel:
    """H <- H - rate (Gamma(z) - (cost + next_value)) z z^T, symmetrized."""
    _check_rate(rate)
    z = _check_len(tr.z_now, kernel.dim)
    r = direct_residual(kernel.matrix, z, tr.stage_cost + float(next_value))
    H = direct_step(kernel.matrix, z, r, rate)
    return kernel if H is kernel.matrix else QuadraticKernel(H, kernel.split)


def difference_basis(tr: Transition) -> np.ndarray:
    return quad_basis(tr.z_now) - quad_basis(tr.z_next)


def critic_update_modified(kvec, tr: Transition, rate: float) -> np.ndarray:
    """h <- h - rate (1/2 b.h - cost) b with b = basis(z_now) - basis(z_next)."""
    _check_rate(rate)
    h = np.asarray(kvec, dtype=float).reshape(-1)
    b = difference_basis(tr)
    if b.size != h.size:
        raise ContractError(f"transition basis has length {b.size}, kernel vector {h.size}")
    r = modified_residual(h, b, tr.stage_cost)
    return modified_step(h, b, r, rate).copy()


def is_positive_semidefinite(H, rtol: float = 1e-10) -> bool:
    w = np.linalg.eigvalsh(H)
    return bool(w[0] >= -rtol * max(1.0, abs(w[-1])))


def has_convex_minimizer(H, split: int, rtol: float = 1e-10) -> bool:
    """True when H is positive semidefinite and its control block positive definite.

    Tested through the Schur complement of the control block, which is cheaper
    than a full eigendecomposition inside learning loops.
    """
    huu = H[split:, split:]
    hxu = H[:split, split:]
    if huu.shape == (1, 1):
        if not huu[0, 0] > 0:
            return False
        schur = H[:split, :split] - np.outer(hxu[:, 0], hxu[:, 0]) / huu[0, 0]
    else:
        try:
            np.linalg.cholesky(huu)
        except np.linalg.LinAlgError:
            return False
        schur = H[:split, :split] - hxu @ np.linalg.solve(huu, hxu.T)
    if schur.size == 0:
        return True
    shift = rtol * max(1.0, float(np.max(np.abs(np.diag(H)))))
    try:
        np.linalg.cholesky(schur + shift * np.eye(split))
    except np.linalg.LinAlgError:
        return False
    return True


def proximal_rate(rate: float, curvature: float) -> float:
    """Step size of the implicit (proximal) form of a gradient step on a
    quadratic whose curvature along the update direction is ``curvature``.
    Equals ``rate`` to first order and never overshoots the exact minimizer."""
    return rate / (1.0 + rate * curvature)


__all__ = [
    "QuadraticKernel", "quad_basis", "kernel_vector", "kernel_from_vector", "evaluate_value",
    "CostWeights", "stage_cost", "Transition", "critic_update_direct", "critic_update_modified",
    "difference_basis", "is_positive_semidefinite", "has_convex_minimizer", "proximal_rate", "packed_length", "pack",
    "unpack", "symmetrize",
]
