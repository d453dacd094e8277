"""Performance indices, pole mapping and Riccati / Lyapunov ground-truth oracles."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .actor import LinearPolicy
from .critic import QuadraticKernel
from .errors import AdmissibilityError, ContractError, ConvergenceError
from .plant import PlantModel

WING_NACI_V1 = (0.0006, 0.0174, 0.0208, 1.5625, 0.0483)
WING_NACI_V2 = (0.2268,)
WING_NACI_N = 10000


@dataclass(frozen=True, eq=False)
class NaciWeights:
    """Diagonal normalizations of states (V1) and total control (V2) over N samples."""

    V1: np.ndarray
    V2: np.ndarray
    N: int

    def __post_init__(self):
        V1 = np.atleast_2d(np.array(self.V1, dtype=float))
        V2 = np.atleast_2d(np.array(self.V2, dtype=float))
        # a 1-D list of diagonal entries is accepted too
        if V1.shape[0] == 1 and V1.shape[1] > 1:
            V1 = np.diag(V1[0])
        if V2.shape[0] == 1 and V2.shape[1] > 1:
            V2 = np.diag(V2[0])
        for name, V in (("V1", V1), ("V2", V2)):
            if V.shape[0] != V.shape[1] or np.any(V != np.diag(np.diag(V))):
                raise ContractError(f"{name} must be a diagonal matrix")
            if np.any(np.diag(V) <= 0):
                raise ContractError(f"{name} diagonal entries must be positive")
            V.setflags(write=False)
        if int(self.N) < 1:
            raise ContractError("N must be at least 1")
        object.__setattr__(self, "V1", V1)
        object.__setattr__(self, "V2", V2)
        object.__setattr__(self, "N", int(self.N))

    def __eq__(self, other):
        return (isinstance(other, NaciWeights) and self.N == other.N
                and np.array_equal(self.V1, other.V1) and np.array_equal(self.V2, other.V2))


def wing_naci_weights(N: int = WING_NACI_N) -> NaciWeights:
    return NaciWeights(np.diag(WING_NACI_V1), np.diag(WING_NACI_V2), N)


def _columns(trace_or_x, u_total=None):
    if u_total is None:
        return np.asarray(trace_or_x.x, dtype=float), np.asarray(trace_or_x.u_total, dtype=float)
    return np.asarray(trace_or_x, dtype=float), np.asarray(u_total, dtype=float)


def naci(trace, w: NaciWeights, u_total=None) -> float:
    """(1/N) sum_k [X_k; U_Tk]^T blockdiag(V1, V2) [X_k; U_Tk] over the first N samples.

    Accepts a trace (anything with ``x`` and ``u_total`` arrays) or the two
    arrays directly.
    """
    X, U = _columns(trace, u_total)
    X = X.reshape(X.shape[0], -1)
    U = U.reshape(U.shape[0], -1)
    if X.shape[0] < w.N:
        raise ContractError(f"trace has {X.shape[0]} samples, NACI needs {w.N}")
    if X.shape[1] != w.V1.shape[0] or U.shape[1] != w.V2.shape[0]:
        raise ContractError("NACI weights do not match trace dimensions")
    X, U = X[: w.N], U[: w.N]
    total = np.einsum("ki,ij,kj->", X, w.V1, X) + np.einsum("ki,ij,kj->", U, w.V2, U)
    return float(total / w.N)


def avg_accumulated_squared_error(trace_or_errors) -> np.ndarray:
    """a_k = (1/(k+1)) sum_{j<=k} e_j^2 for every step."""
    e = getattr(trace_or_errors, "error", trace_or_errors)
    e = np.asarray(e, dtype=float).reshape(-1)
    if e.size == 0:
        raise ContractError("empty error sequence")
    return np.cumsum(e * e) / np.arange(1, e.size + 1)


@dataclass(frozen=True, eq=False)
class PoleSet:
    """Continuous-time poles (rad/s); discrete eigenvalues at the origin map to -inf."""

    values: np.ndarray
    discrete: np.ndarray = field(default=None)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).reshape(-1)
        order = np.lexsort((v.imag, v.real))[::-1]
        object.__setattr__(self, "values", v[order])
        if self.discrete is not None:
            object.__setattr__(self, "discrete", np.asarray(self.discrete, dtype=complex)[order])

    @property
    def origin_count(self) -> int:
        """Number of discrete eigenvalues at z = 0 (reported as the -inf sentinel)."""
        return int(np.sum(np.isneginf(self.values.real)))

    @property
    def finite(self) -> np.ndarray:
        return self.values[np.isfinite(self.values.real)]

    def is_conjugate_symmetric(self, tol: float = 1e-9) -> bool:
        fin = self.finite
        return all(np.min(np.abs(fin - np.conj(p))) <= tol * max(1.0, abs(p)) for p in fin)

    def __len__(self):
        return self.values.size

    def __iter__(self):
        return iter(self.values)


def map_to_continuous(z, Ts: float) -> np.ndarray:
    z = np.asarray(z, dtype=complex).reshape(-1)
    out = np.empty_like(z)
    zero = np.abs(z) == 0
    out[zero] = complex(-np.inf, 0.0)
    out[~zero] = np.log(z[~zero]) / Ts
    return out


def closed_loop_poles(model: PlantModel, optimizer_gain: LinearPolicy | np.ndarray | None = None) -> PoleSet:
    """Eigenvalues of A + B K mapped to s = ln(z) / Ts; K = None or 0 gives the open loop."""
    K = np.zeros((model.m, model.n))
    if optimizer_gain is not None:
        K = optimizer_gain.gain if isinstance(optimizer_gain, LinearPolicy) else np.atleast_2d(
            np.asarray(optimizer_gain, dtype=float))
    if K.shape != (model.m, model.n):
        raise ContractError(f"gain shape {K.shape} does not match plant ({model.m}, {model.n})")
    z = np.linalg.eigvals(model.A + model.B @ K)
    return PoleSet(map_to_continuous(z, model.Ts), z)


def spectral_radius(M) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(np.atleast_2d(M)))))


def q_kernel_from_value(A, B, Q, R, P) -> QuadraticKernel:
    """Kernel of Q(x,u) = 1/2 (x'Qx + u'Ru) + 1/2 x+'P x+ with x+ = Ax + Bu."""
    n = A.shape[0]
    H = np.block([[Q + A.T @ P @ A, A.T @ P @ B], [B.T @ P @ A, R + B.T @ P @ B]])
    return QuadraticKernel(0.5 * (H + H.T), n)


def value_matrix(kernel: QuadraticKernel) -> np.ndarray:
    """P with 1/2 x'Px = min_u Gamma([x; u]) (Schur complement of the control block)."""
    return kernel.xx - kernel.xu @ np.linalg.solve(kernel.uu, kernel.ux)


def _arrays(A, B, Q, R):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float)
    B = B.reshape(A.shape[0], -1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if A.shape[0] != A.shape[1] or Q.shape != A.shape or R.shape != (B.shape[1],) * 2:
        raise ContractError("inconsistent A, B, Q, R dimensions")
    return A, B, Q, R


def riccati_iterates(A, B, Q, R, tol: float = 1e-10, max_iter: int = 1_000_000):
    """Yield the value-iteration sequence P_0 = 0, P_1, ... up to the fixed point.

    Iteration stops once the Frobenius step is below ``tol`` relative to max(1, |P|).
    """
    A, B, Q, R = _arrays(A, B, Q, R)
    P = np.zeros_like(Q)
    yield P
    for _ in range(max_iter):
        BP = B.T @ P
        Pn = Q + A.T @ P @ A - (BP @ A).T @ np.linalg.solve(R + BP @ B, BP @ A)
        Pn = 0.5 * (Pn + Pn.T)
        if not np.all(np.isfinite(Pn)):
            raise ConvergenceError("Riccati recursion diverged")
        done = np.linalg.norm(Pn - P) < tol * max(1.0, np.linalg.norm(Pn))
        P = Pn
        yield P
        if done:
            return
    raise ConvergenceError(f"Riccati recursion did not converge in {max_iter} iterations")


def riccati_oracle(A, B, Q, R, tol: float = 1e-10, max_iter: int = 1_000_000) -> QuadraticKernel:
    """Optimal Q-function kernel by value iteration on the Riccati map from P = 0."""
    P = None
    for P in riccati_iterates(A, B, Q, R, tol, max_iter):
        pass
    A, B, Q, R = _arrays(A, B, Q, R)
    return q_kernel_from_value(A, B, Q, R, P)


def policy_evaluation_oracle(A, B, K, Q, R, tol: float = 1e-10) -> QuadraticKernel:
    """Q-function kernel of the fixed policy u = K x.

    P_K solves P = Q + K'RK + (A+BK)' P (A+BK); a direct Lyapunov solve is
    used and its residual is checked against ``tol``.
    """
    A, B, Q, R = _arrays(A, B, Q, R)
    K = np.asarray(K, dtype=float).reshape(B.shape[1], A.shape[0])
    Acl = A + B @ K
    if spectral_radius(Acl) >= 1:
        raise AdmissibilityError(f"policy is not stabilizing (spectral radius {spectral_radius(Acl):.6g})")
    W = Q + K.T @ R @ K
    P = sla.solve_discrete_lyapunov(Acl.T, W)
    P = 0.5 * (P + P.T)
    resid = np.linalg.norm(W + Acl.T @ P @ Acl - P)
    if resid > max(tol, 1e-9 * np.linalg.norm(P)):
        raise ConvergenceError(f"Lyapunov residual {resid:.3g} exceeds tolerance")
    return q_kernel_from_value(A, B, Q, R, P)


def relative_frobenius_error(H, H_ref) -> float:
    H = getattr(H, "matrix", H)
    H_ref = getattr(H_ref, "matrix", H_ref)
    return float(np.linalg.norm(H - H_ref) / np.linalg.norm(H_ref))


def rms(values) -> float:
    v = np.asarray(values, dtype=float)
    return float(np.sqrt(np.mean(v * v)))


__all__ = [
    "NaciWeights", "wing_naci_weights", "naci", "avg_accumulated_squared_error", "PoleSet",
    "closed_loop_poles", "map_to_continuous", "spectral_radius", "riccati_iterates",
    "riccati_oracle", "policy_evaluation_oracle", "q_kernel_from_value", "value_matrix",
    "relative_frobenius_error", "rms",
]
