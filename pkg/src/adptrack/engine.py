"""Online dual-loop learning: direct and modified value iteration, policy iteration.

Per environment step k (see ``run_episode``):

1. read the reference, push the tracking error, form E_k;
2. C_k = g E_k from the tracker actor and, with the optimizer active,
   U_k = K X_k; U_T = U_k + sel (C_k + d_k) with exploration dither d_k;
3. X_{k+1} = A_k X_k + B_k U_T on the (possibly perturbed) plant;
4. next-step controls from the current actors;
5. one critic update per active loop (direct form for *1 modes, modified
   difference form for *2 modes);
6. one actor update per active loop toward the greedy gain of its critic;
7. log the step.

Learning rates pass through an implicit (proximal) normalization
rate / (1 + rate * curvature) unless ``rates.normalization`` is ``none``;
for small signals this is the literal update law.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from .actor import LinearPolicy, actor_step, greedy_gain
from .critic import (QuadraticKernel, direct_residual, direct_step, has_convex_minimizer,
                     modified_residual, modified_step, pack, packed_length, proximal_rate,
                     symmetrize, triu_index, unpack)
from .errors import ContractError, DivergenceError, ExcitationError, SingularKernelError
from .modes import Mode
from .plant import PlantModel, perturb_model

DITHER_BLOCK = 4096


# -- excitation and rate streams ---------------------------------------------------

@functools.lru_cache(maxsize=64)
def _dither_block(seed: int, block: int) -> np.ndarray:
    out = np.random.default_rng([int(seed), int(block)]).standard_normal(DITHER_BLOCK)
    out.setflags(write=False)
    return out


def dither_signal(cfg, step: int) -> float:
    """Zero-mean Gaussian exploration of standard deviation ``cfg.amplitude``.

    A pure function of (seed, step).
    """
    if cfg.amplitude == 0:
        return 0.0
    block, offset = divmod(int(step), DITHER_BLOCK)
    return float(cfg.amplitude * _dither_block(cfg.seed, block)[offset])


def dither_sequence(cfg, steps: int) -> np.ndarray:
    """dither_signal(cfg, k) for k = 0 .. steps-1."""
    if cfg.amplitude == 0 or steps == 0:
        return np.zeros(steps)
    nblocks = -(-steps // DITHER_BLOCK)
    raw = np.concatenate([_dither_block(cfg.seed, b) for b in range(nblocks)])
    return cfg.amplitude * raw[:steps]


def rate_streams(rates, steps: int):
    """Per-step (critic, actor) learning rates."""
    if rates.band is None:
        return np.full(steps, float(rates.critic)), np.full(steps, float(rates.actor))
    lo, hi = rates.band
    draws = np.random.default_rng(int(rates.seed)).uniform(lo, hi, size=(steps, 2))
    return draws[:, 0].copy(), draws[:, 1].copy()


def check_convergence(prev_kernel, next_kernel, epsilon: float) -> bool:
    """True iff the Frobenius norm of the kernel change is at most ``epsilon``."""
    a = getattr(prev_kernel, "matrix", prev_kernel)
    b = getattr(next_kernel, "matrix", next_kernel)
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ContractError(f"kernel shapes differ: {a.shape} vs {b.shape}")
    return bool(np.linalg.norm(a - b) <= epsilon)


# -- containers --------------------------------------------------------------------

@dataclass
class LearnerState:
    optimizer_kernel: QuadraticKernel
    tracker_kernel: QuadraticKernel
    optimizer_actor: LinearPolicy
    tracker_actor: LinearPolicy
    rates: dict
    epsilon: float
    iteration: int = 0


@dataclass
class LearningTrace:
    """Per-step log of one episode.

    Weight columns hold the values *after* the step's update, so the last row
    carries the final weights; ``gamma_hat``/``xi_hat`` are the critics'
    estimates at the step's stacked vector before the update.
    """

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    c: np.ndarray
    u_total: np.ndarray
    reference: np.ndarray
    error: np.ndarray
    gamma_hat: np.ndarray
    xi_hat: np.ndarray
    tracker_gain: np.ndarray
    optimizer_gain: np.ndarray
    tracker_kernel: np.ndarray
    optimizer_kernel: np.ndarray
    metadata: dict = field(default_factory=dict)
    rounds: list = field(default_factory=list)
    final_state: LearnerState | None = None

    def __len__(self):
        return self.t.size

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def m(self) -> int:
        return self.u.shape[1]

    def truncated(self, steps: int) -> "LearningTrace":
        cols = {name: getattr(self, name)[:steps] for name in TRACE_ARRAYS}
        return LearningTrace(**cols, metadata=dict(self.metadata), rounds=list(self.rounds),
                             final_state=self.final_state)

    def tracker_gain_deltas(self) -> np.ndarray:
        """Norm of the tracker-gain change made at each step."""
        g0 = np.asarray(self.metadata.get("initial_tracker_gain", self.tracker_gain[:1]), dtype=float)
        g = np.vstack([g0.reshape(1, -1), self.tracker_gain])
        return np.linalg.norm(np.diff(g, axis=0), axis=1)

    def final_tracker_gain(self) -> np.ndarray:
        return self.tracker_gain[-1].copy()

    def final_optimizer_gain(self) -> np.ndarray:
        return self.optimizer_gain[-1].reshape(self.m, self.n).copy()

    def final_kernel(self, which: str) -> np.ndarray:
        col = self.tracker_kernel if which == "tracker" else self.optimizer_kernel
        d = int(round((np.sqrt(8 * col.shape[1] + 1) - 1) / 2))
        i, j, _ = triu_index(d)
        H = np.empty((d, d))
        H[i, j] = col[-1]
        H[j, i] = col[-1]
        return H


TRACE_ARRAYS = ("t", "x", "u", "c", "u_total", "reference", "error", "gamma_hat", "xi_hat",
                "tracker_gain", "optimizer_gain", "tracker_kernel", "optimizer_kernel")


def _allocate(steps, n, m, p):
    dE, dX = p + 1, n + m
    return dict(
        t=np.zeros(steps), x=np.zeros((steps, n)), u=np.zeros((steps, m)), c=np.zeros(steps),
        u_total=np.zeros((steps, m)), reference=np.zeros(steps), error=np.zeros(steps),
        gamma_hat=np.zeros(steps), xi_hat=np.zeros(steps), tracker_gain=np.zeros((steps, p)),
        optimizer_gain=np.zeros((steps, m * n)),
        tracker_kernel=np.zeros((steps, packed_length(dE))),
        optimizer_kernel=np.zeros((steps, packed_length(dX))))


# -- scenario resolution --------------------------------------------------------------

@dataclass
class _Loop:
    """Mutable learner for one loop (confined to a single episode)."""

    H: np.ndarray
    gain: np.ndarray
    split: int
    critic_rates: np.ndarray
    actor_rates: np.ndarray
    proximal: bool
    algorithm: int
    ridge: float
    guard: bool
    holds: int = 0
    singular: int = 0

    def __post_init__(self):
        self.h = pack(self.H)
        self.iu = triu_index(self.H.shape[0])

    def value(self, z):
        return 0.5 * float(z @ self.H @ z)

    def update(self, k, z, z_next, cost, v):
        """One critic then one actor step; returns the Frobenius kernel change."""
        change = 0.0
        rc = self.critic_rates[k]
        try:
            if rc > 0 and self.algorithm == 1:
                r = direct_residual(self.H, z, cost + 0.5 * float(z_next @ self.H @ z_next))
                zz = float(z @ z)
                a = proximal_rate(rc, 0.5 * zz * zz) if self.proximal else rc
                self.H = direct_step(self.H, z, r, a)
                change = abs(a * r) * zz
            elif rc > 0:
                i, j, _ = self.iu
                b = z[i] * z[j] - z_next[i] * z_next[j]
                r = modified_residual(self.h, b, cost)
                a = proximal_rate(rc, 0.5 * float(b @ b)) if self.proximal else rc
                self.h = modified_step(self.h, b, r, a)
                H = unpack(self.h, self.H.shape[0])
                change = float(np.linalg.norm(H - self.H))
                self.H = H
            ra = self.actor_rates[k]
            if ra > 0:
                a = proximal_rate(ra, float(v @ v)) if self.proximal else ra
                self.gain = actor_step(self.gain, v, self.target(), a)
        except DivergenceError as exc:
            raise DivergenceError(str(exc), k) from None
        return change

    def target(self):
        H, s = self.H, self.split
        if self.guard and not has_convex_minimizer(H, s):
            self.holds += 1
            return self.gain
        try:
            return greedy_gain(H, s, self.ridge)
        except SingularKernelError:
            self.singular += 1
            return self.gain


def _initial_kernel(spec, weights):
    if isinstance(spec, str):
        if spec == "stage":
            return weights.copy()
        return np.zeros_like(weights)
    return symmetrize(np.array(spec, dtype=float))


def _stage_kernel(W_state, W_control):
    s, c = W_state.shape[0], W_control.shape[0]
    H = np.zeros((s + c, s + c))
    H[:s, :s] = W_state
    H[s:, s:] = W_control
    return H


@dataclass
class _Resolved:
    plant: PlantModel
    steps: int
    x0: np.ndarray
    refs: np.ndarray
    idx: int
    p: int
    sel: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    S: np.ndarray
    M: np.ndarray
    dither: np.ndarray
    tracker: _Loop
    optimizer: _Loop
    tracker_on: bool
    optimizer_on: bool


def _resolve(mode: Mode, sc, steps=None) -> _Resolved:
    plant = sc.plant.build()
    n, m = plant.n, plant.m
    steps = sc.steps if steps is None else steps
    x0 = np.array(sc.initial_state, dtype=float)
    if x0.shape != (n,):
        raise ContractError(f"initial state has {x0.size} entries, plant has {n}")
    p = sc.tracking.memory + 1
    Ts = plant.Ts
    refs = np.atleast_1d(sc.trajectory.value(np.arange(steps + 1) * Ts)).astype(float)
    sel = np.ones(m) if sc.tracking.selector is None else np.array(sc.tracking.selector, dtype=float)
    Q, R = np.array(sc.weights.Q, dtype=float), np.array(sc.weights.R, dtype=float)
    S, M = np.array(sc.weights.S, dtype=float), np.array(sc.weights.M, dtype=float)
    if Q.shape != (n, n) or R.shape != (m, m) or S.shape != (p, p) or M.shape != (1, 1):
        raise ContractError("weight dimensions do not match the plant and error memory")
    ls = sc.learning
    guard = ls.target_guard == "psd"

    def loop(settings, W, split, gain_shape):
        rates = settings.rates or sc.rates
        crit, act = rate_streams(rates, steps)
        g0 = np.zeros(gain_shape) if settings.initial_gain is None else \
            np.array(settings.initial_gain, dtype=float).reshape(gain_shape)
        return _Loop(_initial_kernel(settings.initial_kernel, W), g0, split, crit, act,
                     rates.normalization == "proximal", mode.algorithm, ls.ridge, guard)

    tracker = loop(sc.tracker, _stage_kernel(S, M), p, (1, p))
    optimizer = loop(sc.optimizer, _stage_kernel(Q, R), n, (m, n))
    return _Resolved(plant, steps, x0, refs, sc.tracking.state_index, p, sel, Q, R, S, M,
                     dither_sequence(sc.dither, steps), tracker, optimizer,
                     sc.tracker.enabled, mode.optimizer_active and sc.optimizer.enabled)


def _metadata(mode, sc, rs: _Resolved):
    return {
        "name": sc.name,
        "mode": mode.value,
        "config_hash": sc.config_hash(),
        "seeds": {"uncertainty": sc.uncertainty.seed, "dither": sc.dither.seed,
                  "rates": sc.rates.seed},
        "Ts": rs.plant.Ts,
        "n": rs.plant.n,
        "m": rs.plant.m,
        "error_memory": rs.p - 1,
        "tracked_state": rs.idx,
        "initial_tracker_gain": rs.tracker.gain.reshape(-1).tolist(),
        "initial_optimizer_gain": rs.optimizer.gain.reshape(-1).tolist(),
        "converged": False,
        "converged_step": None,
    }


def _final_state(rs: _Resolved, sc, steps_done):
    return LearnerState(
        optimizer_kernel=QuadraticKernel(rs.optimizer.H, rs.optimizer.split),
        tracker_kernel=QuadraticKernel(rs.tracker.H, rs.tracker.split),
        optimizer_actor=LinearPolicy(rs.optimizer.gain, "optimizer"),
        tracker_actor=LinearPolicy(rs.tracker.gain, "tracker"),
        rates={"tracker": sc.tracker.rates or sc.rates, "optimizer": sc.optimizer.rates or sc.rates},
        epsilon=sc.learning.epsilon,
        iteration=steps_done)


# -- online episodes -------------------------------------------------------------------

def run_episode(mode, scenario) -> LearningTrace:
    """Run one online learning episode; see the module docstring for the step order.

    Raises DivergenceError (with ``step`` and the partial ``trace``) when states
    or weights become non-finite.
    """
    mode = Mode(mode)
    if mode is Mode.PI_BASELINE:
        return run_policy_iteration(scenario)
    sc = scenario
    rs = _resolve(mode, sc)
    plant, steps = rs.plant, rs.steps
    n, m, p = plant.n, plant.m, rs.p
    A, B = plant.A, plant.B
    perturbed = sc.uncertainty.amplitude > 0
    trk, opt = rs.tracker, rs.optimizer
    trk_on, opt_on = rs.tracker_on, rs.optimizer_on
    idx, refs, sel, dith = rs.idx, rs.refs, rs.sel, rs.dither
    Q, R, S, Mw = rs.Q, rs.R, rs.S, float(rs.M[0, 0])
    Ts = plant.Ts
    eps, window = sc.learning.epsilon, sc.learning.window

    log = _allocate(steps, n, m, p)
    meta = _metadata(mode, sc, rs)
    ti, tj, _ = triu_index(p + 1)
    oi, oj, _ = triu_index(n + m)

    x = rs.x0.copy()
    E = np.zeros(p)
    zero_u = np.zeros(m)
    quiet = 0
    k_done = steps
    # non-finite values are caught explicitly and raised as DivergenceError
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(steps):
                if perturbed:
                    pk = perturb_model(plant, sc.uncertainty, k)
                    A, B = pk.A, pk.B
                e = refs[k] - x[idx]
                E = np.concatenate(([e], E[:-1]))
                c = float(trk.gain[0] @ E) if trk_on else 0.0
                u = zero_u
                if opt_on:
                    u = opt.gain @ x
                act = c + dith[k]
                ut = u + sel * act
                x_next = A @ x + B @ ut
                if not np.all(np.isfinite(x_next)):
                    raise DivergenceError("non-finite plant state", k)
                E_next = np.concatenate(([refs[k + 1] - x_next[idx]], E[:-1]))

                zE = np.append(E, act)
                zX = np.concatenate((x, ut))
                log["xi_hat"][k] = trk.value(zE)
                log["gamma_hat"][k] = opt.value(zX)

                dT = dO = 0.0
                if trk_on:
                    zE_next = np.append(E_next, trk.gain[0] @ E_next)
                    cost = 0.5 * (float(E @ S @ E) + Mw * act * act)
                    dT = trk.update(k, zE, zE_next, cost, E)
                if opt_on:
                    zX_next = np.concatenate((x_next, opt.gain @ x_next))
                    cost = 0.5 * (float(x @ Q @ x) + float(ut @ R @ ut))
                    dO = opt.update(k, zX, zX_next, cost, x)

                log["t"][k] = k * Ts
                log["x"][k] = x
                log["u"][k] = u
                log["c"][k] = c
                log["u_total"][k] = ut
                log["reference"][k] = refs[k]
                log["error"][k] = e
                log["tracker_gain"][k] = trk.gain[0]
                log["optimizer_gain"][k] = opt.gain.reshape(-1)
                log["tracker_kernel"][k] = trk.H[ti, tj]
                log["optimizer_kernel"][k] = opt.H[oi, oj]

                quiet = quiet + 1 if (dT <= eps and dO <= eps) else 0
                if quiet >= window and not meta["converged"]:
                    meta["converged"] = True
                    meta["converged_step"] = k
                    if sc.learning.stop_on_convergence:
                        k_done = k + 1
                        break
                x = x_next
    except DivergenceError as exc:
        if exc.step is None:
            exc = DivergenceError(str(exc), k)
        meta["diverged_step"] = exc.step
        exc.trace = _finish(log, meta, rs, sc, exc.step)
        raise exc
    return _finish(log, meta, rs, sc, k_done)


def _finish(log, meta, rs, sc, steps_done):
    meta["steps"] = steps_done
    meta["guard_holds"] = {"tracker": rs.tracker.holds, "optimizer": rs.optimizer.holds}
    meta["singular_kernels"] = {"tracker": rs.tracker.singular, "optimizer": rs.optimizer.singular}
    cols = {name: arr[:steps_done] for name, arr in log.items()}
    state = None
    if np.all(np.isfinite(rs.tracker.H)) and np.all(np.isfinite(rs.optimizer.H)) \
            and np.all(np.isfinite(rs.tracker.gain)) and np.all(np.isfinite(rs.optimizer.gain)):
        state = _final_state(rs, sc, steps_done)
    return LearningTrace(**cols, metadata=meta, final_state=state)


# -- policy iteration baseline ---------------------------------------------------------

@dataclass
class RoundRecord:
    index: int
    start_step: int
    end_step: int
    evaluated_gain: np.ndarray
    kernel: QuadraticKernel
    improved_gain: np.ndarray


def _solve_kernel(rows, targets, d, step):
    Phi = np.asarray(rows)
    nu = packed_length(d)
    if np.linalg.matrix_rank(Phi) < nu:
        raise ExcitationError(
            f"regression matrix has rank {np.linalg.matrix_rank(Phi)} < {nu}; increase the dither",
            step)
    h, *_ = np.linalg.lstsq(0.5 * Phi, np.asarray(targets), rcond=None)
    return unpack(h, d)


def run_policy_iteration(scenario) -> LearningTrace:
    """Optimizer-loop policy iteration with nu-sample least-squares evaluation.

    Each round collects ``samples_per_round`` (default nu = d(d+1)/2)
    transitions under the current gain plus dither, solves
    1/2 [basis(z_j) - basis(z_{j+1})] . h = O(x_j, u_j) for the kernel vector,
    and improves the gain greedily.  The tracker, if enabled, acts with its
    fixed initial gain.  ``trace.rounds`` holds one RoundRecord per round.
    """
    sc = scenario
    mode = Mode.PI_BASELINE
    rs = _resolve(mode, sc)
    plant = rs.plant
    n, m, p = plant.n, plant.m, rs.p
    d = n + m
    nu = packed_length(d)
    per_round = sc.policy_iteration.samples_per_round or nu
    rounds = sc.policy_iteration.rounds
    if rounds * per_round > rs.steps:
        raise ContractError(f"policy iteration needs {rounds * per_round} steps, scenario has {rs.steps}")
    steps = rounds * per_round
    A, B = plant.A, plant.B
    opt, trk = rs.optimizer, rs.tracker
    K = opt.gain.copy()
    H = opt.H.copy()
    oi, oj, _ = triu_index(d)
    ti, tj, _ = triu_index(p + 1)
    log = _allocate(steps, n, m, p)
    meta = _metadata(mode, sc, rs)
    records = []
    x = rs.x0.copy()
    E = np.zeros(p)
    rows, targets = [], []
    start = 0
    for k in range(steps):
        if sc.uncertainty.amplitude > 0:
            pk = perturb_model(plant, sc.uncertainty, k)
            A, B = pk.A, pk.B
        e = rs.refs[k] - x[rs.idx]
        E = np.concatenate(([e], E[:-1]))
        c = float(trk.gain[0] @ E) if rs.tracker_on else 0.0
        u = K @ x
        ut = u + rs.sel * (c + rs.dither[k])
        x_next = A @ x + B @ ut
        if not np.all(np.isfinite(x_next)):
            raise DivergenceError("non-finite plant state", k)
        z = np.concatenate((x, ut))
        z_next = np.concatenate((x_next, K @ x_next))
        rows.append(z[oi] * z[oj] - z_next[oi] * z_next[oj])
        targets.append(0.5 * (float(x @ rs.Q @ x) + float(ut @ rs.R @ ut)))
        log["t"][k] = k * plant.Ts
        log["x"][k] = x
        log["u"][k] = u
        log["c"][k] = c
        log["u_total"][k] = ut
        log["reference"][k] = rs.refs[k]
        log["error"][k] = e
        log["gamma_hat"][k] = 0.5 * float(z @ H @ z)
        if len(rows) == per_round:
            H = _solve_kernel(rows, targets, d, k)
            K_new = greedy_gain(H, n, sc.learning.ridge)
            if not np.all(np.isfinite(K_new)):
                raise DivergenceError("non-finite policy improvement", k)
            records.append(RoundRecord(len(records), start, k, K.copy(), QuadraticKernel(H, n),
                                       K_new.copy()))
            K = K_new
            rows, targets = [], []
            start = k + 1
        log["tracker_gain"][k] = trk.gain[0]
        log["optimizer_gain"][k] = K.reshape(-1)
        log["tracker_kernel"][k] = trk.H[ti, tj]
        log["optimizer_kernel"][k] = H[oi, oj]
        x = x_next
    opt.H, opt.gain = H, K
    meta["steps"] = steps
    meta["rounds"] = len(records)
    trace = LearningTrace(**log, metadata=meta, rounds=records,
                          final_state=_final_state(rs, sc, steps))
    return trace


# -- exact batch value iteration -------------------------------------------------------

def collect_transitions(scenario, steps=None):
    """Roll out the initial optimizer gain plus dither; returns (X, U, X_next)."""
    rs = _resolve(Mode.PI_BASELINE, scenario, steps)
    plant = rs.plant
    K = rs.optimizer.gain
    X = np.zeros((rs.steps, plant.n))
    U = np.zeros((rs.steps, plant.m))
    Xn = np.zeros_like(X)
    x = rs.x0.copy()
    for k in range(rs.steps):
        u = K @ x + rs.sel * rs.dither[k]
        xn = plant.A @ x + plant.B @ u
        X[k], U[k], Xn[k] = x, u, xn
        x = xn
    return X, U, Xn


def batch_value_iteration(X, U, X_next, Q, R, iterations: int, ridge: float = 1e-9):
    """Exact least-squares value iteration from the zero kernel on a fixed batch.

    H^{r+1} fits 1/2 z^T H z = O(x, u) + Gamma^r(x', K_r x') with
    K_r = policy_from_kernel(H^r).  Returns [H^0, H^1, ..., H^iterations].
    """
    X, U, X_next = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (X, U, X_next))
    n, m = X.shape[1], U.shape[1]
    d = n + m
    Q, R = np.atleast_2d(Q), np.atleast_2d(R)
    i, j, _ = triu_index(d)
    Z = np.hstack([X, U])
    Phi = 0.5 * Z[:, i] * Z[:, j]
    if np.linalg.matrix_rank(Phi) < packed_length(d):
        raise ExcitationError("batch does not excite every kernel entry")
    cost = 0.5 * (np.einsum("ki,ij,kj->k", X, Q, X) + np.einsum("ki,ij,kj->k", U, R, U))
    kernels = [np.zeros((d, d))]
    for _ in range(iterations):
        H = kernels[-1]
        K = greedy_gain(H, n, ridge)
        Zn = np.hstack([X_next, X_next @ K.T])
        nxt = 0.5 * np.einsum("ki,ij,kj->k", Zn, H, Zn)
        h, *_ = np.linalg.lstsq(Phi, cost + nxt, rcond=None)
        kernels.append(unpack(h, d))
    return [QuadraticKernel(H, n) for H in kernels]


__all__ = [
    "Mode", "LearnerState", "LearningTrace", "RoundRecord", "run_episode",
    "run_policy_iteration", "check_convergence", "dither_signal", "dither_sequence",
    "rate_streams", "collect_transitions", "batch_value_iteration", "TRACE_ARRAYS",
]
