import numpy as np
import pytest

from adptrack.config import parse_config
from adptrack.engine import (DITHER_BLOCK, batch_value_iteration, check_convergence,
                             collect_transitions, dither_sequence, dither_signal, rate_streams,
                             run_episode, run_policy_iteration)
from adptrack.config import DitherConfig, RateSettings
from adptrack.errors import ContractError, DivergenceError, ExcitationError
from adptrack.metrics import (policy_evaluation_oracle, relative_frobenius_error, riccati_oracle,
                              spectral_radius)
from adptrack.actor import policy_from_kernel
from adptrack.plant import Sinusoid, flexible_wing_trim, reference_signal
from adptrack.presets import (SYNTHETIC_A, SYNTHETIC_B, nominal_scenario, synthetic_lqr_scenario,
                              synthetic_pi_scenario)

A_SYN, B_SYN = np.array(SYNTHETIC_A), np.array(SYNTHETIC_B)
EYE2, ONE = np.eye(2), np.eye(1)


def _short(mode, duration=0.3, **kw):
    return nominal_scenario(mode, duration=duration, **kw)


def _scalar_scenario(a, rate=0.0, normalization="proximal", steps=2000):
    return parse_config({
        "name": "scalar", "mode": "OTA1", "duration": float(steps),
        "plant": {"A": [[a]], "B": [[1.0]], "Ts": 1.0},
        "initial_state": [1.0],
        "trajectory": {"kind": "constant", "level": 0.0},
        "tracking": {"state_index": 0},
        "weights": {"Q": [1.0], "R": [1.0]},
        "rates": {"critic": rate, "actor": 0.0, "normalization": normalization},
        "tracker": {"enabled": False},
    })


# -- zero inputs and pure simulation ------------------------------------------------

def test_zero_state_zero_reference_stays_zero():
    sc = _short("OTA2").replace(initial_state=(0.0,) * 5)
    sc = sc.replace(trajectory=Sinusoid(0.0, 10.0))
    tr = run_episode("OTA2", sc)
    assert not np.any(tr.x) and not np.any(tr.u_total) and not np.any(tr.error)
    # zero transitions carry no information, so no weight ever moves
    assert np.all(tr.tracker_gain == tr.metadata["initial_tracker_gain"])


def test_zero_rates_is_pure_simulation():
    sc = _short("OTA2")
    sc = sc.replace(rates=RateSettings(critic=0.0, actor=0.0))
    tr = run_episode("OTA2", sc)
    wing = flexible_wing_trim()
    x = np.array(sc.initial_state)
    E = np.zeros(3)
    g = np.array([50.0, 0.0, 0.0])
    for k in range(sc.steps):
        E = np.r_[reference_signal(sc.trajectory, k * wing.Ts) - x[3], E[:-1]]
        np.testing.assert_allclose(tr.x[k], x, rtol=1e-12, atol=1e-12)
        x = wing.A @ x + wing.B @ [g @ E]
    assert np.all(tr.tracker_kernel == 0)


@pytest.mark.parametrize("mode", ["STA1", "STA2"])
def test_sta_modes_freeze_optimizer(mode):
    tr = run_episode(mode, _short(mode))
    assert np.all(tr.optimizer_gain == 0)
    assert np.all(tr.optimizer_kernel == tr.optimizer_kernel[0])
    assert np.all(tr.u == 0)
    # the tracker does learn
    assert np.any(tr.tracker_gain != tr.tracker_gain[0])


def test_episode_is_reproducible():
    a = run_episode("OTA1", _short("OTA1"))
    b = run_episode("OTA1", _short("OTA1"))
    for name in ("x", "u_total", "tracker_kernel", "optimizer_kernel", "gamma_hat", "xi_hat"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_trace_shapes_and_time_axis():
    sc = _short("OTA2", duration=0.05)
    tr = run_episode("OTA2", sc)
    assert len(tr) == sc.steps == 50
    assert tr.x.shape == (50, 5) and tr.tracker_kernel.shape == (50, 10)
    assert tr.optimizer_kernel.shape == (50, 21) and tr.optimizer_gain.shape == (50, 5)
    np.testing.assert_allclose(tr.t, np.arange(50) * 0.001)
    np.testing.assert_allclose(tr.error, tr.reference - tr.x[:, 3])
    assert tr.final_state.iteration == 50


def test_logged_weights_are_post_update():
    tr = run_episode("OTA2", _short("OTA2", duration=0.05))
    np.testing.assert_array_equal(tr.final_tracker_gain(), tr.final_state.tracker_actor.gain[0])
    np.testing.assert_array_equal(tr.final_kernel("optimizer"),
                                  tr.final_state.optimizer_kernel.matrix)


def test_divergence_reports_step_and_partial_trace():
    with pytest.raises(DivergenceError) as info:
        run_episode("OTA1", _scalar_scenario(3.0))
    exc = info.value
    assert exc.step is not None and 600 < exc.step < 700
    assert len(exc.trace) == exc.step
    assert exc.trace.metadata["diverged_step"] == exc.step


def test_unnormalized_critic_on_large_signal_diverges():
    # the literal update law is unstable once rate * |z|^4 is large
    with pytest.raises(DivergenceError):
        run_episode("OTA1", _scalar_scenario(1.05, rate=0.5, normalization="none", steps=400))
    tr = run_episode("OTA1", _scalar_scenario(1.05, rate=0.5, steps=400))
    assert np.all(np.isfinite(tr.optimizer_kernel))


# -- convergence test ------------------------------------------------------------------

def test_check_convergence_examples():
    H = np.eye(3)
    assert check_convergence(H, H.copy(), 0.0)
    assert check_convergence(H, H + np.diag([0.0, 0.0, 1e-3]), 1e-3)
    assert not check_convergence(np.eye(2), 2 * np.eye(2), 1.0)
    with pytest.raises(ContractError):
        check_convergence(np.eye(2), np.eye(3), 1.0)


# -- excitation and rates ---------------------------------------------------------------

def test_dither_zero_amplitude():
    assert dither_signal(DitherConfig(0.0, 1), 5) == 0.0
    assert not np.any(dither_sequence(DitherConfig(0.0, 1), 100))


def test_dither_is_pure_function_of_seed_and_step():
    cfg = DitherConfig(0.3, 4)
    seq = dither_sequence(cfg, DITHER_BLOCK + 10)
    assert seq[DITHER_BLOCK + 3] == dither_signal(cfg, DITHER_BLOCK + 3)
    assert seq[7] == dither_signal(cfg, 7)
    assert not np.array_equal(seq, dither_sequence(DitherConfig(0.3, 5), DITHER_BLOCK + 10))


def test_dither_statistics():
    seq = dither_sequence(DitherConfig(0.5, 9), 50_000)
    assert abs(seq.mean()) < 3 * 0.5 / np.sqrt(seq.size)
    assert seq.std() == pytest.approx(0.5, rel=0.02)


def test_rate_band_stays_in_bounds():
    crit, act = rate_streams(RateSettings(band=(5e-5, 1.5e-4), seed=2), 10_000)
    for r in (crit, act):
        assert r.min() >= 5e-5 and r.max() < 1.5e-4
        assert r.mean() == pytest.approx(1e-4, rel=0.02)
    c2, _ = rate_streams(RateSettings(band=(5e-5, 1.5e-4), seed=2), 10_000)
    assert np.array_equal(crit, c2)
    fixed, _ = rate_streams(RateSettings(critic=0.2, actor=0.1), 3)
    assert np.all(fixed == 0.2)


# -- synthetic LQR convergence ----------------------------------------------------------

@pytest.fixture(scope="module")
def synthetic_trace():
    return run_episode("OTA2", synthetic_lqr_scenario("OTA2"))


def test_synthetic_ota2_converges_to_riccati(synthetic_trace):
    tr = synthetic_trace
    assert tr.metadata["converged"]
    H_star = riccati_oracle(A_SYN, B_SYN, EYE2, ONE, tol=1e-14).matrix
    assert relative_frobenius_error(tr.final_kernel("optimizer"), H_star) < 1e-3
    K = tr.final_optimizer_gain()
    assert spectral_radius(A_SYN + B_SYN @ K) < 1


def test_synthetic_ota1_converges_to_riccati():
    tr = run_episode("OTA1", synthetic_lqr_scenario("OTA1"))
    H_star = riccati_oracle(A_SYN, B_SYN, EYE2, ONE, tol=1e-14).matrix
    assert relative_frobenius_error(tr.final_kernel("optimizer"), H_star) < 1e-3


# -- policy iteration ---------------------------------------------------------------

def test_policy_iteration_rounds_match_oracle():
    tr = run_policy_iteration(synthetic_pi_scenario())
    assert len(tr.rounds) == 6
    for rec in tr.rounds:
        oracle = policy_evaluation_oracle(A_SYN, B_SYN, rec.evaluated_gain, EYE2, ONE)
        assert relative_frobenius_error(rec.kernel.matrix, oracle.matrix) < 1e-9
        np.testing.assert_allclose(rec.improved_gain, policy_from_kernel(rec.kernel).gain)


def test_policy_iteration_fixed_point():
    K_star = policy_from_kernel(riccati_oracle(A_SYN, B_SYN, EYE2, ONE, tol=1e-14), ridge=0).gain
    tr = run_policy_iteration(synthetic_pi_scenario(initial_gain=K_star[0], rounds=2))
    for rec in tr.rounds:
        np.testing.assert_allclose(rec.improved_gain, K_star, atol=1e-8)


def test_policy_iteration_values_non_increasing():
    tr = run_policy_iteration(synthetic_pi_scenario(rounds=5))
    probes = np.random.default_rng(0).normal(size=(50, 2))
    prev = None
    for rec in tr.rounds:
        P = policy_evaluation_oracle(A_SYN, B_SYN, rec.evaluated_gain, EYE2, ONE)
        from adptrack.metrics import value_matrix
        vals = np.einsum("ki,ij,kj->k", probes, value_matrix(P), probes)
        if prev is not None:
            assert np.all(vals <= prev + 1e-9 * np.abs(prev))
        prev = vals


def test_policy_iteration_without_dither_is_rank_deficient():
    with pytest.raises(ExcitationError):
        run_policy_iteration(synthetic_pi_scenario(dither=0.0))


def test_pi_mode_dispatch():
    tr = run_episode("PI_BASELINE", synthetic_pi_scenario(rounds=1))
    assert len(tr.rounds) == 1 and len(tr) == 6


# -- batch value iteration -------------------------------------------------------------

def test_batch_value_iteration_monotone_and_bounded():
    X, U, Xn = collect_transitions(synthetic_pi_scenario(rounds=10))
    kernels = batch_value_iteration(X, U, Xn, EYE2, ONE, iterations=60)
    H_star = riccati_oracle(A_SYN, B_SYN, EYE2, ONE, tol=1e-14).matrix
    probes = np.random.default_rng(1).normal(size=(50, 3))
    prev = np.zeros(50)
    for k in kernels:
        vals = np.einsum("ki,ij,kj->k", probes, k.matrix, probes)
        assert np.all(vals >= prev - 1e-8)
        assert np.all(vals <= np.einsum("ki,ij,kj->k", probes, H_star, probes) + 1e-8)
        prev = vals
    assert relative_frobenius_error(kernels[-1].matrix, H_star) < 1e-6


def test_batch_value_iteration_needs_excitation():
    X, U, Xn = collect_transitions(synthetic_pi_scenario(dither=0.0))
    with pytest.raises(ExcitationError):
        batch_value_iteration(X, U, Xn, EYE2, ONE, iterations=3)
