"""Ready-made scenarios: the flexible-wing benchmark and a small synthetic LQR plant."""

from __future__ import annotations

import math

from .config import ScenarioConfig, parse_config
from .modes import Mode

# Learner initialization used for the flexible-wing runs: the tracker starts
# from a proportional roll-error gain so that the first transitions excite
# its critic, and the optimizer critic starts from the stage-cost kernel,
# whose greedy gain is the zero initial policy.
NOMINAL_TRACKER_GAIN = (50.0, 0.0, 0.0)
UNCERTAIN_RATE_BAND = (5e-5, 1.5e-4)

SYNTHETIC_A = ((0.9, 0.2), (-0.1, 0.8))
SYNTHETIC_B = ((0.0,), (1.0,))


def nominal_scenario(mode="OTA2", seed: int = 7, duration: float = 10.0) -> ScenarioConfig:
    """Sinusoidal roll-tracking task on the flexible-wing trim model."""
    mode = Mode(mode)
    return parse_config({
        "name": f"nominal_{mode.value.lower()}",
        "mode": mode.value,
        "duration": duration,
        "plant": {"preset": "flexible_wing_trim"},
        "rates": {"critic": 1e-4, "actor": 1e-4, "seed": seed},
        "tracker": {"initial_gain": list(NOMINAL_TRACKER_GAIN), "initial_kernel": "zero"},
        "optimizer": {"initial_kernel": "stage"},
        "dither": {"amplitude": 0.0, "seed": seed},
    })


def uncertain_scenario(mode="OTA2", seed: int = 0, duration: float = 10.0,
                       amplitude: float = 0.5) -> ScenarioConfig:
    """Damped composite trajectory, 5 ms sampling, +-50 % entry perturbations and
    per-step learning rates drawn from a band around 1e-4."""
    mode = Mode(mode)
    return parse_config({
        "name": f"uncertain_{mode.value.lower()}_seed{seed}",
        "mode": mode.value,
        "duration": duration,
        "plant": {"preset": "flexible_wing_trim", "Ts": 0.005},
        "trajectory": {
            "kind": "damped_composite", "decay": 0.3,
            "terms": [{"amplitude": 25.0, "frequency": 6 * math.pi / 10, "phase": "sin"},
                      {"amplitude": 15.0, "frequency": 16 * math.pi / 10, "phase": "cos"}],
        },
        "rates": {"band": list(UNCERTAIN_RATE_BAND), "seed": seed},
        "tracker": {"initial_gain": list(NOMINAL_TRACKER_GAIN), "initial_kernel": "zero"},
        "optimizer": {"initial_kernel": "stage"},
        "uncertainty": {"amplitude": amplitude, "seed": seed, "domain": "continuous"},
    })


def synthetic_lqr_scenario(mode="OTA2", steps: int = 200_000, seed: int = 1,
                           critic_rate: float = 0.5, actor_rate: float = 0.01,
                           dither: float = 1.0) -> ScenarioConfig:
    """Optimizer loop alone on a stable 2-state plant with Gaussian dither."""
    mode = Mode(mode)
    return parse_config({
        "name": f"synthetic_{mode.value.lower()}",
        "mode": mode.value,
        "duration": float(steps),
        "plant": {"A": [list(r) for r in SYNTHETIC_A], "B": [list(r) for r in SYNTHETIC_B],
                  "Ts": 1.0},
        "initial_state": [1.0, -1.0],
        "trajectory": {"kind": "constant", "level": 0.0},
        "weights": {"Q": [1.0, 1.0], "R": [1.0]},
        "rates": {"critic": critic_rate, "actor": actor_rate},
        "tracker": {"enabled": False},
        "optimizer": {"initial_kernel": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]},
        "dither": {"amplitude": dither, "seed": seed},
        "learning": {"epsilon": 1e-9, "stop_on_convergence": True},
    })


def synthetic_pi_scenario(initial_gain=(0.0, 0.0), rounds: int = 6, dither: float = 1.0,
                          seed: int = 3) -> ScenarioConfig:
    """Policy-iteration baseline on the synthetic plant (6 samples per round)."""
    return parse_config({
        "name": "synthetic_pi",
        "mode": "PI_BASELINE",
        "duration": float(6 * rounds),
        "plant": {"A": [list(r) for r in SYNTHETIC_A], "B": [list(r) for r in SYNTHETIC_B],
                  "Ts": 1.0},
        "initial_state": [1.0, -1.0],
        "trajectory": {"kind": "constant", "level": 0.0},
        "weights": {"Q": [1.0, 1.0], "R": [1.0]},
        "tracker": {"enabled": False},
        "optimizer": {"initial_gain": list(initial_gain)},
        "dither": {"amplitude": dither, "seed": seed},
        "policy_iteration": {"rounds": rounds},
    })


__all__ = ["nominal_scenario", "uncertain_scenario", "synthetic_lqr_scenario",
           "synthetic_pi_scenario", "NOMINAL_TRACKER_GAIN", "SYNTHETIC_A", "SYNTHETIC_B"]
