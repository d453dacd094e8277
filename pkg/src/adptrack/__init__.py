"""Model-free adaptive optimal tracking control with quadratic Q-function critics."""

from .actor import LinearPolicy, actor_update, apply_policy, policy_from_kernel
from .config import ScenarioConfig, load_config, parse_config, serialize_config
from .critic import (CostWeights, QuadraticKernel, Transition, critic_update_direct,
                     critic_update_modified, evaluate_value, kernel_from_vector, kernel_vector,
                     quad_basis, stage_cost)
from .engine import (LearnerState, LearningTrace, check_convergence, dither_signal,
                     run_episode, run_policy_iteration)
from .errors import (AdmissibilityError, ConfigError, ContractError, ConvergenceError,
                     DivergenceError, ExcitationError, SingularKernelError)
from .metrics import (NaciWeights, PoleSet, avg_accumulated_squared_error, closed_loop_poles,
                      naci, policy_evaluation_oracle, riccati_oracle)
from .modes import Mode
from .plant import (ErrorWindow, PlantModel, UncertaintyConfig, flexible_wing_trim,
                    perturb_model, push_error, reference_signal, step_plant)

__version__ = "0.1.0"
