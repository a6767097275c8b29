"""Grammar policy, KL-regularized PPO and generator backends."""

from .policy import Decision, GrammarPolicy, GrammarSpec, SchemaError, Trajectory, policy_kl
from .ppo import (
    PpoConfig,
    PpoState,
    TrainResult,
    UpdateStats,
    exact_match_rate,
    objective_and_grad,
    policy_gradient,
    ppo_update,
    train_loop,
)

__all__ = [
    "Decision", "GrammarPolicy", "GrammarSpec", "PpoConfig", "PpoState", "SchemaError", "TrainResult",
    "Trajectory", "UpdateStats", "exact_match_rate", "objective_and_grad", "policy_gradient", "policy_kl",
    "ppo_update", "train_loop",
]
