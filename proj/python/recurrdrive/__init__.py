"""Python bindings for the RecurrDriveNet simulator, PPO trainer and evaluation harness."""

from ._core import (
    CheckpointError,
    ConfigError,
    Env,
    EvalError,
    ScenarioConfig,
    __version__,
    compute_gae,
    evaluate,
    load_train_config,
    train,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "Env",
    "EvalError",
    "ScenarioConfig",
    "__version__",
    "compute_gae",
    "evaluate",
    "load_train_config",
    "train",
]
