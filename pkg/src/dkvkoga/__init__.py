"""Greedy deep-kernel surrogate models (deep VKOGA)."""

from .deepkernel import DeepKernelArchitecture, DeepKernelParams, features, init_params, loss_gradient
from .errors import *  # noqa: F401,F403
from .greedy import DeepKernel, GreedyConfig, SurrogateModel, fit_greedy, predict
from .harness import ExperimentConfig, ResultRecord, load_model, run_experiment, save_model
from .kernels import ScalarKernelSpec, gram
from .training import TrainConfig, loo_brute_force, rippa_loss, train_deep_kernel

__version__ = "0.1.0"

__all__ = [
    "DeepKernel",
    "DeepKernelArchitecture",
    "DeepKernelParams",
    "ExperimentConfig",
    "GreedyConfig",
    "ResultRecord",
    "ScalarKernelSpec",
    "SurrogateModel",
    "TrainConfig",
    "features",
    "fit_greedy",
    "gram",
    "init_params",
    "load_model",
    "loo_brute_force",
    "loss_gradient",
    "predict",
    "rippa_loss",
    "run_experiment",
    "save_model",
    "train_deep_kernel",
]
