"""Sine and ReLU two-layer MLPs for modular addition over bag-of-tokens inputs."""

from .data import LabeledSet, TaskSpec, enumerate_domain, sample_set
from .metrics import evaluate, margin_report, population_accuracy
from .model import INVALID, Activation, MlpParams, predict, scores
from .numerics import RngStream
from .optim import OptimConfig, default_wd_policy
from .trainer import TrainConfig, evaluate_ood, train

__all__ = [
    "INVALID",
    "Activation",
    "LabeledSet",
    "MlpParams",
    "OptimConfig",
    "RngStream",
    "TaskSpec",
    "TrainConfig",
    "default_wd_policy",
    "enumerate_domain",
    "evaluate",
    "evaluate_ood",
    "margin_report",
    "population_accuracy",
    "predict",
    "sample_set",
    "scores",
    "train",
]
__version__ = "0.1.0"
