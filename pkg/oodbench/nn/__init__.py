"""A one-hidden-layer softmax classifier with exact gradients, its losses, and the
plain and outlier-exposure training loops."""

__all__ = [
    "AdamOptimizer",
    "SoftmaxClassifier",
    "StopReason",
    "TrainConfig",
    "TrainHistory",
    "classification_error",
    "entropy",
    "forward",
    "input_gradient",
    "oe_uniform_term",
    "perturb_odin",
    "smoothed_cross_entropy",
    "softmax",
    "train",
    "train_with_oe",
]

from oodbench.nn.classifier import (
    SoftmaxClassifier,
    forward,
    input_gradient,
    perturb_odin,
)
from oodbench.nn.losses import entropy, oe_uniform_term, smoothed_cross_entropy, softmax
from oodbench.nn.training import (
    AdamOptimizer,
    StopReason,
    TrainConfig,
    TrainHistory,
    classification_error,
    train,
    train_with_oe,
)
