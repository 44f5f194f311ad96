"""From-scratch tensor layers, Inception-style classifier, Adam, training."""

from .layers import (
    BatchNorm,
    Conv2D,
    Dense,
    Flatten,
    MaxPool2x2,
    ReLU,
    conv2d,
    softmax,
    xent_grad_logits,
    xent_loss,
)
from .network import InceptionConfig, Network, PlainCnnConfig
from .optim import NumericalError, adam_step
from .params import NetParams, param_count
from .train import TrainConfig, WindowDataset, accuracy, one_hot, predict_batched, train

__all__ = [
    "BatchNorm",
    "Conv2D",
    "Dense",
    "Flatten",
    "MaxPool2x2",
    "ReLU",
    "conv2d",
    "softmax",
    "xent_grad_logits",
    "xent_loss",
    "InceptionConfig",
    "Network",
    "PlainCnnConfig",
    "NumericalError",
    "adam_step",
    "NetParams",
    "param_count",
    "TrainConfig",
    "WindowDataset",
    "accuracy",
    "one_hot",
    "predict_batched",
    "train",
]
