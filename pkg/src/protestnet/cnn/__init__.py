from .adam import AdamState, adam_step
from .model import TINY, ArchConfig, CnnModel, backward, forward
from .ops import (conv2d_forward, maxpool_forward, relu, sigmoid, sigmoid_cross_entropy,
                  sigmoid_cross_entropy_with_logits)
from .train import TrainConfig, batches_per_epoch, load_checkpoint, save_checkpoint, train, train_arrays

__all__ = [
    "AdamState", "adam_step", "TINY", "ArchConfig", "CnnModel", "backward", "forward",
    "conv2d_forward", "maxpool_forward", "relu", "sigmoid", "sigmoid_cross_entropy",
    "sigmoid_cross_entropy_with_logits", "TrainConfig", "batches_per_epoch", "load_checkpoint",
    "save_checkpoint", "train", "train_arrays",
]
