"""
Adversarial pre-training of the generative prior.
"""

from src.training.dataset import BatchQueue, ImageDataset
from src.training.losses import discriminator_loss, discriminator_loss_terms, generator_loss, gradient_penalty
from src.training.selection import Selection, select_checkpoint
from src.training.trainer import LossRecord, Trainer, TrainResult, read_loss_log, train_loop

__all__ = [
    "BatchQueue",
    "ImageDataset",
    "LossRecord",
    "Selection",
    "TrainResult",
    "Trainer",
    "discriminator_loss",
    "discriminator_loss_terms",
    "generator_loss",
    "gradient_penalty",
    "read_loss_log",
    "select_checkpoint",
    "train_loop",
]
