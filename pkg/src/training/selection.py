"""
Checkpoint selection on held-out acquisitions.

Each candidate checkpoint runs a short zero-shot reconstruction on every
validation acquisition; the checkpoint with the lowest mean final
data-consistency loss wins.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np

from src.imaging.operator import Acquisition, ImagingOperator, simulate_acquisition
from src.recon.inference import Prior, infer
from src.utils.config import InferenceConfig
from src.utils.errors import ConfigError

logger = logging.getLogger("checkpoint-selection")


@dataclass
class Selection:
    best: Path
    scores: Dict[Path, float]


def score_checkpoint(checkpoint: Union[str, Path], validation: Sequence[Acquisition], config: InferenceConfig) -> float:
    prior = Prior.from_checkpoint(checkpoint)
    losses = [infer(prior, acquisition, config).best_loss for acquisition in validation]
    return float(np.mean(losses))


def select_checkpoint(
    checkpoints: Sequence[Union[str, Path]],
    validation: Sequence[Acquisition],
    config: InferenceConfig,
    iterations: int = 50,
) -> Selection:
    if not checkpoints:
        raise ConfigError("no checkpoints to choose from")
    if not validation:
        raise ConfigError("checkpoint selection needs at least one validation acquisition")
    short = config.model_copy(update={"max_iterations": iterations, "mode": "zero-shot"})
    scores: Dict[Path, float] = {}
    for checkpoint in checkpoints:
        scores[Path(checkpoint)] = score_checkpoint(checkpoint, validation, short)
        logger.info(f"{checkpoint}: validation dc_loss {scores[Path(checkpoint)]:.6g}")
    best = min(scores, key=scores.get)
    logger.info(f"Selected {best}")
    return Selection(best, scores)


def validation_acquisitions(images: np.ndarray, operators: Sequence[ImagingOperator]) -> List[Acquisition]:
    """Pair each validation image with an operator, cycling through ``operators``."""
    acquisitions = []
    for i, image in enumerate(images):
        operator = operators[i % len(operators)]
        acquisitions.append(simulate_acquisition(image, operator.mask, operator.coils))
    return acquisitions
