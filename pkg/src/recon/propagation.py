"""
Multi-slice reconstruction with weight propagation.

Slice s+1 starts from the generator weights adapted on slice s; its
latents and noise are drawn fresh and the optimizer starts from scratch.
"""

import logging
from typing import List, Optional, Sequence

from src.imaging.operator import Acquisition
from src.recon.inference import Prior, ReconResult, infer
from src.utils.config import InferenceConfig
from src.utils.errors import ConfigError

logger = logging.getLogger("propagation")


def propagate_weights(
    previous: ReconResult,
    prior: Prior,
    acquisition: Acquisition,
    config: InferenceConfig,
    slice_index: int,
    iterations: Optional[int] = None,
) -> ReconResult:
    """
    Reconstruct ``acquisition`` warm-started from ``previous``'s weights.

    Raises:
        ConfigError: If ``previous`` carries no adapted state or its
            weights do not fit ``prior``.
    """
    if previous.final_state is None:
        raise ConfigError("the previous slice carries no adapted generator state")
    if iterations is not None:
        config = config.model_copy(update={"max_iterations": iterations})
    weights = previous.final_state.synthesizer.state_dict()
    return infer(prior, acquisition, config, slice_index=slice_index, warm_weights=weights)


def reconstruct_volume(
    prior: Prior,
    acquisitions: Sequence[Acquisition],
    config: InferenceConfig,
    propagate: bool = True,
    warm_iterations: Optional[int] = None,
) -> List[ReconResult]:
    """
    Reconstruct consecutive slices in order. The first slice always uses
    the full budget; propagated slices use ``warm_iterations`` when given.
    """
    results: List[ReconResult] = []
    for index, acquisition in enumerate(acquisitions):
        if propagate and results:
            result = propagate_weights(results[-1], prior, acquisition, config, index, warm_iterations)
        else:
            result = infer(prior, acquisition, config, slice_index=index)
        logger.info(
            f"Slice {index + 1}/{len(acquisitions)}: {result.iterations_used} iterations, "
            f"{result.wall_time:.2f}s, dc_loss {result.best_loss:.6g}"
        )
        results.append(result)
    return results
