"""
Zero-shot reconstruction: adapt a generator to one acquisition by
minimizing a data-consistency loss over its latents, noise maps and
weights.

With a pre-trained checkpoint the starting latents come from the mapper
(zero-shot mode); with an untrained synthesizer they are drawn at random
(DIP mode). Latents are always segregated so that every sub-block owns an
independent copy during optimization.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.imaging.operator import Acquisition, ImagingOperator, apply_forward, enforce_data_consistency
from src.metrics.quality import WINDOW_SIZE, psnr, ssim
from src.networks.checkpoint import restore_generator
from src.networks.mapper import Mapper
from src.networks.synthesizer import LatentSet, NoiseBank, Synthesizer
from src.tensor.optim import RMSprop, RMSpropHyper
from src.tensor.tensor import ArrayLike, Tensor, absolute, as_tensor, imag, no_grad, real
from src.utils.config import PARAMETER_GROUPS, InferenceConfig, SynthesizerConfig
from src.utils.context import derive_seed
from src.utils.errors import ConfigError, ContractError, NumericError

logger = logging.getLogger("zeroshot")

L2_FLOOR = 1e-20


def dc_loss(
    op: ImagingOperator,
    image: ArrayLike,
    kspace: ArrayLike,
    lambda1: float = 1.0,
    lambda2: float = 0.0,
    squared_l2: bool = False,
) -> Tensor:
    """
    lambda1 * ||r||_1 + lambda2 * ||r||_2 with r = A(image) - y over sampled points.

    Moduli of complex residuals are used in both norms. The l2 term is the
    plain norm unless ``squared_l2`` is set.
    """
    if lambda1 < 0 or lambda2 < 0 or (lambda1 == 0 and lambda2 == 0):
        raise ConfigError(f"need lambda1, lambda2 >= 0 and not both 0, got {lambda1}, {lambda2}")
    residual = apply_forward(op, image) - as_tensor(kspace) * op.mask.mask
    loss = Tensor(0.0)
    if lambda1 > 0:
        loss = loss + absolute(residual).sum() * lambda1
    if lambda2 > 0:
        re, im = real(residual), imag(residual)
        energy = (re * re + im * im).sum()
        # finite gradient at a zero residual
        loss = loss + (energy if squared_l2 else (energy + L2_FLOOR).sqrt()) * lambda2
    return loss


@dataclass
class Prior:
    """A generator to adapt: pre-trained (with its mapper) or untrained (DIP)."""

    synthesizer: Synthesizer
    mapper: Optional[Mapper] = None
    source: Optional[Path] = None

    @property
    def mode(self) -> str:
        return "zero-shot" if self.mapper is not None else "dip"

    @classmethod
    def from_checkpoint(cls, directory: Union[str, Path]) -> "Prior":
        synthesizer, mapper, _ = restore_generator(directory)
        return cls(synthesizer, mapper, Path(directory))

    @classmethod
    def untrained(cls, config: SynthesizerConfig, seed: int) -> "Prior":
        """Randomly initialized synthesizer for DIP reconstruction."""
        return cls(Synthesizer(config, np.random.default_rng(derive_seed(seed, "dip.weights"))))

    def initial_latents(self, rng: np.random.Generator) -> LatentSet:
        if self.mapper is not None:
            with no_grad():
                latents = self.mapper(self.mapper.sample(rng))
        else:
            latents = self.synthesizer.sample_latents(rng)
        return latents.segregate(self.synthesizer.latent_slots())


@dataclass
class AdaptedState:
    """Generator state at the best iterate, used to warm-start the next slice."""

    synthesizer: Synthesizer
    latents: LatentSet
    noise: NoiseBank


@dataclass
class ReconResult:
    image: np.ndarray
    loss_trace: List[float] = field(default_factory=list)
    iterations_used: int = 0
    psnr: Optional[float] = None
    ssim: Optional[float] = None
    wall_time: float = 0.0
    initial_loss: float = math.nan
    best_loss: float = math.nan
    best_iteration: Optional[int] = None
    mode: str = "zero-shot"
    final_state: Optional[AdaptedState] = None

    def best_so_far(self) -> List[float]:
        return list(np.minimum.accumulate(self.loss_trace)) if self.loss_trace else []

    def trace_text(self) -> str:
        return "".join(f"{i} {value:.8g}\n" for i, value in enumerate(self.loss_trace))


def rampdown_factor(iteration: int, total: int, fraction: float) -> float:
    """1 until the last ``fraction`` of the run, then a cosine decay towards 0."""
    if total <= 0 or fraction <= 0:
        return 1.0
    progress = iteration / total
    start = 1.0 - fraction
    if progress <= start:
        return 1.0
    return 0.5 * (1.0 + math.cos(math.pi * (progress - start) / fraction))


def rampup_factor(iteration: int, total: int, fraction: float) -> float:
    """Linear warm-up over the first ``fraction`` of the run; the first step already moves."""
    length = fraction * total
    if length <= 1:
        return 1.0
    return min(1.0, (iteration + 1) / length)


def lr_schedule(iteration: int, total: int, config: InferenceConfig) -> float:
    return rampup_factor(iteration, total, config.rampup_fraction) * rampdown_factor(
        iteration, total, config.rampdown_fraction
    )


def crop_extents(synthesizer: Synthesizer, operator: ImagingOperator) -> Optional[Tuple[int, int]]:
    h1, h2 = operator.shape
    size = synthesizer.resolution
    if h1 > size or h2 > size:
        raise ContractError(f"acquisition {h1}x{h2} exceeds the generator output {size}x{size}")
    return None if (h1, h2) == (size, size) else (h1, h2)


def _score(result: ReconResult, reference: Optional[np.ndarray]) -> None:
    if reference is None:
        return
    result.psnr = psnr(result.image, reference)
    if min(reference.shape) >= WINDOW_SIZE:
        result.ssim = ssim(result.image, reference)


def _snapshot(params: Sequence[Tuple[str, Tensor]]) -> List[np.ndarray]:
    return [p.data.copy() for _, p in params]


def _restore(params: Sequence[Tuple[str, Tensor]], values: Sequence[np.ndarray]) -> None:
    for (_, p), value in zip(params, values):
        p.data = value.copy()


def _adapt(
    prior: Prior,
    acquisition: Acquisition,
    config: InferenceConfig,
    groups: Sequence[str],
    slice_index: int = 0,
    warm_weights: Optional[Dict[str, np.ndarray]] = None,
) -> ReconResult:
    started = time.perf_counter()
    operator, kspace = acquisition.operator, acquisition.kspace

    synthesizer = prior.synthesizer.clone()
    if warm_weights is not None:
        try:
            synthesizer.load_state_dict(warm_weights)
        except ContractError as e:
            raise ConfigError(f"propagated weights do not fit this generator: {e}") from e
    crop = crop_extents(synthesizer, operator)

    latents = prior.initial_latents(np.random.default_rng(derive_seed(config.seed, f"recon.latents.{slice_index}")))
    noise = synthesizer.sample_noise(np.random.default_rng(derive_seed(config.seed, f"recon.noise.{slice_index}"))).trainable()

    groups = [g for g in PARAMETER_GROUPS if g in groups]
    owned = {
        "latents": latents.named_parameters(),
        "noise": noise.named_parameters(),
        "weights": list(synthesizer.named_parameters("synthesizer.")),
    }
    for group, params in owned.items():
        for _, p in params:
            p.requires_grad = group in groups
    params = [item for group in groups for item in owned[group]]

    def loss_at(image: Tensor) -> Tensor:
        return dc_loss(operator, image, kspace, config.lambda1, config.lambda2, config.squared_l2)

    result = ReconResult(image=np.zeros(operator.shape, dtype=np.complex64), mode=prior.mode)
    with no_grad():
        best_image = synthesizer(latents, noise, crop).numpy()
        result.initial_loss = result.best_loss = loss_at(best_image).item()

    if params and config.max_iterations > 0:
        optimizers = {
            group: RMSprop(owned[group], RMSpropHyper(lr=config.group_lr(group), rho=config.rho, momentum=config.momentum))
            for group in groups
        }
        logger.info(
            f"Starting {prior.mode} inference: {config.max_iterations} iterations over "
            f"{'+'.join(groups)} ({sum(p.size for _, p in params)} values), "
            f"lr {', '.join(f'{g}={config.group_lr(g):g}' for g in groups)}"
        )
        result.best_loss = math.inf
        best_values = _snapshot(params)
        scale, backoffs = 1.0, 0
        for iteration in range(config.max_iterations):
            factor = scale * lr_schedule(iteration, config.max_iterations, config)
            for group, optimizer in optimizers.items():
                optimizer.set_lr(config.group_lr(group) * factor)
            image = synthesizer(latents, noise, crop)
            loss = loss_at(image)
            value = loss.item()
            if math.isnan(value):
                tail = ", ".join(f"{v:.4g}" for v in result.loss_trace[-5:])
                raise NumericError(f"dc loss became NaN at iteration {iteration} (last values: {tail})")
            result.loss_trace.append(value)
            if value < result.best_loss:
                result.best_loss, result.best_iteration = value, iteration
                best_image = image.numpy()
                best_values = _snapshot(params)
            elif not math.isfinite(value) or value > config.divergence_factor * result.best_loss:
                if backoffs == config.max_backoffs:
                    logger.warning(f"dc loss still diverging after {backoffs} learning-rate halvings, stopping at {iteration}")
                    break
                backoffs += 1
                scale *= 0.5
                _restore(params, best_values)
                for optimizer in optimizers.values():
                    optimizer.reset()
                logger.warning(
                    f"dc loss {value:.6g} at iteration {iteration} is above {config.divergence_factor:g}x "
                    f"the best {result.best_loss:.6g}: back to iteration {result.best_iteration} at lr scale {scale:g}"
                )
                continue
            if (
                config.patience is not None
                and result.best_iteration is not None
                and iteration - result.best_iteration >= config.patience
            ):
                logger.info(f"No improvement for {config.patience} iterations, stopping at {iteration}")
                break
            for optimizer in optimizers.values():
                optimizer.zero_grad()
            loss.backward()
            for optimizer in optimizers.values():
                optimizer.step()
            if (iteration + 1) % config.log_every == 0:
                logger.info(f"iteration {iteration + 1}: dc_loss={value:.6g} best={result.best_loss:.6g}")
        _restore(params, best_values)

    result.iterations_used = len(result.loss_trace)
    if config.strict_dc:
        best_image = enforce_data_consistency(operator, best_image, kspace)
    result.image = np.asarray(best_image, dtype=np.complex64)
    result.final_state = AdaptedState(synthesizer, latents, noise)
    _score(result, acquisition.reference)
    result.wall_time = time.perf_counter() - started
    logger.info(
        f"Inference finished after {result.iterations_used} iterations in {result.wall_time:.2f}s "
        f"(dc_loss {result.initial_loss:.6g} -> {result.best_loss:.6g})"
    )
    return result


def infer(
    prior: Prior,
    acquisition: Acquisition,
    config: InferenceConfig,
    slice_index: int = 0,
    warm_weights: Optional[Dict[str, np.ndarray]] = None,
) -> ReconResult:
    """
    Adapt ``prior`` to ``acquisition`` with RMSprop and return the iterate
    with the lowest data-consistency loss. The returned ``final_state`` holds
    the parameters of that iterate.

    Raises:
        ConfigError: On an invalid loss weighting or an empty parameter set.
        ContractError: If the acquisition does not fit the generator output.
        NumericError: If the loss becomes NaN.
    """
    problems = config.problems()
    if problems:
        raise ConfigError("; ".join(problems))
    return _adapt(prior, acquisition, config, config.optimize, slice_index, warm_weights)


def unadapted(prior: Prior, acquisition: Acquisition, config: InferenceConfig, slice_index: int = 0) -> ReconResult:
    """The prior's output for the starting latents and noise, without any optimization."""
    return _adapt(prior, acquisition, config, (), slice_index)
