"""
Adversarial pre-training of the synthesizer and mapper.

Every batch runs one discriminator step (generator outputs held fixed)
followed by one generator step (discriminator frozen). Both use Adam.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from src.networks.checkpoint import save_checkpoint
from src.networks.discriminator import Discriminator, as_channels
from src.networks.mapper import Mapper
from src.networks.synthesizer import Synthesizer
from src.tensor.optim import Adam, AdamHyper
from src.tensor.tensor import Tensor, no_grad, stack
from src.training.dataset import BatchQueue, ImageDataset
from src.training.losses import DiscriminatorLoss, discriminator_loss_terms, generator_loss
from src.utils.config import Config
from src.utils.context import RunContext
from src.utils.errors import ConfigError, ContractError, NumericError

logger = logging.getLogger("trainer")

LOSS_LOG = "loss_log.txt"
CHECKPOINT_DIR = "checkpoints"


@dataclass
class LossRecord:
    step: int
    generator: float
    discriminator: float
    penalty: float

    def to_line(self) -> str:
        return (
            f"step={self.step} g_loss={self.generator:.6f} "
            f"d_loss={self.discriminator:.6f} penalty={self.penalty:.6f}"
        )

    @classmethod
    def from_line(cls, line: str) -> "LossRecord":
        fields = dict(item.split("=", 1) for item in line.split())
        return cls(int(fields["step"]), float(fields["g_loss"]), float(fields["d_loss"]), float(fields["penalty"]))


@dataclass
class TrainResult:
    history: List[LossRecord] = field(default_factory=list)
    checkpoints: List[Path] = field(default_factory=list)
    steps: int = 0


def _raise_if_nan(step: int, **values: float) -> None:
    for name, value in values.items():
        if not math.isfinite(value):
            raise NumericError(f"{name} became {value} at step {step}")


class Trainer:
    """
    Owns the three networks, their optimizers and the step counter.

    All random draws come from ``context.rng(...)`` so two trainers built
    from the same config and seed follow identical trajectories.
    """

    def __init__(self, config: Config, dataset: ImageDataset, out_dir: Optional[Union[str, Path]] = None):
        self.config = config
        self.train_config = config.training
        self.dataset = dataset
        self.out_dir = Path(out_dir) if out_dir is not None else None
        if len(dataset) == 0:
            raise ConfigError("the training set is empty")
        if dataset.resolution != config.synthesizer.final_resolution:
            raise ConfigError(
                f"training images are {dataset.resolution}x{dataset.resolution}, "
                f"the generator emits {config.synthesizer.final_resolution}"
            )

        self.context = RunContext(config=config.to_dict(), seed=self.train_config.seed, out_dir=self.out_dir)
        self.synthesizer = Synthesizer(config.synthesizer, self.context.rng("init.synthesizer"))
        self.mapper = Mapper(config.synthesizer, self.context.rng("init.mapper"), config.mapper)
        self.discriminator = Discriminator(config.discriminator, self.context.rng("init.discriminator"))
        self.sample_rng = self.context.rng("train.samples")

        hyper = AdamHyper(lr=self.train_config.lr, beta1=self.train_config.beta1, beta2=self.train_config.beta2)
        self.g_optimizer = Adam(
            list(self.synthesizer.named_parameters("synthesizer.")) + list(self.mapper.named_parameters("mapper.")),
            hyper,
        )
        self.d_optimizer = Adam(self.discriminator.named_parameters(), hyper)
        self.queue = BatchQueue(len(dataset), self.train_config.batch_size, self.context.derive_seed("train.order"))
        self.step = 0
        self.epoch = 0

    def generate(self, n: int) -> Tensor:
        """``n`` generator samples as a (n, h, h) complex tensor, each with fresh latents and noise."""
        if n < 1:
            raise ContractError(f"cannot generate an empty batch (n={n})")
        images = []
        for _ in range(n):
            latents = self.mapper(self.mapper.sample(self.sample_rng))
            noise = self.synthesizer.sample_noise(self.sample_rng)
            images.append(self.synthesizer(latents, noise))
        return stack(images)

    def discriminator_step(self, real_batch: np.ndarray) -> DiscriminatorLoss:
        with no_grad():
            fakes = as_channels(self.generate(len(real_batch)))
        real = Tensor(as_channels(real_batch).data, requires_grad=True)
        terms = discriminator_loss_terms(
            self.discriminator(fakes), self.discriminator(real), real, self.train_config.penalty_weight
        )
        self.d_optimizer.zero_grad()
        terms.total.backward()
        self.d_optimizer.step()
        return terms

    def generator_step(self, n: int) -> Tensor:
        self.discriminator.freeze()
        try:
            loss = generator_loss(self.discriminator(as_channels(self.generate(n))))
            self.g_optimizer.zero_grad()
            loss.backward()
            self.g_optimizer.step()
        finally:
            self.discriminator.freeze(False)
        return loss

    def train_step(self, real_batch: np.ndarray) -> LossRecord:
        if len(real_batch) == 0:
            raise ContractError("training step received an empty batch")
        terms = self.discriminator_step(real_batch)
        g_loss = self.generator_step(len(real_batch))
        self.step += 1
        record = LossRecord(self.step, g_loss.item(), terms.total.item(), terms.penalty.item())
        _raise_if_nan(self.step, g_loss=record.generator, d_loss=record.discriminator, penalty=record.penalty)
        return record

    def save(self) -> Optional[Path]:
        if self.out_dir is None:
            return None
        sections = {name: self.context.config[name] for name in ("synthesizer", "mapper", "discriminator")}
        return save_checkpoint(
            self.out_dir / CHECKPOINT_DIR / f"step_{self.step:06d}",
            self.synthesizer,
            self.mapper,
            self.discriminator,
            sections,
            self.step,
            self.epoch,
        )

    def train(self) -> TrainResult:
        result = TrainResult()
        max_steps = self.train_config.max_steps
        log_file = None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            log_file = open(self.out_dir / LOSS_LOG, "w", encoding="utf-8")
        logger.info(
            f"Starting training: {len(self.dataset)} images, batch {self.queue.batch_size}, "
            f"{self.train_config.epochs} epoch(s), max_steps={max_steps}"
        )
        try:
            for epoch in range(self.train_config.epochs):
                self.epoch = epoch
                for indices in self.queue.epoch(epoch):
                    if max_steps is not None and self.step >= max_steps:
                        break
                    record = self.train_step(self.dataset.images[indices])
                    result.history.append(record)
                    if log_file is not None:
                        log_file.write(record.to_line() + "\n")
                        log_file.flush()
                    if self.step % self.train_config.log_every == 0:
                        logger.info(record.to_line())
                    if self.out_dir is not None and self.step % self.train_config.checkpoint_every == 0:
                        result.checkpoints.append(self.save())
                if max_steps is not None and self.step >= max_steps:
                    break
            if self.out_dir is not None and (not result.checkpoints or result.checkpoints[-1].name != f"step_{self.step:06d}"):
                result.checkpoints.append(self.save())
        finally:
            if log_file is not None:
                log_file.close()
        result.steps = self.step
        logger.info(f"Training complete after {self.step} steps")
        return result


def train_loop(config: Config, dataset: ImageDataset, out_dir: Optional[Union[str, Path]] = None) -> TrainResult:
    return Trainer(config, dataset, out_dir).train()


def read_loss_log(path: Union[str, Path]) -> List[LossRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [LossRecord.from_line(line) for line in lines if line.strip()]
