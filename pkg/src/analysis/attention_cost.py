"""
Cost accounting and locality checks for attention versus convolution.

A single convolution layer makes each output pixel a function of its r x r
input neighborhood only. Attention over pixels (self-attention) or over a
small set of latents (cross-attention with instance-normalized modulation)
makes every output pixel depend on the whole input. The helpers here count
the multiply-accumulates of each block and check the dependence claims by
perturbation.
"""

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np

from src.networks.base_network import BaseNetwork
from src.networks.layers import Conv2d, CrossAttention, Linear
from src.tensor import functional as F
from src.tensor.tensor import Tensor, as_tensor, matmul, mul, no_grad, reshape
from src.utils.errors import ConfigError, SetupError

logger = logging.getLogger("attention-analysis")

SELF_ATTENTION_CAP = 64 * 64
BlockKind = Literal["conv", "self_attention", "cross_attention"]


@dataclass
class CostReport:
    h1: int
    h2: int
    n_latents: int
    kernel_size: int
    self_attention_macs: int
    cross_attention_macs: int
    conv_ffnn_macs: int
    self_attention_seconds: Optional[float] = None
    cross_attention_seconds: Optional[float] = None

    @property
    def ratio(self) -> float:
        return self.self_attention_macs / self.cross_attention_macs

    @property
    def time_ratio(self) -> Optional[float]:
        if self.self_attention_seconds is None or not self.cross_attention_seconds:
            return None
        return self.self_attention_seconds / self.cross_attention_seconds


def count_costs(h1: int, h2: int, n_latents: int, kernel_size: int) -> CostReport:
    """Exact per-channel multiply-accumulate counts of the three block kinds."""
    if min(h1, h2, n_latents, kernel_size) < 1:
        raise ConfigError(f"all arguments must be positive, got {(h1, h2, n_latents, kernel_size)}")
    pixels = h1 * h2
    return CostReport(
        h1=h1,
        h2=h2,
        n_latents=n_latents,
        kernel_size=kernel_size,
        self_attention_macs=pixels * pixels,
        cross_attention_macs=pixels * n_latents,
        conv_ffnn_macs=pixels * kernel_size * kernel_size,
    )


class SelfAttention2d(BaseNetwork):
    """
    Reference pixel-to-pixel self-attention block with the same scale/shift
    modulation as the cross-attention block. Only used for analysis.
    """

    def __init__(self, h1: int, h2: int, channels: int, rng: np.random.Generator):
        super().__init__("self-attention-2d")
        if h1 * h2 > SELF_ATTENTION_CAP:
            raise ConfigError(f"reference self-attention is capped at 64x64 pixels, got {h1}x{h2}")
        self.h1, self.h2, self.channels = h1, h2, channels
        self.query = self.register_child("query", Linear(channels, channels, rng, bias=False))
        self.key = self.register_child("key", Linear(channels, channels, rng, bias=False))
        self.value = self.register_child("value", Linear(channels, channels, rng, bias=False))
        self.gamma = self.register_child("gamma", Linear(channels, channels, rng, bias_init=1.0))
        self.beta = self.register_child("beta", Linear(channels, channels, rng))

    def forward(self, x: Tensor) -> Tensor:
        x = as_tensor(x)
        flat = reshape(x, (self.h1 * self.h2, self.channels))
        scores = matmul(self.query(flat), self.key(flat).T) * (1.0 / np.sqrt(self.channels))
        features = matmul(F.softmax_rows(scores), self.value(flat))
        normalized = reshape(F.instance_norm(x), (self.h1 * self.h2, self.channels))
        out = mul(self.gamma(features), normalized) + self.beta(features)
        return reshape(out, (self.h1, self.h2, self.channels))


def _block(kind: BlockKind, h: int, r: int, channels: int, n_latents: int, latent_dim: int, rng: np.random.Generator) -> Callable[[Tensor], Tensor]:
    if kind == "conv":
        return Conv2d(channels, channels, rng, kernel_size=r)
    if kind == "self_attention":
        return SelfAttention2d(h, h, channels, rng)
    if kind == "cross_attention":
        block = CrossAttention(h, h, channels, latent_dim, n_latents, rng)
        latents = Tensor(rng.standard_normal((n_latents, latent_dim)))
        return lambda x: block(x, latents)
    raise ConfigError(f"unknown block kind {kind!r}")


@dataclass
class DependenceVerdict:
    kind: str
    pixel_a: Tuple[int, int]
    pixel_b: Tuple[int, int]
    deltas: List[float] = field(default_factory=list)
    bitwise_unchanged: int = 0

    @property
    def trials(self) -> int:
        return len(self.deltas)

    @property
    def changed(self) -> int:
        return sum(1 for d in self.deltas if d > 1e-8)

    @property
    def local(self) -> bool:
        """True if output[a] never moved when input[b] was perturbed."""
        return self.bitwise_unchanged == self.trials


def neighborhoods_overlap(a: Tuple[int, int], b: Tuple[int, int], r: int) -> bool:
    return abs(a[0] - b[0]) < r and abs(a[1] - b[1]) < r


def dependence_test(
    kind: BlockKind,
    h: int,
    r: int,
    pixel_a: Tuple[int, int] = (2, 2),
    pixel_b: Tuple[int, int] = (12, 12),
    trials: int = 100,
    channels: int = 8,
    n_latents: int = 16,
    latent_dim: int = 8,
    seed: int = 0,
) -> DependenceVerdict:
    """
    Perturb the input at ``pixel_b`` and record how much the output at
    ``pixel_a`` moves, over ``trials`` random parameter draws.

    Raises:
        SetupError: If the r x r neighborhoods of the two pixels overlap or
            a pixel lies outside the image.
    """
    for pixel in (pixel_a, pixel_b):
        if not all(0 <= p < h for p in pixel):
            raise SetupError(f"pixel {pixel} lies outside the {h}x{h} image")
    if neighborhoods_overlap(pixel_a, pixel_b, r):
        raise SetupError(f"{r}x{r} neighborhoods of {pixel_a} and {pixel_b} overlap")

    verdict = DependenceVerdict(kind, tuple(pixel_a), tuple(pixel_b))
    with no_grad():
        for trial in range(trials):
            rng = np.random.default_rng([seed, trial])
            block = _block(kind, h, r, channels, n_latents, latent_dim, rng)
            x = rng.standard_normal((h, h, channels))
            perturbed = x.copy()
            perturbed[pixel_b] += rng.standard_normal(channels)
            before = block(Tensor(x)).numpy()[pixel_a]
            after = block(Tensor(perturbed)).numpy()[pixel_a]
            verdict.deltas.append(float(np.abs(after - before).max()))
            verdict.bitwise_unchanged += int(np.array_equal(before, after))
    logger.info(f"{kind}: output{pixel_a} moved in {verdict.changed}/{trials} trials")
    return verdict


def _time(fn: Callable[[], object], repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        started = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - started)
    return best


def measure_costs(
    resolutions: Sequence[int] = (16, 32, 64),
    n_latents: int = 16,
    kernel_size: int = 3,
    channels: int = 16,
    repeats: int = 3,
    seed: int = 0,
) -> List[CostReport]:
    """Operation counts plus best-of-``repeats`` forward wall times, run sequentially."""
    reports = []
    with no_grad():
        for h in resolutions:
            rng = np.random.default_rng([seed, h])
            report = count_costs(h, h, n_latents, kernel_size)
            x = Tensor(rng.standard_normal((h, h, channels)))
            self_block = SelfAttention2d(h, h, channels, rng)
            cross_block = _block("cross_attention", h, kernel_size, channels, n_latents, channels, rng)
            report.self_attention_seconds = _time(lambda: self_block(x), repeats)
            report.cross_attention_seconds = _time(lambda: cross_block(x), repeats)
            reports.append(report)
    return reports


COLUMNS = (
    "h1", "h2", "n_latents", "kernel_size", "self_attention_macs", "cross_attention_macs",
    "conv_ffnn_macs", "ratio", "self_attention_seconds", "cross_attention_seconds",
)


def _row(report: CostReport) -> List[str]:
    values = []
    for column in COLUMNS:
        value = getattr(report, column)
        if value is None:
            values.append("-")
        elif isinstance(value, float):
            values.append(f"{value:.6g}")
        else:
            values.append(str(value))
    return values


def format_table(reports: Sequence[CostReport]) -> str:
    rows = [list(COLUMNS)] + [_row(r) for r in reports]
    widths = [max(len(row[i]) for row in rows) for i in range(len(COLUMNS))]
    return "\n".join("  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in rows) + "\n"


def write_csv(reports: Sequence[CostReport], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(COLUMNS)
        writer.writerows(_row(r) for r in reports)
    return path
