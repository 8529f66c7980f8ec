"""
The run context: config, base seed, output directory and every derived
seed of one command invocation.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np


def derive_seed(base_seed: int, name: str) -> int:
    """Deterministic 32-bit seed for the sub-purpose ``name`` of a run seeded with ``base_seed``."""
    digest = hashlib.sha256(f"{base_seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


@dataclass
class RunContext:
    """
    Run-wide state of one command.

    Every random draw of a run (mask, coils, phantom, latents, noise, network
    init) takes its generator from ``rng(name)`` so that one base seed
    reproduces the whole run.
    """
    config: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    out_dir: Optional[Path] = None
    seeds_used: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.logger = logging.getLogger("run-context")

    def derive_seed(self, name: str) -> int:
        """Seed for one sub-purpose, recorded for the run manifest."""
        value = derive_seed(self.seed, name)
        self.seeds_used[name] = value
        return value

    def rng(self, name: str) -> np.random.Generator:
        return np.random.default_rng(self.derive_seed(name))


# process-wide run context, replaced per command
_current: Optional[RunContext] = None


def get_context() -> RunContext:
    """The current run context; an unseeded one is created on first use."""
    global _current
    if _current is None:
        _current = RunContext()
    return _current


def set_context(context: RunContext) -> None:
    """Make ``context`` the current run context."""
    global _current
    _current = context


async def initialize_context(config: Dict[str, Any], seed: int = 0, out_dir: Optional[Path] = None) -> RunContext:
    """Reset the current run context for a new command and return it."""
    context = get_context()
    context.config = config
    context.seed = seed
    context.out_dir = out_dir
    context.seeds_used = {}
    context.logger.debug(f"Run context reset with base seed {seed}")
    return context


async def cleanup_context() -> None:
    """Log the derived seeds and drop the per-run state."""
    context = get_context()
    if context.seeds_used:
        context.logger.debug(f"Seeds derived during the run: {sorted(context.seeds_used)}")

    context.config = {}
    context.seeds_used = {}
    context.out_dir = None
