"""
ReconRunner: drives one reconstruction command from prior and acquisition
loading through inference to the results directory.
"""

import asyncio
import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.cli.previews import save_attention_maps, save_recon_previews
from src.imaging.coils import simulate_coils
from src.imaging.masks import SamplingMask, generate_vdrs_mask
from src.imaging.operator import Acquisition, simulate_acquisition
from src.imaging.phantoms import make_digit_phantom, make_volume
from src.metrics.quality import MetricReport, WINDOW_SIZE, psnr, ssim
from src.recon.ablation import ablation_run
from src.recon.inference import Prior, ReconResult, infer
from src.recon.propagation import reconstruct_volume
from src.tensor.serialization import load_tensor, save_tensor
from src.utils.config import Config
from src.utils.context import cleanup_context, get_context, initialize_context
from src.utils.errors import ConfigError, ContractError


def load_acquisitions(directory: Path, n_coils: int = 1) -> List[Acquisition]:
    """
    Read an acquisition directory.

    Accepts a directory with ``kspace.stf1`` (one slice), a directory of
    ``slice_*`` subdirectories, or a directory holding ``mask.stf1`` and
    ``phantom.stf1`` (written by the mask and phantom commands), which is
    projected through simulated coils.
    """
    if (directory / "kspace.stf1").is_file():
        return [Acquisition.load(directory)]
    slices = sorted(p for p in directory.glob("slice_*") if p.is_dir())
    if slices:
        return [Acquisition.load(p) for p in slices]
    if (directory / "mask.stf1").is_file() and (directory / "phantom.stf1").is_file():
        mask = SamplingMask.load(directory)
        phantom = load_tensor(directory / "phantom.stf1")
        coils = simulate_coils(*mask.shape, n_coils)
        return [simulate_acquisition(image, mask, coils) for image in np.reshape(phantom, (-1,) + mask.shape)]
    raise ContractError(f"{directory} holds no acquisition (kspace.stf1, slice_* or mask.stf1 + phantom.stf1)")


class ReconRunner:
    """
    Owns the prior, the acquisitions and the output directory of one
    ``recon`` invocation.
    """

    def __init__(
        self,
        config: Config,
        out_dir: Path,
        checkpoint: Optional[Path] = None,
        acquisition_dir: Optional[Path] = None,
        ablate: bool = False,
        propagate: bool = False,
        warm_iterations: Optional[int] = None,
        attention_maps: bool = False,
    ):
        self.config = config
        self.out_dir = Path(out_dir)
        self.checkpoint = checkpoint
        self.acquisition_dir = acquisition_dir
        self.ablate = ablate
        self.propagate = propagate
        self.warm_iterations = warm_iterations
        self.attention_maps = attention_maps
        self.prior: Optional[Prior] = None
        self.acquisitions: List[Acquisition] = []
        self.outputs: List[Path] = []
        self.logger = logging.getLogger("recon-runner")

    async def initialize(self) -> "ReconRunner":
        """Load (or create) the prior and the acquisitions."""
        inference = self.config.inference
        await initialize_context(self.config.to_dict(), self.config.seed, self.out_dir)

        if inference.mode == "dip":
            if self.checkpoint is not None:
                self.logger.warning("DIP mode ignores the checkpoint and starts from random weights")
            self.prior = Prior.untrained(self.config.synthesizer, inference.seed)
        else:
            if self.checkpoint is None:
                raise ConfigError("zero-shot mode needs --checkpoint (or use --mode dip)")
            self.prior = Prior.from_checkpoint(self.checkpoint)

        if self.acquisition_dir is not None:
            self.acquisitions = load_acquisitions(self.acquisition_dir, self.config.acquisition.n_coils)
        else:
            self.acquisitions = self._simulate()
        self.logger.info(
            f"Initialized {self.prior.mode} reconstruction of {len(self.acquisitions)} slice(s) "
            f"at {self.acquisitions[0].shape[0]}x{self.acquisitions[0].shape[1]}"
        )
        return self

    def _simulate(self) -> List[Acquisition]:
        acq = self.config.acquisition
        mask = generate_vdrs_mask(acq.size, acq.size, acq.acceleration, acq.seed)
        coils = simulate_coils(acq.size, acq.size, acq.n_coils)
        rng = get_context().rng("phantom")
        if acq.phantom == "digits":
            images = [make_digit_phantom(acq.size, acq.noise_variance, rng=rng) for _ in range(acq.n_slices)]
        else:
            images = list(make_volume(acq.size, acq.n_slices, rng))
        return [simulate_acquisition(image, mask, coils) for image in images]

    async def run(self) -> Dict[str, ReconResult]:
        """Reconstruct every slice and write the results directory."""
        inference = self.config.inference
        results: Dict[str, ReconResult] = {}

        if self.ablate:
            for index, acquisition in enumerate(self.acquisitions):
                per_mode = await asyncio.to_thread(ablation_run, self.prior, acquisition, inference)
                for mode, result in per_mode.items():
                    key = mode if len(self.acquisitions) == 1 else f"slice_{index:03d}/{mode}"
                    results[key] = result
                    self._write(self.out_dir / key, result, acquisition)
            return results

        if self.propagate:
            # slices depend on each other, so they run in order
            ordered = reconstruct_volume(self.prior, self.acquisitions, inference, True, self.warm_iterations)
        else:
            ordered = await asyncio.gather(*(
                asyncio.to_thread(infer, self.prior, acquisition, inference, index)
                for index, acquisition in enumerate(self.acquisitions)
            ))

        for index, (acquisition, result) in enumerate(zip(self.acquisitions, ordered)):
            key = "." if len(self.acquisitions) == 1 else f"slice_{index:03d}"
            results[key] = result
            self._write(self.out_dir / key, result, acquisition)
        return results

    def _write(self, directory: Path, result: ReconResult, acquisition: Acquisition) -> None:
        directory.mkdir(parents=True, exist_ok=True)
        zero_filled = acquisition.zero_filled()
        self.outputs.append(save_tensor(directory / "recon.stf1", result.image))
        self.outputs.append(save_tensor(directory / "zf.stf1", zero_filled))
        (directory / "loss_trace.txt").write_text(result.trace_text(), encoding="utf-8")
        self.outputs.append(directory / "loss_trace.txt")
        reference = acquisition.reference
        if reference is not None:
            self.outputs.append(save_tensor(directory / "reference.stf1", reference))
            if min(reference.shape) >= WINDOW_SIZE:
                report = MetricReport(result.psnr, result.ssim)
                zf_report = MetricReport(psnr(zero_filled, reference), ssim(zero_filled, reference))
                self.outputs.append(report.save(directory / "metrics.txt"))
                self.outputs.append(zf_report.save(directory / "metrics_zf.txt"))
                self.logger.info(
                    f"{directory.name}: psnr {report.psnr:.2f} dB (ZF {zf_report.psnr:.2f}), "
                    f"ssim {report.ssim:.4f} (ZF {zf_report.ssim:.4f})"
                )
            else:
                self.logger.warning(f"{directory}: image smaller than the SSIM window, metrics skipped")
        self.outputs.extend(save_recon_previews(directory, result.image, zero_filled, reference))
        if self.attention_maps and result.final_state is not None:
            self._write_attention(directory / "attention", result)

    def _write_attention(self, directory: Path, result: ReconResult) -> None:
        state = result.final_state
        maps = state.synthesizer.attention_maps(state.latents, state.noise)
        first_per_layer: Dict[str, Tuple[str, np.ndarray]] = {}
        for slot, stack in maps.items():
            first_per_layer.setdefault(slot.split(".")[0], (slot, stack))
        self.outputs.extend(save_attention_maps(dict(first_per_layer.values()), directory))

    async def cleanup(self) -> None:
        try:
            self.logger.info("Cleaning up reconstruction resources")
            await cleanup_context()
        except Exception as e:
            self.logger.error(f"Error during cleanup: {e}")
