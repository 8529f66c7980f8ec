"""
End-to-end reconstruction experiments at desk scale. Each one takes
minutes of CPU time, so they only run with ``pytest -m slow``.
"""

from pathlib import Path

import numpy as np
import pytest

from src.analysis.attention_cost import measure_costs
from src.imaging.coils import simulate_coils
from src.imaging.masks import generate_vdrs_mask, radial_density
from src.imaging.operator import simulate_acquisition
from src.imaging.phantoms import make_digit_phantom, make_volume
from src.metrics.quality import psnr
from src.recon.ablation import ablation_run
from src.recon.inference import Prior, infer
from src.recon.propagation import propagate_weights
from src.training.dataset import ImageDataset
from src.training.trainer import Trainer
from src.utils.config import load_config

pytestmark = pytest.mark.slow

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


def _acquisition(image, acceleration, seed):
    h = image.shape[-1]
    return simulate_acquisition(image, generate_vdrs_mask(h, h, acceleration, seed), simulate_coils(h, h, 1))


@pytest.fixture(scope="module")
def toy_prior(tmp_path_factory):
    config = load_config(CONFIG_DIR / "toy.ini", overrides={"training": {"max_steps": 100}})
    dataset = ImageDataset.build(config.dataset, config.synthesizer.final_resolution, np.random.default_rng(0))
    result = Trainer(config, dataset, tmp_path_factory.mktemp("toy")).train()
    return config, Prior.from_checkpoint(result.checkpoints[-1])


def test_masks_over_many_seeds():
    for acceleration in (2.0, 4.0, 8.0):
        masks = [generate_vdrs_mask(64, 64, acceleration, seed) for seed in range(100)]
        target = 64 * 64 / acceleration
        assert all(abs(m.n_sampled - target) <= 0.1 * target for m in masks)
        density = radial_density(np.stack([m.mask for m in masks]), n_bins=8)
        assert density[0] > density[-1]


def test_self_attention_time_grows_faster():
    reports = measure_costs(resolutions=(16, 32, 64), n_latents=16, channels=16, repeats=3)
    ratios = [r.time_ratio for r in reports]
    assert ratios == sorted(ratios)


def test_dip_recovers_the_digit_phantom():
    config = load_config(CONFIG_DIR / "dip_phantom.ini")
    phantom = make_digit_phantom(32)
    passed = 0
    for seed in range(10):
        inference = config.inference.model_copy(update={"seed": seed})
        acquisition = _acquisition(phantom, 4.0, seed)
        result = infer(Prior.untrained(config.synthesizer, seed), acquisition, inference)
        zero_filled = psnr(acquisition.zero_filled(), phantom)
        if result.best_loss < 0.2 * result.initial_loss and result.psnr >= zero_filled + 3.0:
            passed += 1
    assert passed >= 8


def test_zero_shot_beats_dip(tmp_path):
    config = load_config(
        CONFIG_DIR / "default.ini",
        overrides={"training": {"max_steps": 300}, "dataset": {"n_images": 200, "n_validation": 10}},
    )
    dataset = ImageDataset.build(config.dataset, 64, np.random.default_rng(1))
    checkpoint = Trainer(config, dataset, tmp_path).train().checkpoints[-1]
    trained = Prior.from_checkpoint(checkpoint)
    inference = config.inference.model_copy(update={"max_iterations": 300})
    zero_shot, dip = [], []
    for index, image in enumerate(dataset.validation):
        acquisition = _acquisition(image, 4.0, index)
        zero_shot.append(infer(trained, acquisition, inference).psnr)
        dip.append(infer(Prior.untrained(config.synthesizer, index), acquisition, inference).psnr)
    assert np.mean(zero_shot) > np.mean(dip)


def test_ablation_ordering(toy_prior):
    config, prior = toy_prior
    inference = config.inference.model_copy(update={"max_iterations": 100})
    scores = {mode: [] for mode in ("None", "L", "LN", "LNW")}
    for seed in range(10):
        image = make_digit_phantom(32, rng=np.random.default_rng(seed))
        results = ablation_run(prior, _acquisition(image, 4.0, seed), inference.model_copy(update={"seed": seed}))
        for mode, result in results.items():
            scores[mode].append(result.psnr)
    means = [np.mean(scores[mode]) for mode in ("None", "L", "LN", "LNW")]
    assert means == sorted(means)


def test_weight_propagation_converges_faster(toy_prior):
    config, prior = toy_prior
    inference = config.inference.model_copy(update={"max_iterations": 500})
    volume = make_volume(32, 6, np.random.default_rng(0))
    acquisitions = [_acquisition(image, 4.0, 0) for image in volume]

    previous = infer(prior, acquisitions[0], inference)
    needed = []
    for index in range(1, len(acquisitions)):
        cold = infer(prior, acquisitions[index], inference, slice_index=index)
        warm = propagate_weights(previous, prior, acquisitions[index], inference, index)
        reached = [i for i, value in enumerate(warm.best_so_far()) if value <= cold.best_loss]
        needed.append(reached[0] + 1 if reached else inference.max_iterations + 1)
        previous = warm
    assert np.median(needed) <= 250
