import asyncio
import math

import numpy as np
import pytest

from src.imaging.coils import CoilSet, simulate_coils
from src.imaging.masks import generate_vdrs_mask
from src.imaging.operator import simulate_acquisition
from src.imaging.phantoms import make_digit_phantom
from src.networks.checkpoint import save_checkpoint
from src.networks.discriminator import Discriminator
from src.networks.mapper import Mapper
from src.networks.synthesizer import LatentSet, Synthesizer
from src.recon import inference, propagation
from src.recon.ablation import ablation_run, build_default_registry
from src.recon.inference import (
    Prior,
    ReconResult,
    crop_extents,
    dc_loss,
    infer,
    rampdown_factor,
    rampup_factor,
    unadapted,
)
from src.recon.propagation import propagate_weights, reconstruct_volume
from src.tensor import functional as F
from src.tensor.gradcheck import check_gradients
from src.tensor.tensor import double_precision, is_grad_enabled, no_grad
from src.utils.config import InferenceConfig, SynthesizerConfig
from src.utils.errors import ConfigError, ContractError


def _centered_fft(x):
    return np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(x), norm="ortho"))


def test_dc_loss_matches_numpy(acquisition):
    rng = np.random.default_rng(0)
    image = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
    residual = (_centered_fft(image) - acquisition.kspace[0]) * acquisition.operator.mask.mask
    expected = 0.7 * np.abs(residual).sum() + 0.3 * np.sqrt((np.abs(residual) ** 2).sum())
    with double_precision():
        loss = dc_loss(acquisition.operator, image, acquisition.kspace, 0.7, 0.3).item()
        squared = dc_loss(acquisition.operator, image, acquisition.kspace, 0.0, 1.0, squared_l2=True).item()
    assert loss == pytest.approx(expected, rel=1e-9)
    assert squared == pytest.approx((np.abs(residual) ** 2).sum(), rel=1e-9)


def test_dc_loss_is_zero_on_the_reference(acquisition):
    assert dc_loss(acquisition.operator, acquisition.reference, acquisition.kspace).item() < 1e-3


@pytest.mark.parametrize("lambdas", [(0.0, 0.0), (-1.0, 1.0), (1.0, -0.5)])
def test_dc_loss_rejects_bad_weights(acquisition, lambdas):
    with pytest.raises(ConfigError):
        dc_loss(acquisition.operator, acquisition.reference, acquisition.kspace, *lambdas)


def test_rampdown_schedule():
    assert rampdown_factor(0, 100, 0.25) == 1.0
    assert rampdown_factor(75, 100, 0.25) == 1.0
    assert rampdown_factor(100, 100, 0.25) == pytest.approx(0.0, abs=1e-12)
    assert 0.0 < rampdown_factor(90, 100, 0.25) < 1.0
    assert rampdown_factor(99, 100, 0.0) == 1.0


def test_zero_iterations_returns_prior_output(dip_prior, acquisition, dip_config):
    result = infer(dip_prior, acquisition, dip_config.model_copy(update={"max_iterations": 0}))
    assert result.iterations_used == 0
    assert result.loss_trace == []
    assert result.best_loss == result.initial_loss
    np.testing.assert_array_equal(result.image, unadapted(dip_prior, acquisition, dip_config).image)


def test_inference_returns_best_iterate(dip_prior, acquisition, dip_config):
    result = infer(dip_prior, acquisition, dip_config)
    assert result.mode == "dip"
    assert result.iterations_used == 3
    assert result.best_loss == min(result.loss_trace)
    assert result.loss_trace[result.best_iteration] == result.best_loss
    assert result.initial_loss == pytest.approx(result.loss_trace[0], rel=1e-5)
    assert result.best_so_far()[-1] == result.best_loss
    assert result.image.shape == (16, 16)
    assert result.psnr is not None and math.isfinite(result.psnr)
    assert result.trace_text().splitlines()[0].startswith("0 ")


def test_inference_is_reproducible(dip_prior, acquisition, dip_config):
    first = infer(dip_prior, acquisition, dip_config)
    second = infer(dip_prior, acquisition, dip_config)
    assert first.loss_trace == second.loss_trace
    np.testing.assert_array_equal(first.image, second.image)


def test_inference_leaves_the_prior_untouched(dip_prior, acquisition, dip_config):
    before = dip_prior.synthesizer.state_dict()
    infer(dip_prior, acquisition, dip_config)
    for name, value in dip_prior.synthesizer.state_dict().items():
        np.testing.assert_array_equal(value, before[name])


def test_strict_data_consistency(dip_prior, acquisition, dip_config):
    result = infer(dip_prior, acquisition, dip_config.model_copy(update={"strict_dc": True}))
    sampled = acquisition.operator.mask.mask.astype(bool)
    np.testing.assert_allclose(F.fft2(result.image).numpy()[sampled], acquisition.kspace[0][sampled], atol=1e-5)


def test_inference_rejects_empty_configuration(dip_prior, acquisition, dip_config):
    with pytest.raises(ConfigError):
        infer(dip_prior, acquisition, dip_config.model_copy(update={"lambda1": 0.0, "lambda2": 0.0}))
    with pytest.raises(ConfigError):
        infer(dip_prior, acquisition, dip_config.model_copy(update={"optimize": []}))


def test_smaller_acquisitions_are_cropped(dip_prior, dip_config):
    acquisition = simulate_acquisition(make_digit_phantom(16)[4:12, 4:12], generate_vdrs_mask(8, 8, 2.0, 0), CoilSet.single(8, 8))
    assert crop_extents(dip_prior.synthesizer, acquisition.operator) == (8, 8)
    assert infer(dip_prior, acquisition, dip_config).image.shape == (8, 8)


def test_oversized_acquisition_is_a_contract_error(dip_prior, dip_config):
    phantom = make_digit_phantom(32)
    acquisition = simulate_acquisition(phantom, generate_vdrs_mask(32, 32, 2.0, 0), CoilSet.single(32, 32))
    with pytest.raises(ContractError):
        infer(dip_prior, acquisition, dip_config)


def test_zero_shot_from_checkpoint(tmp_path, config, acquisition):
    rng = np.random.default_rng(0)
    sections = {name: config.to_dict()[name] for name in ("synthesizer", "mapper", "discriminator")}
    save_checkpoint(
        tmp_path / "ckpt",
        Synthesizer(config.synthesizer, rng),
        Mapper(config.synthesizer, rng),
        Discriminator(config.discriminator, rng),
        sections,
    )
    prior = Prior.from_checkpoint(tmp_path / "ckpt")
    assert prior.mode == "zero-shot"
    result = infer(prior, acquisition, config.inference)
    assert result.mode == "zero-shot"
    assert result.iterations_used == 3


def test_ablation_ladder(dip_prior, acquisition, dip_config):
    results = ablation_run(dip_prior, acquisition, dip_config)
    assert list(results) == ["None", "L", "LN", "LNW"]
    assert results["None"].iterations_used == 0
    assert all(results[name].iterations_used == 3 for name in ("L", "LN", "LNW"))
    # every mode starts from the same latents and noise
    assert len({round(r.initial_loss, 4) for r in results.values()}) == 1


def test_ablation_rejects_unknown_mode(dip_prior, acquisition, dip_config):
    assert build_default_registry().get_mode("LNW").groups == ("latents", "noise", "weights")
    with pytest.raises(ConfigError):
        ablation_run(dip_prior, acquisition, dip_config, modes=["W"])


def test_volume_propagation_uses_warm_budget(dip_prior, acquisition, dip_config):
    results = reconstruct_volume(dip_prior, [acquisition, acquisition], dip_config, warm_iterations=1)
    assert [r.iterations_used for r in results] == [3, 1]
    independent = reconstruct_volume(dip_prior, [acquisition, acquisition], dip_config, propagate=False)
    assert [r.iterations_used for r in independent] == [3, 3]


def test_propagation_needs_adapted_state(dip_prior, acquisition, dip_config):
    with pytest.raises(ConfigError):
        propagate_weights(ReconResult(image=np.zeros((16, 16))), dip_prior, acquisition, dip_config, 1)


def test_warmup_schedule():
    assert rampup_factor(0, 300, 0.05) == pytest.approx(1 / 15)
    assert rampup_factor(14, 300, 0.05) == 1.0
    assert rampup_factor(0, 3, 0.05) == 1.0
    assert rampup_factor(0, 300, 0.0) == 1.0


def test_groups_have_their_own_learning_rates(dip_prior, acquisition, dip_config):
    assert InferenceConfig().group_lr("latents") == 0.1
    assert InferenceConfig().group_lr("weights") == 1e-3
    frozen = dip_config.model_copy(update={"weights_lr": 0.0, "max_iterations": 4})
    result = infer(dip_prior, acquisition, frozen)
    for name, value in dip_prior.synthesizer.state_dict().items():
        np.testing.assert_array_equal(result.final_state.synthesizer.state_dict()[name], value)


def _spiking_dc_loss(monkeypatch, at_iteration, factor=100.0):
    # call 0 is the starting-point evaluation, call i + 1 is iteration i
    calls = []

    def spiking(*args, **kwargs):
        loss = dc_loss(*args, **kwargs)
        calls.append(None)
        return loss * factor if len(calls) == at_iteration + 2 else loss

    monkeypatch.setattr(inference, "dc_loss", spiking)


def test_divergence_restores_the_best_state(monkeypatch, dip_prior, acquisition, dip_config):
    _spiking_dc_loss(monkeypatch, at_iteration=2)
    result = infer(dip_prior, acquisition, dip_config.model_copy(update={"max_iterations": 5}))
    trace = result.loss_trace
    assert result.iterations_used == 5
    assert trace[2] > 2 * min(trace[:2])
    assert result.best_iteration in (0, 1)
    # the iteration after the spike replays the best state
    assert trace[3] == trace[result.best_iteration]
    assert result.best_loss == min(trace)


def test_divergence_stops_without_backoffs_left(monkeypatch, dip_prior, acquisition, dip_config):
    _spiking_dc_loss(monkeypatch, at_iteration=2)
    config = dip_config.model_copy(update={"max_iterations": 5, "max_backoffs": 0})
    result = infer(dip_prior, acquisition, config)
    assert result.iterations_used == 3
    assert result.best_loss == min(result.loss_trace[:2])


def test_adapted_state_reproduces_the_returned_image(dip_prior, acquisition, dip_config):
    result = infer(dip_prior, acquisition, dip_config.model_copy(update={"max_iterations": 6}))
    state = result.final_state
    with no_grad():
        image = state.synthesizer(state.latents, state.noise).numpy()
    np.testing.assert_allclose(image, result.image, rtol=1e-5, atol=1e-6)


def test_propagation_passes_on_the_best_weights(monkeypatch, dip_prior, acquisition, dip_config):
    previous = infer(dip_prior, acquisition, dip_config)
    received = {}

    def capture(prior, acquisition, config, slice_index=0, warm_weights=None):
        received.update(warm_weights)
        return previous

    monkeypatch.setattr(propagation, "infer", capture)
    propagate_weights(previous, dip_prior, acquisition, dip_config, 1)
    best = previous.final_state.synthesizer.state_dict()
    assert set(received) == set(best)
    for name, value in best.items():
        np.testing.assert_array_equal(received[name], value)


def test_parallel_slices_match_sequential_ones(dip_prior, acquisition, dip_config):
    config = dip_config.model_copy(update={"max_iterations": 4})

    async def in_threads():
        return await asyncio.gather(*(
            asyncio.to_thread(infer, dip_prior, acquisition, config, index) for index in range(3)
        ))

    parallel = asyncio.run(in_threads())
    sequential = [infer(dip_prior, acquisition, config, index) for index in range(3)]
    for a, b in zip(parallel, sequential):
        np.testing.assert_allclose(a.loss_trace, b.loss_trace, rtol=1e-6)
    assert is_grad_enabled()


def test_dc_loss_gradient_through_the_synthesizer():
    rng = np.random.default_rng(1)
    config = SynthesizerConfig(n_layers=2, final_resolution=8, channels=[4, 4], n_latents=2, latent_dim=4)
    synthesizer = Synthesizer(config, rng)
    noise = synthesizer.sample_noise(rng)
    reference = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    acquisition = simulate_acquisition(reference, generate_vdrs_mask(8, 8, 2.0, seed=0), simulate_coils(8, 8, 2))
    latents = synthesizer.sample_latents(rng)

    def loss(local, global_):
        image = synthesizer(LatentSet(local, global_), noise)
        return dc_loss(acquisition.operator, image, acquisition.kspace, 0.5, 0.5)

    errors = check_gradients(loss, [latents.local.numpy(), latents.global_.numpy()], step=1e-5)
    assert max(errors) < 1e-4
