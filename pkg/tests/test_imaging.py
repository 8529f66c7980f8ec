import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.imaging.coils import CoilSet, simulate_coils
from src.imaging.masks import SamplingMask, dc_block, generate_vdrs_mask, radial_density
from src.imaging.operator import (
    Acquisition,
    ImagingOperator,
    apply_adjoint,
    apply_forward,
    coil_combine,
    enforce_data_consistency,
    simulate_acquisition,
)
from src.imaging.phantoms import (
    NOISE_LADDER,
    BrainGeometry,
    make_brain_phantom,
    make_digit_phantom,
    make_volume,
    noise_ladder,
    zero_pad,
)
from src.tensor import functional as F
from src.tensor.tensor import double_precision
from src.utils.errors import ConfigError, ContractError

seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


def _complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.mark.parametrize("acceleration", [2.0, 4.0, 8.0])
def test_mask_hits_target_acceleration(acceleration):
    for seed in range(20):
        mask = generate_vdrs_mask(64, 64, acceleration, seed)
        target = 64 * 64 / acceleration
        assert abs(mask.n_sampled - target) <= 0.1 * target
        assert mask.mask[dc_block(64, 64)].all()


def test_mask_is_reproducible():
    a = generate_vdrs_mask(32, 32, 4.0, seed=1)
    b = generate_vdrs_mask(32, 32, 4.0, seed=1)
    np.testing.assert_array_equal(a.mask, b.mask)
    assert not np.array_equal(a.mask, generate_vdrs_mask(32, 32, 4.0, seed=2).mask)


def test_radial_density_decreases():
    masks = np.stack([generate_vdrs_mask(64, 64, 4.0, seed).mask for seed in range(50)])
    density = radial_density(masks, n_bins=8)
    assert density[0] > density[-1]
    assert np.all(np.diff(density) <= 0.01)


def test_full_sampling_and_invalid_rates():
    assert generate_vdrs_mask(8, 8, 1.0, seed=0).mask.all()
    with pytest.raises(ConfigError):
        generate_vdrs_mask(8, 8, 0.5, seed=0)
    with pytest.raises(ConfigError):
        # 16 forced DC samples against a budget of 2
        generate_vdrs_mask(8, 8, 32.0, seed=0)


def test_mask_files_keep_metadata(tmp_path):
    mask = generate_vdrs_mask(16, 16, 2.0, seed=4)
    mask.save(tmp_path)
    loaded = SamplingMask.load(tmp_path)
    np.testing.assert_array_equal(loaded.mask, mask.mask)
    assert loaded.target_acceleration == 2.0
    assert loaded.seed == 4


@pytest.mark.parametrize("n_coils", [1, 4, 8])
def test_simulated_coils_have_unit_sum_of_squares(n_coils):
    coils = simulate_coils(16, 16, n_coils)
    assert coils.maps.shape == (n_coils, 16, 16)
    np.testing.assert_allclose(coils.sum_of_squares(), 1.0, rtol=1e-5)


def test_coils_need_at_least_one():
    with pytest.raises(ConfigError):
        simulate_coils(8, 8, 0)


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_forward_and_adjoint_are_adjoint(seed):
    rng = np.random.default_rng(seed)
    operator = ImagingOperator(generate_vdrs_mask(16, 16, 2.0, seed % 1000), simulate_coils(16, 16, 4))
    x = _complex(rng, (16, 16))
    y = _complex(rng, (4, 16, 16))
    with double_precision():
        ax = apply_forward(operator, x).numpy()
        ahy = apply_adjoint(operator, y).numpy()
    lhs = np.vdot(ax, y)
    rhs = np.vdot(x, ahy)
    assert abs(lhs - rhs) <= 1e-4 * max(abs(lhs), 1.0)


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_operator_is_linear(seed):
    rng = np.random.default_rng(seed)
    operator = ImagingOperator(generate_vdrs_mask(16, 16, 4.0, 0), simulate_coils(16, 16, 2))
    x1, x2 = _complex(rng, (16, 16)), _complex(rng, (16, 16))
    with double_precision():
        combined = apply_forward(operator, 2.0 * x1 - 3.0 * x2).numpy()
        separate = 2.0 * apply_forward(operator, x1).numpy() - 3.0 * apply_forward(operator, x2).numpy()
    np.testing.assert_allclose(combined, separate, atol=1e-9)


def test_full_sampling_gram_is_identity():
    rng = np.random.default_rng(0)
    operator = ImagingOperator(generate_vdrs_mask(16, 16, 1.0, 0), simulate_coils(16, 16, 4))
    x = _complex(rng, (16, 16)).astype(np.complex64)
    recovered = apply_adjoint(operator, apply_forward(operator, x)).numpy()
    np.testing.assert_allclose(recovered, x, atol=1e-4)


def test_coil_combine_inverts_coil_weighting():
    rng = np.random.default_rng(1)
    coils = simulate_coils(16, 16, 4)
    image = _complex(rng, (16, 16)).astype(np.complex64)
    np.testing.assert_allclose(coil_combine(coils.maps * image, coils).numpy(), image, atol=1e-4)


def test_adjacent_coils_see_different_regions():
    maps = np.abs(simulate_coils(16, 16, 4).maps.astype(np.complex128))
    for c in range(4):
        a, b = maps[c], maps[(c + 1) % 4]
        correlation = np.sum(a * b) / np.sqrt(np.sum(a * a) * np.sum(b * b))
        assert correlation < 0.999


def test_coil_combine_is_the_pixelwise_least_squares_solution():
    rng = np.random.default_rng(2)
    coils = simulate_coils(8, 8, 3)
    coil_images = _complex(rng, (3, 8, 8))
    with double_precision():
        combined = coil_combine(coil_images, coils).numpy()
    maps = coils.maps.astype(np.complex128)
    expected = np.zeros((8, 8), dtype=np.complex128)
    for i in range(8):
        for j in range(8):
            solution, *_ = np.linalg.lstsq(maps[:, i, j, None], coil_images[:, i, j], rcond=None)
            expected[i, j] = solution[0]
    np.testing.assert_allclose(combined, expected, atol=1e-5)


def test_operator_shapes_must_agree():
    with pytest.raises(ContractError):
        ImagingOperator(generate_vdrs_mask(16, 16, 2.0, 0), simulate_coils(8, 8, 1))
    operator = ImagingOperator(generate_vdrs_mask(16, 16, 2.0, 0), CoilSet.single(16, 16))
    with pytest.raises(ContractError):
        apply_forward(operator, np.zeros((8, 8), dtype=np.complex64))


def test_strict_data_consistency_restores_sampled_kspace(acquisition):
    estimate = np.zeros(acquisition.shape, dtype=np.complex64)
    merged = enforce_data_consistency(acquisition.operator, estimate, acquisition.kspace)
    sampled = acquisition.operator.mask.mask.astype(bool)
    spectrum = F.fft2(merged).numpy()
    np.testing.assert_allclose(spectrum[sampled], acquisition.kspace[0][sampled], atol=1e-5)


def test_zero_filled_equals_adjoint(acquisition):
    np.testing.assert_allclose(
        acquisition.zero_filled(),
        apply_adjoint(acquisition.operator, acquisition.kspace).numpy(),
    )


def test_acquisition_directory_round_trip(tmp_path, acquisition):
    acquisition.save(tmp_path)
    loaded = Acquisition.load(tmp_path)
    np.testing.assert_array_equal(loaded.kspace, acquisition.kspace)
    np.testing.assert_array_equal(loaded.reference, acquisition.reference)
    with pytest.raises(ContractError):
        Acquisition.load(tmp_path / "missing")


def test_digit_phantom_is_binary_without_noise():
    image = make_digit_phantom(32)
    assert image.dtype == np.complex64
    assert set(np.unique(image.real)) == {0.0, 1.0}
    assert np.all(image.imag == 0)


def test_digit_phantom_limits():
    with pytest.raises(ConfigError):
        make_digit_phantom(8)
    with pytest.raises(ConfigError):
        make_digit_phantom(32, noise_variance=-1.0)


def test_noise_ladder_levels():
    ladder = noise_ladder(32, np.random.default_rng(0))
    assert tuple(ladder) == NOISE_LADDER
    noisy = ladder[0.1].real - ladder[0.0].real
    assert 0.05 < noisy.var() < 0.15


def test_brain_phantom_is_complex_with_unit_peak():
    image = make_brain_phantom(32, np.random.default_rng(0))
    assert image.shape == (32, 32)
    np.testing.assert_allclose(np.abs(image).max(), 1.0, rtol=1e-5)


def test_volume_is_one_subject_across_slices():
    volume = make_volume(32, 4, np.random.default_rng(0))
    assert volume.shape == (4, 32, 32)
    assert not np.array_equal(volume[0], volume[1])
    single = make_volume(32, 1, np.random.default_rng(0))[0]
    np.testing.assert_array_equal(single, BrainGeometry.random(np.random.default_rng(0)).render(32, 0.0))
    with pytest.raises(ConfigError):
        BrainGeometry.random(np.random.default_rng(0)).render(32, 1.5)


def test_zero_pad_centers_the_image():
    padded = zero_pad(np.ones((4, 4), dtype=np.complex64), 8)
    assert padded.shape == (8, 8)
    assert padded.sum() == 16
    with pytest.raises(ContractError):
        zero_pad(np.ones((8, 8)), 4)


def test_simulated_acquisition_is_masked(phantom):
    mask = generate_vdrs_mask(16, 16, 4.0, 0)
    acquisition = simulate_acquisition(phantom, mask, simulate_coils(16, 16, 2))
    assert acquisition.kspace.shape == (2, 16, 16)
    assert np.all(acquisition.kspace[:, mask.mask == 0] == 0)
