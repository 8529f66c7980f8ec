import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.tensor import functional as F
from src.tensor.gradcheck import check_gradients
from src.tensor.optim import (
    Adam,
    AdamHyper,
    AdamState,
    RMSprop,
    RMSpropHyper,
    RMSpropState,
    adam_step,
    rmsprop_step,
)
from src.tensor.registry import build_default_registry
from src.tensor.serialization import MAGIC, decode, encode, load_tensor, save_tensor
from src.tensor.tensor import Parameter, Tensor, double_precision, grad, is_grad_enabled, no_grad
from src.utils.errors import ContractError, DimensionError, NumericError

REGISTRY = build_default_registry()
seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


@pytest.mark.parametrize("op", REGISTRY.list_ops(), ids=lambda op: op.name)
def test_registered_op_gradients_match_central_differences(op):
    errors = check_gradients(op.fn, op.sample_inputs(seed=1), step=1e-3)
    assert max(errors) < 1e-3


def test_registry_lookup():
    assert REGISTRY.get_op("fft2").linear
    assert REGISTRY.get_op("no-such-op") is None


def test_fft2_matches_centered_numpy_transform():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((8, 16)) + 1j * rng.standard_normal((8, 16))
    expected = np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(x), norm="ortho"))
    with double_precision():
        np.testing.assert_allclose(F.fft2(x).numpy(), expected, atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_fft2_preserves_energy_and_inverts(seed):
    rng = np.random.default_rng(seed)
    x = (rng.standard_normal((2, 16, 16)) + 1j * rng.standard_normal((2, 16, 16))).astype(np.complex64)
    k = F.fft2(x).numpy()
    np.testing.assert_allclose(np.linalg.norm(k), np.linalg.norm(x), rtol=1e-5)
    np.testing.assert_allclose(F.ifft2(k).numpy(), x, atol=1e-5)


def test_fft2_rejects_non_power_of_two():
    with pytest.raises(DimensionError):
        F.fft2(np.zeros((6, 8)))


def test_conv2d_matches_direct_correlation():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((5, 6, 2))
    kernel = rng.standard_normal((3, 3, 2, 4))
    padded = np.pad(x, ((1, 1), (1, 1), (0, 0)))
    expected = np.zeros((5, 6, 4))
    for i in range(5):
        for j in range(6):
            expected[i, j] = np.einsum("abc,abco->o", padded[i:i + 3, j:j + 3], kernel)
    with double_precision():
        np.testing.assert_allclose(F.conv2d(x, kernel).numpy(), expected, atol=1e-10)


def test_conv2d_checks_channels():
    with pytest.raises(DimensionError):
        F.conv2d(np.zeros((4, 4, 3)), np.zeros((3, 3, 2, 1)))


def test_upsample_doubles_extents():
    out = F.upsample2x(np.ones((4, 4, 2)), np.ones((3, 3, 2, 5)))
    assert out.shape == (8, 8, 5)


def test_fft2_matches_direct_dft_summation():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    centered = np.arange(4) - 2
    basis = np.exp(-2j * np.pi * np.outer(centered, centered) / 4) / 2.0
    expected = np.zeros((4, 4), dtype=complex)
    for k1 in range(4):
        for k2 in range(4):
            for n1 in range(4):
                for n2 in range(4):
                    expected[k1, k2] += x[n1, n2] * basis[k1, n1] * basis[k2, n2]
    with double_precision():
        np.testing.assert_allclose(F.fft2(x).numpy(), expected, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_softmax_rows_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    weights = F.softmax_rows(rng.standard_normal((5, 7)) * 30.0).numpy()
    assert np.all(weights >= 0)
    np.testing.assert_allclose(weights.sum(axis=-1), 1.0, rtol=1e-5)


def test_softmax_rows_rejects_nan():
    with pytest.raises(NumericError):
        F.softmax_rows(np.array([[0.0, np.nan]]))


def test_softmax_rows_exact_values():
    weights = F.softmax_rows(np.array([[1.0, 2.0, 3.0]])).numpy()
    np.testing.assert_allclose(weights, [[0.09003057, 0.24472847, 0.66524096]], atol=1e-6)


def test_complex_gradient_convention():
    # L = |z|^2 = a^2 + b^2 has gradient 2a + 2ib
    z = Tensor(np.array([1.0 + 2.0j]), requires_grad=True)
    (g,) = grad((z.real() * z.real() + z.imag() * z.imag()).sum(), [z])
    np.testing.assert_allclose(g.numpy(), [2.0 + 4.0j])


def test_double_backward_through_create_graph():
    with double_precision():
        x = Tensor(np.array([1.5, -0.5]), requires_grad=True)
        (g,) = grad((x * x * x).sum(), [x], create_graph=True)
        (gg,) = grad(g.sum(), [x])
    np.testing.assert_allclose(gg.numpy(), 6.0 * np.array([1.5, -0.5]))


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = (x * 2.0).sum()
    assert not y.requires_grad and y.is_leaf


def test_grad_mode_is_local_to_each_thread():
    entered, release = threading.Event(), threading.Event()

    def hold_no_grad():
        with no_grad(), double_precision():
            entered.set()
            release.wait(timeout=10)

    worker = threading.Thread(target=hold_no_grad)
    worker.start()
    try:
        assert entered.wait(timeout=10)
        assert is_grad_enabled()
        x = Tensor(np.ones(3), requires_grad=True)
        (g,) = grad((x * x).sum(), [x])
    finally:
        release.set()
        worker.join()
    assert g.numpy().dtype == np.float32
    np.testing.assert_allclose(g.numpy(), 2.0)
    assert is_grad_enabled()


def test_grad_needs_scalar_output():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        grad(x * 2.0, [x])


def test_adam_first_step_moves_by_lr():
    params = {"w": np.array([1.0, -2.0])}
    grads = {"w": np.array([0.3, -4.0])}
    new, state = adam_step(params, grads, AdamState(), AdamHyper(lr=0.01))
    # bias-corrected first step is lr * sign(g)
    np.testing.assert_allclose(new["w"], params["w"] - 0.01 * np.sign(grads["w"]), rtol=1e-6)
    assert state.step == 1
    np.testing.assert_array_equal(params["w"], [1.0, -2.0])


def test_rmsprop_first_step_uses_unit_mean_square():
    params = {"w": np.array([0.0])}
    grads = {"w": np.array([1.0])}
    hyper = RMSpropHyper()
    new, state = rmsprop_step(params, grads, RMSpropState(), hyper)
    expected_ms = hyper.rho + (1.0 - hyper.rho)
    np.testing.assert_allclose(state.mean_square["w"], [expected_ms])
    np.testing.assert_allclose(new["w"], [-hyper.lr / np.sqrt(expected_ms + hyper.eps)])


def test_optimizer_rejects_mismatched_gradient():
    with pytest.raises(ContractError):
        adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState(), AdamHyper())
    with pytest.raises(ContractError):
        rmsprop_step({"w": np.zeros(2)}, {}, RMSpropState(), RMSpropHyper())


def test_optimizer_classes_update_parameters_in_place():
    w = Parameter(np.array([1.0, 1.0]), name="w")
    for optimizer in (Adam([("w", w)], AdamHyper(lr=0.1)), RMSprop([("w", w)])):
        before = w.numpy().copy()
        optimizer.zero_grad()
        (w * w).sum().backward()
        optimizer.step()
        assert np.all(w.numpy() < before)


def test_optimizer_learning_rate_can_change():
    optimizer = RMSprop([("w", Parameter(np.zeros(1)))])
    optimizer.set_lr(0.05)
    assert optimizer.lr == 0.05


def test_stf1_header_layout():
    payload = encode(np.zeros((2, 3), dtype=np.complex64))
    assert payload[:4] == MAGIC
    assert payload[4] == 1 and payload[5] == 2
    assert len(payload) == 6 + 8 + 2 * 3 * 8


def test_stf1_file_keeps_values(tmp_path):
    value = (np.arange(6).reshape(2, 3) + 1j).astype(np.complex64)
    path = save_tensor(tmp_path / "x.stf1", value)
    np.testing.assert_array_equal(load_tensor(path), value)


def test_stf1_rejects_truncated_body():
    payload = encode(np.ones(4, dtype=np.float32))
    with pytest.raises(ContractError):
        decode(payload[:-1])
    with pytest.raises(ContractError):
        decode(b"XXXX" + payload[4:])
