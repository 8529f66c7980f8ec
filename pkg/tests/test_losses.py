import math

import numpy as np
import pytest

from src.tensor.tensor import Tensor, double_precision, grad
from src.training.losses import discriminator_loss, discriminator_loss_terms, generator_loss, gradient_penalty

LN2 = math.log(2.0)


def _linear_logits(images: Tensor, weights) -> Tensor:
    return (images * weights).sum(axis=1)


def test_generator_loss_at_zero_logits():
    assert generator_loss(np.zeros(4)).item() == pytest.approx(LN2, rel=1e-6)


def test_generator_loss_falls_as_fakes_fool_the_critic():
    assert generator_loss(np.full(3, 5.0)).item() < generator_loss(np.full(3, -5.0)).item()


def test_discriminator_loss_without_penalty():
    real = Tensor(np.zeros((2, 4)), requires_grad=True)
    logits_real = _linear_logits(real, np.ones(4))
    terms = discriminator_loss_terms(np.zeros(2), logits_real, real, penalty_weight=0.0)
    assert terms.total.item() == pytest.approx(2 * LN2, rel=1e-6)
    assert terms.penalty.item() == 0.0


def test_penalty_of_unit_gradient_critic():
    # logits are linear in the image with a unit-norm weight vector
    real = Tensor(np.zeros((2, 4)), requires_grad=True)
    weights = np.full(4, 0.5)
    terms = discriminator_loss_terms(np.zeros(2), _linear_logits(real, weights), real, penalty_weight=10.0)
    assert terms.penalty.item() == pytest.approx(1.0, rel=1e-6)
    assert terms.total.item() == pytest.approx(2 * LN2 + 5.0, rel=1e-6)


def test_penalty_matches_finite_differences():
    rng = np.random.default_rng(0)
    data = rng.standard_normal((3, 5))
    with double_precision():
        real = Tensor(data, requires_grad=True)
        logits = (real * real * real).sum(axis=1)
        penalty = gradient_penalty(logits, real).item()
    step = 1e-6
    expected = 0.0
    for n in range(3):
        row = np.zeros(5)
        for k in range(5):
            bumped = data[n].copy()
            bumped[k] += step
            lowered = data[n].copy()
            lowered[k] -= step
            row[k] = ((bumped ** 3).sum() - (lowered ** 3).sum()) / (2 * step)
        expected += (row ** 2).sum()
    assert penalty == pytest.approx(expected / 3, rel=1e-5)


def test_penalty_trains_the_critic():
    # penalty = ||w||^2 for a linear critic, so its gradient is 2w
    with double_precision():
        weights = Tensor(np.array([0.5, -1.0, 2.0]), requires_grad=True)
        real = Tensor(np.ones((2, 3)), requires_grad=True)
        penalty = gradient_penalty(_linear_logits(real, weights), real)
        (g,) = grad(penalty, [weights])
    np.testing.assert_allclose(g.numpy(), 2 * np.array([0.5, -1.0, 2.0]), rtol=1e-10)


def test_total_loss_helper_agrees_with_terms():
    real = Tensor(np.ones((2, 4)), requires_grad=True)
    logits = _linear_logits(real, np.full(4, 0.25))
    terms = discriminator_loss_terms(np.array([0.3, -0.2]), logits, real)
    real_again = Tensor(np.ones((2, 4)), requires_grad=True)
    total = discriminator_loss(np.array([0.3, -0.2]), _linear_logits(real_again, np.full(4, 0.25)), real_again)
    assert total.item() == pytest.approx(terms.total.item())
