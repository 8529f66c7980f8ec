"""
Adversarial objectives.

The generator minimizes the non-saturating logistic loss; the
discriminator minimizes the logistic loss on fake and real samples plus a
gradient penalty on real samples.
"""

from dataclasses import dataclass

from src.tensor import functional as F
from src.tensor.tensor import ArrayLike, Tensor, as_tensor, grad, reshape


def generator_loss(logits_fake: ArrayLike) -> Tensor:
    """mean softplus(-D(fake)), i.e. -E[log sigmoid(D(fake))]."""
    return F.softplus(-as_tensor(logits_fake)).mean()


def gradient_penalty(logits_real: Tensor, real_images: Tensor) -> Tensor:
    """
    Batch mean of the squared norm of d logit / d image; axis 0 of
    ``real_images`` is the batch.

    ``real_images`` must be the leaf the logits were computed from; the
    result stays on the tape so the discriminator can be trained through it.
    """
    (gradient,) = grad(logits_real.sum(), [real_images], create_graph=True)
    per_sample = reshape(gradient * gradient, (gradient.shape[0], -1)).sum(axis=1)
    return per_sample.mean()


@dataclass
class DiscriminatorLoss:
    fake: Tensor
    real: Tensor
    penalty: Tensor
    penalty_weight: float

    @property
    def total(self) -> Tensor:
        return self.fake + self.real + self.penalty * (0.5 * self.penalty_weight)


def discriminator_loss_terms(
    logits_fake: ArrayLike,
    logits_real: Tensor,
    real_images: Tensor,
    penalty_weight: float = 10.0,
) -> DiscriminatorLoss:
    fake = F.softplus(as_tensor(logits_fake)).mean()
    real = F.softplus(-logits_real).mean()
    if penalty_weight > 0:
        penalty = gradient_penalty(logits_real, real_images)
    else:
        penalty = Tensor(0.0)
    return DiscriminatorLoss(fake, real, penalty, penalty_weight)


def discriminator_loss(
    logits_fake: ArrayLike,
    logits_real: Tensor,
    real_images: Tensor,
    penalty_weight: float = 10.0,
) -> Tensor:
    """softplus(D(fake)) + softplus(-D(real)) + penalty_weight / 2 * E||grad D(real)||^2."""
    return discriminator_loss_terms(logits_fake, logits_real, real_images, penalty_weight).total
