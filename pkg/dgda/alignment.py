"""
Adversarial source/target alignment of branch features.

Each branch's node features are perturbed by a learned map scaled by a fixed
intensity before a per-branch domain discriminator sees them. The
discriminator and the feature extractor are optimised alternately: their
parameter groups live in separate optimizers, so a step of one never touches
the other.
"""
import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .exceptions import ContractViolation
from .layers import Block, TwoLayerPerceptron

logger = logging.getLogger(__name__)

OUTPUT_FLOOR = 1e-7


class Perturbation(Block):
    def __init__(self, name: str, model_dim: int, delta: float, rng: np.random.Generator,
                 slope: float = ad.DEFAULT_LEAKY_SLOPE):
        if delta < 0:
            raise ContractViolation(f"perturb: delta must be >= 0, got {delta}")
        self.delta = delta
        self.net = TwoLayerPerceptron(f"{name}.perturb", model_dim, model_dim, model_dim, rng, slope)

    def __call__(self, features: ad.Tensor) -> ad.Tensor:
        return perturb(features, self)


def perturb(features: ad.Tensor, params: Perturbation) -> ad.Tensor:
    """H + delta * M(H); delta == 0 hands back H itself."""
    if params.delta == 0:
        return features
    return ad.add(features, ad.scalar_mul(params.net(features), params.delta))


class Discriminator(Block):
    """D -> hidden -> 1 perceptron with a sigmoid output: probability of 'source'."""

    def __init__(self, name: str, model_dim: int, hidden: int, rng: np.random.Generator,
                 slope: float = ad.DEFAULT_LEAKY_SLOPE):
        self.net = TwoLayerPerceptron(f"{name}.disc", model_dim, hidden, 1, rng, slope)

    def __call__(self, features: ad.Tensor) -> ad.Tensor:
        logits = self.net(features)
        return ad.sigmoid(ad.reshape(logits, (logits.shape[0],)))


def _floored(outputs: ad.Tensor) -> ad.Tensor:
    return ad.clip(outputs, OUTPUT_FLOOR, 1.0 - OUTPUT_FLOOR)


def discriminator_loss_from_outputs(src_outputs: ad.Tensor, tgt_outputs: ad.Tensor) -> ad.Tensor:
    if src_outputs.shape[0] == 0 or tgt_outputs.shape[0] == 0:
        raise ContractViolation("discriminator_loss: both domains need at least one row")
    src_term = ad.mean(ad.log(_floored(src_outputs)))
    ones = ad.Tensor(np.ones(tgt_outputs.shape[0]))
    tgt_term = ad.mean(ad.log(ad.sub(ones, _floored(tgt_outputs))))
    return ad.scalar_mul(ad.add(src_term, tgt_term), -1.0)


def adversarial_loss_from_outputs(tgt_outputs: ad.Tensor) -> ad.Tensor:
    if tgt_outputs.shape[0] == 0:
        raise ContractViolation("adversarial_loss: empty target batch")
    return ad.scalar_mul(ad.mean(ad.log(_floored(tgt_outputs))), -1.0)


def discriminator_loss(src_feats: ad.Tensor, tgt_feats: ad.Tensor, disc: Discriminator) -> ad.Tensor:
    if src_feats.shape[0] == 0 or tgt_feats.shape[0] == 0:
        raise ContractViolation("discriminator_loss: both domains need at least one row")
    return discriminator_loss_from_outputs(disc(src_feats), disc(tgt_feats))


def adversarial_loss(tgt_feats: ad.Tensor, disc: Discriminator) -> ad.Tensor:
    if tgt_feats.shape[0] == 0:
        raise ContractViolation("adversarial_loss: empty target batch")
    return adversarial_loss_from_outputs(disc(tgt_feats))


@dataclass
class AlignmentOptimizers:
    discriminator: ad.Adam
    encoder: ad.Adam


@dataclass
class AlignmentLosses:
    loss_d: float
    loss_adv: float


def _total(losses):
    total = losses[0]
    for loss in losses[1:]:
        total = ad.add(total, loss)
    return total


def alternate_step(batch, model, discriminators: dict, optimizers: AlignmentOptimizers,
                   k_disc: int = 1, adv_weight: float = 1.0) -> AlignmentLosses:
    """
    ``k_disc`` discriminator updates on L_D, then one feature-extractor update
    on ``adv_weight * L_adv``, both summed over branches.

    ``model.aligned_features(batch)`` must return ``{branch: (src, tgt)}``
    perturbed node features for every active branch.
    """
    if k_disc < 1:
        raise ContractViolation(f"alternate_step: k_disc must be >= 1, got {k_disc}")

    loss_d = 0.0
    for _ in range(k_disc):
        with ad.no_grad():
            features = model.aligned_features(batch)
        loss = _total([
            discriminator_loss(src, tgt, discriminators[branch])
            for branch, (src, tgt) in features.items()
        ])
        loss_d = loss.item()
        optimizers.discriminator.step(loss)

    features = model.aligned_features(batch)
    adversarial = _total([
        adversarial_loss(tgt, discriminators[branch]) for branch, (_, tgt) in features.items()
    ])
    loss_adv = adversarial.item()
    optimizers.encoder.step(ad.scalar_mul(adversarial, adv_weight))
    logger.debug("alignment step: L_D=%.6f L_adv=%.6f", loss_d, loss_adv)
    return AlignmentLosses(loss_d=loss_d, loss_adv=loss_adv)
