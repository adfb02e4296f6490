"""Training losses for stage one and their report container.

All L1 terms are means over elements so magnitudes are width-independent.
The adversarial objective follows the classic two-player form; the generator
uses the non-saturating variant (maximize log D(fake)).
"""

from __future__ import annotations

from dataclasses import dataclass

from .autodiff import Tensor, as_tensor, log, mean_abs, tmean
from .autoencoder import HandAutoencoder, NotTrainedError, perceptual_features

DIS_WEIGHT = 0.5  # fixed weight of the disentanglement term in the stage-one total


@dataclass
class LossReport:
    """Scalar loss parts of one stage-one step; total = rec + adv_g + perc + 0.5 * dis."""

    rec: float
    perc: float
    adv_g: float
    adv_d: float
    dis: float

    @property
    def total(self) -> float:
        return loss_total_stage1(self.rec, self.adv_g, self.perc, self.dis)

    def as_dict(self) -> dict:
        return {
            "rec": self.rec,
            "perc": self.perc,
            "adv_g": self.adv_g,
            "adv_d": self.adv_d,
            "dis": self.dis,
            "total": self.total,
        }


def loss_rec(hands, hands_hat) -> Tensor:
    """Mean absolute element difference between target and predicted hands."""
    hands, hands_hat = as_tensor(hands), as_tensor(hands_hat)
    if hands.shape != hands_hat.shape:
        raise ValueError(f"shape mismatch: {hands.shape} vs {hands_hat.shape}")
    return mean_abs(hands, hands_hat)


def loss_perc(hands, hands_hat, extractor: HandAutoencoder) -> Tensor:
    """Mean absolute difference of frozen-extractor features."""
    if extractor is None:
        raise NotTrainedError("perceptual extractor is missing")
    hands, hands_hat = as_tensor(hands), as_tensor(hands_hat)
    return mean_abs(perceptual_features(extractor, hands), perceptual_features(extractor, hands_hat))


def loss_adv(discriminate, hands_real, hands_fake) -> tuple[Tensor, Tensor]:
    """Adversarial terms, both as scores to maximize.

    generator term  = E[log D(fake)]                     (non-saturating)
    discriminator term = E[log D(real)] + E[log(1 - D(fake))], fake detached
    """
    hands_real, hands_fake = as_tensor(hands_real), as_tensor(hands_fake)
    gen_term = tmean(log(discriminate(hands_fake)))
    d_real = tmean(log(discriminate(hands_real)))
    d_fake = tmean(log(1.0 - discriminate(hands_fake.detach())))
    return gen_term, d_real + d_fake


def loss_total_stage1(rec, adv, perc, dis) -> float | Tensor:
    """Weighted stage-one objective: rec + adv + perc + 0.5 * dis."""
    return rec + adv + perc + DIS_WEIGHT * dis
