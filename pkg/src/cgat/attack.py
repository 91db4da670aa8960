"""PGD attack maximizing Hamming distance to center codes.

The attack loss for a sample is the negative normalized inner product
between its center code and the network's continuous output,

    L = -(1/K) * center . f(x'),

which increases exactly when the (relaxed) Hamming distance to the
center grows. Steps follow the sign of the input gradient and are
projected onto the L-inf ball around the original input and onto
[0,1]^d after every iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cgat import autodiff as ad
from cgat.model import HashModel, continuous_code


@dataclass
class AdvConfig:
    epsilon: float = 8 / 255
    alpha: float = 2 / 255
    steps: int = 7

    def __post_init__(self):
        if not 0 < self.alpha <= self.epsilon:
            raise ValueError("need 0 < alpha <= epsilon")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")


def alignment_loss_from_outputs(outputs: np.ndarray, centers: np.ndarray) -> float:
    """Attack loss evaluated directly on continuous codes.

    Sums -(1/K) * center_i . output_i over the batch; -1 per sample at
    perfect alignment, +1 when antipodal, 0 for a zero output.
    """
    outputs = np.atleast_2d(np.asarray(outputs, dtype=np.float64))
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    n_bits = centers.shape[1]
    return float(-(outputs * centers).sum() / n_bits)


def attack_loss(model: HashModel, x: np.ndarray, centers: np.ndarray) -> float:
    """Attack loss of the model's output for (batched) inputs x."""
    tape = ad.Tape()
    h = continuous_code(tape, model, ad.Tensor(np.atleast_2d(np.asarray(x, dtype=np.float64))))
    return alignment_loss_from_outputs(h.value, centers)


def taped_alignment_loss(tape, model: HashModel, x: ad.Tensor, centers: np.ndarray) -> ad.Tensor:
    """Differentiable attack loss for a batch already on a tape."""
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    h = continuous_code(tape, model, x)
    return ad.weighted_sum(tape, h, -centers / centers.shape[1])


def pgd(model: HashModel, x: np.ndarray, centers: np.ndarray, cfg: AdvConfig) -> np.ndarray:
    """Iterated sign-of-gradient ascent on the attack loss.

    Works on a (n, d) batch or a single (d,) vector; per-sample
    gradients are independent, so batching does not change results.
    Coordinates with exactly zero gradient take a zero step. With
    ``steps == 0`` the input is returned unchanged (a copy).
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x_orig = np.atleast_2d(x)
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    x_adv = x_orig.copy()
    lower = np.clip(x_orig - cfg.epsilon, 0.0, 1.0)
    upper = np.clip(x_orig + cfg.epsilon, 0.0, 1.0)
    for _ in range(cfg.steps):
        tape = ad.Tape()
        xt = ad.Tensor(x_adv)
        loss = taped_alignment_loss(tape, model, xt, centers)
        tape.backward(loss)
        x_adv = np.clip(x_adv + cfg.alpha * np.sign(xt.grad), lower, upper)
    return x_adv[0] if single else x_adv
