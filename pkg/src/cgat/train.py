"""Min-max adversarial training loop guided by center codes.

Each batch: (a) center codes are recomputed from the current codebook,
(b) a PGD adversarial batch is crafted against a frozen model, (c) one
SGD-with-momentum step descends on ``loss = base + lambda * adversarial``,
and (d) the codebook entries of the batch are refreshed from the
post-step model. The baseline trainer is the same loop with the
adversarial machinery disabled, so ``lambda = 0`` with zero attack steps
reproduces it bit-for-bit under the same seed.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from cgat import autodiff as ad
from cgat.attack import AdvConfig, pgd, taped_alignment_loss
from cgat.center import batch_center_codes
from cgat.model import HashModel, base_loss, hash_codes
from cgat.serial import atomic_write


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; training aborted."""


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lam: float = 1.0
    adv: AdvConfig = field(default_factory=AdvConfig)
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch size >= 1")


@dataclass
class LogRow:
    epoch: int
    batch: int
    l_ori: float
    l_adv: float
    l_cat: float
    wall_ms: float


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)

    def epoch_means(self, column="l_cat"):
        by_epoch = {}
        for row in self.rows:
            by_epoch.setdefault(row.epoch, []).append(getattr(row, column))
        return {e: float(np.mean(v)) for e, v in sorted(by_epoch.items())}

    def to_csv(self, path):
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["epoch", "batch", "L_ori", "L_adv", "L_cat", "wall_ms"])
        for r in self.rows:
            writer.writerow([r.epoch, r.batch, repr(r.l_ori), repr(r.l_adv), repr(r.l_cat), f"{r.wall_ms:.3f}"])
        atomic_write(path, buf.getvalue().encode())


class CodeBook:
    """Training-sample hash codes, refreshed batch by batch.

    ``version`` increments on every refresh so the trainer can assert
    that center codes are recomputed from fresh entries.
    """

    def __init__(self, codes: np.ndarray):
        self.codes = np.asarray(codes, dtype=np.int8)
        self.version = 0

    def refresh(self, ids, codes):
        self.codes[ids] = codes
        self.version += 1


def adv_loss(tape, model: HashModel, adv_features: np.ndarray, centers: np.ndarray) -> ad.Tensor:
    """Defense-side loss: -(1/K) sum_i center_i . f(x'_i), on the tape."""
    adv_features = np.atleast_2d(np.asarray(adv_features, dtype=np.float64))
    centers = np.atleast_2d(np.asarray(centers))
    if adv_features.shape[0] != centers.shape[0]:
        raise ValueError("adversarial batch and centers must be aligned")
    return taped_alignment_loss(tape, model, ad.Tensor(adv_features), centers)


class _SGD:
    def __init__(self, model, cfg):
        self.cfg = cfg
        self.buffers = [np.zeros_like(p.value) for p in model.params()]

    def step(self, model):
        for p, buf in zip(model.params(), self.buffers):
            g = p.grad + self.cfg.weight_decay * p.value
            buf *= self.cfg.momentum
            buf += g
            p.value -= self.cfg.learning_rate * buf


def _run(model: HashModel, features, labels, cfg: TrainConfig, adversarial: bool) -> TrainLog:
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if features.shape[0] == 0:
        raise ValueError("empty training set")
    n = features.shape[0]
    rng = np.random.default_rng(cfg.seed)
    optimizer = _SGD(model, cfg)
    log = TrainLog()

    codebook = None
    if adversarial:
        codebook = CodeBook(hash_codes(model, features))
        seen_version = codebook.version

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for batch_no, start in enumerate(range(0, n, cfg.batch_size)):
            t0 = time.perf_counter()
            ids = order[start : start + cfg.batch_size]
            x_batch, y_batch = features[ids], labels[ids]

            if not all(np.isfinite(p.value).all() for p in model.params()):
                raise TrainingDiverged(
                    f"non-finite parameters entering epoch {epoch}, batch {batch_no}"
                )

            if adversarial:
                # centers must come from a codebook refreshed since last use
                assert codebook.version >= seen_version
                centers = batch_center_codes(codebook.codes, labels, y_batch)
                seen_version = codebook.version + 1
                x_adv = pgd(model, x_batch, centers, cfg.adv)

            tape = ad.Tape()
            l_ori = base_loss(tape, model, x_batch, y_batch)
            if adversarial:
                # adv_loss sums over the batch; the descent step uses the
                # batch mean, so fold 1/n into the weighting factor
                l_adv = adv_loss(tape, model, x_adv, centers)
                l_cat = ad.add(tape, l_ori, ad.mul_const(tape, l_adv, cfg.lam / len(ids)))
            else:
                l_adv = None
                l_cat = l_ori
            if not np.isfinite(l_cat.value):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}: "
                    f"L_ori={l_ori.value!r}"
                )
            tape.backward(l_cat)
            optimizer.step(model)

            if adversarial:
                codebook.refresh(ids, hash_codes(model, x_batch))

            log.rows.append(
                LogRow(
                    epoch=epoch,
                    batch=batch_no,
                    l_ori=float(l_ori.value),
                    l_adv=float(l_adv.value) if l_adv is not None else 0.0,
                    l_cat=float(l_cat.value),
                    wall_ms=(time.perf_counter() - t0) * 1e3,
                )
            )
    return log


def pretrain_baseline(model: HashModel, features, labels, cfg: TrainConfig) -> TrainLog:
    """Standard training on the base loss only (the undefended model)."""
    return _run(model, features, labels, cfg, adversarial=False)


def train_cgat(model: HashModel, features, labels, cfg: TrainConfig) -> TrainLog:
    """Center-guided adversarial training (mutates the model in place).

    With ``lam == 0`` and zero attack steps the adversarial machinery is
    skipped entirely (its gradient contribution would be exactly zero),
    which makes the trajectory bit-identical to the baseline trainer.
    """
    degenerate = cfg.lam == 0.0 and cfg.adv.steps == 0
    return _run(model, features, labels, cfg, adversarial=not degenerate)
