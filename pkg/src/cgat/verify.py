"""Self-check routines: closed-form-vs-oracle and gradient-vs-finite-difference.

Both are exposed through the CLI (``chcm-check``, ``grad-check``) and
reused by the test suite, so the shipped binary can re-verify its own
core numerics on any machine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cgat import autodiff as ad
from cgat.attack import taped_alignment_loss
from cgat.center import center_objective, chcm, oracle_center
from cgat.model import base_loss, init_model
from cgat.train import adv_loss


@dataclass
class CheckResult:
    passed: int
    total: int
    failures: list

    @property
    def ok(self) -> bool:
        return self.passed == self.total


def chcm_check(n_instances=200, seed=0, bits=(4, 8, 12), tol=1e-9) -> CheckResult:
    """Random instances where the closed form must match brute force.

    Draws random code sets (1-50 positives, 0-50 negatives) and random
    nonnegative weights; the objective value of the closed-form center
    must equal the exhaustive minimum (ties in the argmin are fine).
    """
    rng = np.random.default_rng(seed)
    failures = []
    for i in range(n_instances):
        k = int(rng.choice(bits))
        n_pos = int(rng.integers(1, 51))
        n_neg = int(rng.integers(0, 51))
        pos = rng.choice([-1, 1], size=(n_pos, k)).astype(np.int8)
        neg = rng.choice([-1, 1], size=(n_neg, k)).astype(np.int8)
        w_pos = rng.uniform(0.0, 5.0, size=n_pos)
        w_neg = rng.uniform(0.0, 5.0, size=n_neg)
        closed = chcm(pos, neg, w_pos, w_neg)
        psi_closed = center_objective(closed, pos, neg, w_pos, w_neg)
        _, psi_best = oracle_center(pos, neg, w_pos, w_neg)
        if abs(psi_closed - psi_best) > tol:
            failures.append((i, k, psi_closed, psi_best))
    return CheckResult(n_instances - len(failures), n_instances, failures)


def finite_difference(loss_fn, tensors, step=1e-5):
    """Central finite differences of a scalar closure over tensor entries."""
    grads = []
    for t in tensors:
        grad = np.zeros_like(t.value)
        flat_v = t.value.reshape(-1)
        flat_g = grad.reshape(-1)
        for i in range(flat_v.size):
            orig = flat_v[i]
            flat_v[i] = orig + step
            f_plus = loss_fn()
            flat_v[i] = orig - step
            f_minus = loss_fn()
            flat_v[i] = orig
            flat_g[i] = (f_plus - f_minus) / (2.0 * step)
        grads.append(grad)
    return grads


def max_relative_error(analytic, numeric):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        err = np.abs(a - n) / np.maximum(1.0, np.abs(n))
        worst = max(worst, float(err.max(initial=0.0)))
    return worst


def grad_check(n_models=5, seed=0, step=1e-5, tol=1e-4) -> CheckResult:
    """Check analytic gradients of every training/attack loss.

    For each seeded model, the gradients of the base loss, the attack
    loss, the defense loss, and their lambda-weighted combination are
    compared against central finite differences over all parameters and
    the input batch.
    """
    rng = np.random.default_rng(seed)
    failures = []
    total = 0
    for m in range(n_models):
        model = init_model([6, 10, 8], seed=seed + m)
        batch = 4
        x = ad.Tensor(rng.uniform(0.0, 1.0, size=(batch, 6)))
        labels = rng.integers(0, 2, size=(batch, 3)).astype(np.float64)
        labels[:, 0] = 1  # every sample keeps at least one class
        centers = rng.choice([-1, 1], size=(batch, 8)).astype(np.float64)
        lam = 0.7

        def loss_ori():
            return float(base_loss(ad.Tape(), model, x.value, labels).value)

        def loss_ca():
            tape = ad.Tape()
            return float(taped_alignment_loss(tape, model, ad.Tensor(x.value), centers).value)

        def loss_adv():
            return float(adv_loss(ad.Tape(), model, x.value, centers).value)

        def loss_cat():
            return loss_ori() + lam * loss_adv()

        cases = {
            "L_ori": (loss_ori, _taped_ori),
            "L_ca": (loss_ca, _taped_ca),
            "L_adv": (loss_adv, _taped_adv),
            "L_cat": (loss_cat, _taped_cat),
        }
        for name, (closure, taped) in cases.items():
            total += 1
            tensors = list(model.params()) + [x]
            tape = ad.Tape()
            loss = taped(tape, model, x, labels, centers, lam)
            tape.backward(loss)
            analytic = [t.grad.copy() for t in tensors]
            numeric = finite_difference(closure, tensors, step=step)
            err = max_relative_error(analytic, numeric)
            if err >= tol:
                failures.append((m, name, err))
    return CheckResult(total - len(failures), total, failures)


def _taped_ori(tape, model, x, labels, centers, lam):
    # base_loss builds its own input tensor, so re-run it with x on this
    # tape to also collect the input gradient
    from cgat.model import continuous_code, pairwise_similarity, quantize, QUANT_PENALTY

    h = continuous_code(tape, model, x)
    theta = ad.mul_const(tape, ad.gram(tape, h), 0.5)
    n = x.value.shape[0]
    n_pairs = n * (n - 1) // 2
    upper = np.triu(np.ones((n, n)), k=1) / max(n_pairs, 1)
    sim = pairwise_similarity(labels, labels)
    pair = ad.sub(
        tape,
        ad.weighted_sum(tape, ad.log1pexp(tape, theta), upper),
        ad.weighted_sum(tape, theta, upper * sim),
    )
    residual = ad.add_const(tape, h, -quantize(h.value).astype(np.float64))
    quant = ad.tsum(tape, ad.square(tape, residual))
    return ad.add(tape, pair, ad.mul_const(tape, quant, QUANT_PENALTY / n))


def _taped_ca(tape, model, x, labels, centers, lam):
    return taped_alignment_loss(tape, model, x, centers)


def _taped_adv(tape, model, x, labels, centers, lam):
    return taped_alignment_loss(tape, model, x, centers)


def _taped_cat(tape, model, x, labels, centers, lam):
    ori = _taped_ori(tape, model, x, labels, centers, lam)
    return ad.add(tape, ori, ad.mul_const(tape, _taped_adv(tape, model, x, labels, centers, lam), lam))
