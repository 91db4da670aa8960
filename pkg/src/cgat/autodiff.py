"""Minimal reverse-mode autodiff over dense numpy arrays.

Only the handful of primitives needed by the hashing losses and the
sign-of-gradient attack are implemented: dense layers, tanh, Gram
matrices, elementwise arithmetic against constants, log(1+exp(.)),
squares and (weighted) sums. Everything is float64.

A :class:`Tape` records primitives in execution order; ``backward``
replays them in exact reverse order. Tapes are rebuilt per forward pass,
there is no graph reuse.
"""

from __future__ import annotations

import numpy as np


class EmptyTapeError(RuntimeError):
    """Backward was requested on a tape with no recorded operations."""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested primitive."""


class Tensor:
    """A value with a same-shape gradient buffer."""

    __slots__ = ("value", "grad")

    def __init__(self, value):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape})"


class Tape:
    """Ordered record of primitive operations for one forward pass."""

    def __init__(self):
        self._steps = []
        self._tensors = []

    def watch(self, *tensors):
        self._tensors.extend(tensors)

    def record(self, backward_fn, *tensors):
        self._steps.append(backward_fn)
        self._tensors.extend(tensors)

    def backward(self, loss):
        """Populate ``grad`` of every participating tensor from a scalar loss.

        Grad buffers are zeroed first, so calling backward twice on the
        same tape yields identical gradients. Returns nothing; read the
        ``grad`` fields of the tensors of interest.
        """
        if not self._steps:
            raise EmptyTapeError("backward on an empty tape")
        if loss.value.shape != ():
            raise ShapeError(f"loss must be scalar, got shape {loss.value.shape}")
        for t in self._tensors:
            t.grad = np.zeros_like(t.value)
        loss.grad = np.ones_like(loss.value)
        for fn in reversed(self._steps):
            fn()


def _as_2d(x):
    return x if x.ndim == 2 else x[None, :]


def dense(tape, x, weight, bias):
    """Affine layer: ``x @ weight.T + bias``.

    ``x`` may be a single vector (d,) or a batch (n, d); ``weight`` is
    (out, d) and ``bias`` is (out,). The output keeps the batch rank of
    the input.
    """
    if weight.value.ndim != 2 or bias.value.ndim != 1:
        raise ShapeError("weight must be 2-D and bias 1-D")
    if x.value.shape[-1] != weight.value.shape[1]:
        raise ShapeError(
            f"input width {x.value.shape[-1]} does not match layer "
            f"input dimension {weight.value.shape[1]}"
        )
    if bias.value.shape[0] != weight.value.shape[0]:
        raise ShapeError("bias width does not match layer output dimension")
    out = Tensor(x.value @ weight.value.T + bias.value)

    def backward():
        g = _as_2d(out.grad)
        x2 = _as_2d(x.value)
        weight.grad += g.T @ x2
        bias.grad += g.sum(axis=0)
        x.grad += (g @ weight.value).reshape(x.value.shape)

    tape.record(backward, x, weight, bias, out)
    return out


def tanh(tape, x):
    out = Tensor(np.tanh(x.value))

    def backward():
        x.grad += (1.0 - out.value**2) * out.grad

    tape.record(backward, x, out)
    return out


def gram(tape, h):
    """Pairwise inner products ``h @ h.T`` for a batch of row vectors."""
    if h.value.ndim != 2:
        raise ShapeError("gram expects a 2-D batch")
    out = Tensor(h.value @ h.value.T)

    def backward():
        h.grad += (out.grad + out.grad.T) @ h.value

    tape.record(backward, h, out)
    return out


def add(tape, a, b):
    if a.value.shape != b.value.shape:
        raise ShapeError("add operands must share a shape")
    out = Tensor(a.value + b.value)

    def backward():
        a.grad += out.grad
        b.grad += out.grad

    tape.record(backward, a, b, out)
    return out


def sub(tape, a, b):
    if a.value.shape != b.value.shape:
        raise ShapeError("sub operands must share a shape")
    out = Tensor(a.value - b.value)

    def backward():
        a.grad += out.grad
        b.grad -= out.grad

    tape.record(backward, a, b, out)
    return out


def mul_const(tape, x, c):
    """Elementwise product with a constant scalar or array."""
    c = np.asarray(c, dtype=np.float64)
    out = Tensor(x.value * c)

    def backward():
        x.grad += c * out.grad

    tape.record(backward, x, out)
    return out


def add_const(tape, x, c):
    """Elementwise sum with a constant scalar or array."""
    c = np.asarray(c, dtype=np.float64)
    out = Tensor(x.value + c)

    def backward():
        x.grad += out.grad

    tape.record(backward, x, out)
    return out


def log1pexp(tape, x):
    """Numerically stable ``log(1 + exp(x))``."""
    out = Tensor(np.logaddexp(0.0, x.value))

    def backward():
        x.grad += out.grad / (1.0 + np.exp(-x.value))

    tape.record(backward, x, out)
    return out


def square(tape, x):
    out = Tensor(x.value**2)

    def backward():
        x.grad += 2.0 * x.value * out.grad

    tape.record(backward, x, out)
    return out


def weighted_sum(tape, x, w):
    """Scalar ``sum(w * x)`` for a constant weight array ``w``."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != x.value.shape:
        raise ShapeError("weight array must match operand shape")
    out = Tensor(np.sum(w * x.value))

    def backward():
        x.grad += w * out.grad

    tape.record(backward, x, out)
    return out


def tsum(tape, x):
    out = Tensor(np.sum(x.value))

    def backward():
        x.grad += out.grad

    tape.record(backward, x, out)
    return out
