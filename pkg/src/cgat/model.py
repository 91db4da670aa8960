"""Differentiable hashing network with a tanh head, plus its pairwise loss.

The network maps features in [0,1]^d to a continuous code in (-1,1)^K
through alternating dense/tanh layers; binary codes come from the sign of
the output (ties at zero resolve to +1, everywhere in this package).

The base training objective is a pairwise likelihood over half the inner
product of continuous codes, plus a quantization penalty pulling each
code toward its own sign vector. Both terms are averaged (over pairs and
over samples) so gradient magnitudes stay independent of batch size.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from cgat import autodiff as ad
from cgat.serial import FormatError, Reader, atomic_write, check_magic

QUANT_PENALTY = 0.1

# features live in [0,1]; centering them keeps the first-layer tanh units
# out of constant-offset saturation
INPUT_CENTER = 0.5

_CKPT_MAGIC = b"CGATCP"
_CKPT_VERSION = b"1"


@dataclass
class HashModel:
    """Dense/tanh stack; the last layer width is the code length K."""

    layer_dims: list[int]
    weights: list[ad.Tensor] = field(repr=False)
    biases: list[ad.Tensor] = field(repr=False)

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def n_bits(self) -> int:
        return self.layer_dims[-1]

    def params(self):
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b

    def n_params(self) -> int:
        return sum(p.value.size for p in self.params())


def init_model(layer_dims, seed=0) -> HashModel:
    """He-style random initialization with a recorded seed."""
    if len(layer_dims) < 2:
        raise ValueError("need at least an input and an output layer")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:]):
        w = rng.normal(0.0, np.sqrt(2.0 / d_in), size=(d_out, d_in))
        weights.append(ad.Tensor(w))
        biases.append(ad.Tensor(np.zeros(d_out)))
    return HashModel(list(layer_dims), weights, biases)


def continuous_code(tape, model: HashModel, x: ad.Tensor) -> ad.Tensor:
    """Forward pass f(x): center the input, then dense -> tanh per layer.

    The output lies in (-1,1)^K.
    """
    h = ad.add_const(tape, x, -INPUT_CENTER)
    for w, b in zip(model.weights, model.biases):
        h = ad.tanh(tape, ad.dense(tape, h, w, b))
    return h


def forward_codes(model: HashModel, features: np.ndarray) -> np.ndarray:
    """Continuous codes for a feature batch, no gradient bookkeeping."""
    h = continuous_code(ad.Tape(), model, ad.Tensor(features))
    return h.value


def quantize(h: np.ndarray) -> np.ndarray:
    """sign with the +1 tie rule: +1 where h >= 0, else -1."""
    h = np.asarray(h)
    if not np.all(np.isfinite(h)):
        raise ValueError("cannot quantize non-finite values")
    return np.where(h >= 0, 1, -1).astype(np.int8)


def hash_codes(model: HashModel, features: np.ndarray) -> np.ndarray:
    return quantize(forward_codes(model, features))


def pairwise_similarity(labels_a: np.ndarray, labels_b: np.ndarray) -> np.ndarray:
    """s_ij = 1 iff the multi-hot label rows share at least one class."""
    return (np.asarray(labels_a, dtype=np.float64) @ np.asarray(labels_b, dtype=np.float64).T > 0).astype(
        np.float64
    )


def base_loss(tape, model: HashModel, features: np.ndarray, labels: np.ndarray) -> ad.Tensor:
    """Pairwise-likelihood hashing loss with quantization penalty.

    For continuous codes h_i and theta_ij = h_i.h_j / 2:

        loss = -mean_{i<j} [ s_ij * theta_ij - log(1 + exp(theta_ij)) ]
               + 0.1 * mean_i || h_i - sign(h_i) ||^2

    Differentiable through the tape; a single-sample batch contributes
    only the quantization term.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ValueError("expected a nonempty 2-D feature batch")
    x = ad.Tensor(features)
    h = continuous_code(tape, model, x)
    theta = ad.mul_const(tape, ad.gram(tape, h), 0.5)

    n = features.shape[0]
    n_pairs = n * (n - 1) // 2
    upper = np.triu(np.ones((n, n)), k=1) / max(n_pairs, 1)
    sim = pairwise_similarity(labels, labels)
    soft = ad.weighted_sum(tape, ad.log1pexp(tape, theta), upper)
    fit = ad.weighted_sum(tape, theta, upper * sim)
    pair = ad.sub(tape, soft, fit)

    target = quantize(h.value).astype(np.float64)
    residual = ad.add_const(tape, h, -target)
    quant = ad.tsum(tape, ad.square(tape, residual))
    return ad.add(tape, pair, ad.mul_const(tape, quant, QUANT_PENALTY / n))


def save_model(model: HashModel, path):
    """Versioned binary checkpoint; round-trips bit-exactly."""
    parts = [_CKPT_MAGIC, _CKPT_VERSION]
    parts.append(struct.pack("<II", model.n_bits, len(model.layer_dims)))
    parts.append(struct.pack(f"<{len(model.layer_dims)}I", *model.layer_dims))
    for p in model.params():
        shape = p.value.shape
        parts.append(struct.pack("<I", len(shape)))
        parts.append(struct.pack(f"<{len(shape)}I", *shape))
        parts.append(np.ascontiguousarray(p.value, dtype="<f8").tobytes())
    atomic_write(path, b"".join(parts))


def load_model(path) -> HashModel:
    with open(path, "rb") as f:
        reader = Reader(f.read(), "checkpoint")
    check_magic(reader, _CKPT_MAGIC, _CKPT_VERSION, "checkpoint")
    n_bits, n_dims = reader.unpack("<II")
    dims = list(reader.unpack(f"<{n_dims}I"))
    if len(dims) < 2 or dims[-1] != n_bits:
        raise FormatError("checkpoint header is inconsistent")
    weights, biases = [], []
    for expect in [(d_out, d_in) for d_in, d_out in zip(dims[:-1], dims[1:])]:
        for which, shape_expected in (("weight", expect), ("bias", expect[:1])):
            (ndim,) = reader.unpack("<I")
            shape = reader.unpack(f"<{ndim}I") if ndim else ()
            if shape != shape_expected:
                raise FormatError(f"unexpected {which} shape {shape} in checkpoint")
            count = int(np.prod(shape, dtype=np.int64))
            values = np.frombuffer(reader.take(count * 8), dtype="<f8").reshape(shape)
            if which == "weight":
                weights.append(ad.Tensor(values))
            else:
                biases.append(ad.Tensor(values))
    reader.expect_eof()
    return HashModel(dims, weights, biases)
