import numpy as np
import pytest

from cgat import autodiff as ad
from cgat.model import (
    base_loss,
    forward_codes,
    hash_codes,
    init_model,
    load_model,
    pairwise_similarity,
    quantize,
    save_model,
)
from cgat.serial import FormatError, VersionError


def test_init_model_is_seeded_and_shaped():
    m1 = init_model([8, 12, 4], seed=5)
    m2 = init_model([8, 12, 4], seed=5)
    assert m1.input_dim == 8 and m1.n_bits == 4
    assert [w.value.shape for w in m1.weights] == [(12, 8), (4, 12)]
    assert all(np.array_equal(a.value, b.value) for a, b in zip(m1.params(), m2.params()))
    assert not np.array_equal(m1.weights[0].value, init_model([8, 12, 4], seed=6).weights[0].value)
    with pytest.raises(ValueError):
        init_model([8])


def test_forward_codes_shape_and_range(small_model, rng):
    x = rng.uniform(0, 1, size=(10, 8))
    h = forward_codes(small_model, x)
    assert h.shape == (10, 8)
    assert np.all(np.abs(h) < 1)


def test_quantize_tie_rule_is_plus_one():
    np.testing.assert_array_equal(quantize(np.array([0.0, -0.0, 0.3, -0.3])), [1, 1, 1, -1])
    assert quantize(np.zeros(3)).dtype == np.int8
    with pytest.raises(ValueError):
        quantize(np.array([np.nan, 1.0]))


def test_hash_codes_are_signs_of_forward(small_model, rng):
    x = rng.uniform(0, 1, size=(5, 8))
    np.testing.assert_array_equal(hash_codes(small_model, x), quantize(forward_codes(small_model, x)))


def test_pairwise_similarity_shared_class_rule():
    a = np.array([[1, 0, 0], [0, 1, 1]])
    b = np.array([[1, 0, 1], [0, 0, 1]])
    np.testing.assert_array_equal(pairwise_similarity(a, b), [[1, 0], [1, 1]])


def test_base_loss_is_finite_and_differentiable(small_model, rng):
    x = rng.uniform(0, 1, size=(6, 8))
    labels = np.zeros((6, 3))
    labels[np.arange(6), rng.integers(0, 3, size=6)] = 1
    tape = ad.Tape()
    loss = base_loss(tape, small_model, x, labels)
    assert np.isfinite(loss.value) and loss.value.shape == ()
    tape.backward(loss)
    assert any(np.abs(p.grad).max() > 0 for p in small_model.params())


def test_base_loss_single_sample_keeps_only_quantization_term(small_model, rng):
    x = rng.uniform(0, 1, size=(1, 8))
    labels = np.array([[1.0]])
    loss = base_loss(ad.Tape(), small_model, x, labels)
    h = forward_codes(small_model, x)
    expected = 0.1 * ((h - quantize(h)) ** 2).sum()
    assert float(loss.value) == pytest.approx(expected)


def test_base_loss_rejects_empty_batch(small_model):
    with pytest.raises(ValueError):
        base_loss(ad.Tape(), small_model, np.empty((0, 8)), np.empty((0, 2)))


def test_checkpoint_round_trip_is_byte_identical(tmp_path, small_model):
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_model(small_model, p1)
    restored = load_model(p1)
    assert restored.layer_dims == small_model.layer_dims
    for a, b in zip(small_model.params(), restored.params()):
        np.testing.assert_array_equal(a.value, b.value)
    save_model(restored, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_checkpoint_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 64)
    with pytest.raises(FormatError):
        load_model(path)


def test_checkpoint_bad_version_rejected(tmp_path, small_model):
    path = tmp_path / "m.ckpt"
    save_model(small_model, path)
    blob = bytearray(path.read_bytes())
    blob[6:7] = b"9"  # version byte follows the 6-byte magic
    path.write_bytes(bytes(blob))
    with pytest.raises(VersionError):
        load_model(path)


def test_checkpoint_truncation_rejected(tmp_path, small_model):
    path = tmp_path / "m.ckpt"
    save_model(small_model, path)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 16])
    with pytest.raises(FormatError):
        load_model(path)


def test_checkpoint_trailing_bytes_rejected(tmp_path, small_model):
    path = tmp_path / "m.ckpt"
    save_model(small_model, path)
    path.write_bytes(path.read_bytes() + b"extra")
    with pytest.raises(FormatError):
        load_model(path)
