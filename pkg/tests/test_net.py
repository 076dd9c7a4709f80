import numpy as np
import pytest

from eegstream.errors import FormatError
from eegstream.net import (
    BlockSpec,
    BnStatSet,
    NetworkSpec,
    conv1d,
    default_spec,
    forward,
    init_weights,
    load_weights,
    save_weights,
    validate_weights,
)


def brute_force_conv1d(x, kernel, bias):
    """Loop reference for the zero-padded length-preserving convolution."""
    n, c_in, t = x.shape
    c_out, _, k = kernel.shape
    pad = k // 2
    out = np.zeros((n, c_out, t))
    for b in range(n):
        for o in range(c_out):
            for pos in range(t):
                acc = bias[o]
                for i in range(c_in):
                    for tap in range(k):
                        src = pos + tap - pad
                        if 0 <= src < t:
                            acc += kernel[o, i, tap] * x[b, i, src]
                out[b, o, pos] = acc
    return out


def small_spec():
    return NetworkSpec(in_channels=3, num_classes=2, blocks=(BlockSpec(4, 3, 2),))


class TestConv:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((2, 3, 11))
        kernel = rng.standard_normal((5, 3, 3))
        bias = rng.standard_normal(5)
        np.testing.assert_allclose(
            conv1d(x, kernel, bias), brute_force_conv1d(x, kernel, bias), atol=1e-12
        )

    def test_impulse_kernel_is_identity(self):
        x = np.random.default_rng(1).standard_normal((1, 2, 16))
        kernel = np.zeros((2, 2, 3))
        kernel[0, 0, 1] = 1.0
        kernel[1, 1, 1] = 1.0
        np.testing.assert_allclose(conv1d(x, kernel, np.zeros(2)), x, atol=0)


class TestBatchNormModes:
    def test_hand_bn_on_alternating_channel(self):
        spec = NetworkSpec(
            in_channels=1, num_classes=2, blocks=(BlockSpec(1, 1, 1),), bn_eps=1e-12
        )
        w = init_weights(spec, seed=0)
        w.blocks[0].conv_kernel = np.ones((1, 1, 1), dtype=np.float32)
        w.blocks[0].conv_bias = np.zeros(1, dtype=np.float32)
        trial = np.tile([3.0, 5.0], 8)[None, None, :]
        res = forward(spec, w, trial, "batch", want_cache=True)
        post_bn = res.caches[0].xhat  # gamma=1, beta=0
        np.testing.assert_allclose(post_bn[0, 0], np.tile([-1.0, 1.0], 8), atol=1e-6)
        mean, var = res.stats.stats[0]
        np.testing.assert_allclose(mean, [4.0], atol=1e-12)
        np.testing.assert_allclose(var, [1.0], atol=1e-12)

    def test_stored_unit_stats_are_identity(self):
        spec = NetworkSpec(
            in_channels=2, num_classes=2, blocks=(BlockSpec(3, 3, 1),), bn_eps=1e-12
        )
        w = init_weights(spec, seed=1)
        res = forward(
            spec, w, np.random.default_rng(2).standard_normal((3, 2, 10)), "stored",
            want_cache=True,
        )
        cache = res.caches[0]
        np.testing.assert_allclose(cache.xhat, cache.pre_bn, rtol=1e-6, atol=1e-9)

    def test_provided_stats_reproduce_batch_mode(self):
        spec = default_spec(4, 3)
        w = init_weights(spec, seed=3)
        batch = np.random.default_rng(4).standard_normal((6, 4, 64))
        batch_res = forward(spec, w, batch, "batch")
        provided_res = forward(spec, w, batch, batch_res.stats)
        np.testing.assert_allclose(provided_res.logits, batch_res.logits, atol=1e-12)

    def test_batch_mode_normalizes_to_unit_stats(self):
        spec = NetworkSpec(
            in_channels=3, num_classes=2, blocks=(BlockSpec(5, 5, 1),), bn_eps=1e-9
        )
        w = init_weights(spec, seed=5)
        res = forward(
            spec, w, np.random.default_rng(6).standard_normal((8, 3, 40)), "batch",
            want_cache=True,
        )
        xhat = res.caches[0].xhat
        np.testing.assert_allclose(xhat.mean(axis=(0, 2)), 0.0, atol=1e-6)
        np.testing.assert_allclose(xhat.var(axis=(0, 2)), 1.0, atol=1e-5)

    def test_stats_provenance(self):
        spec = small_spec()
        w = init_weights(spec, seed=7)
        x = np.random.default_rng(8).standard_normal((2, 3, 12))
        assert forward(spec, w, x, "stored").stats.provenance == "stored"
        assert forward(spec, w, x, "batch").stats.provenance == "recomputed"

    def test_unknown_mode_rejected(self):
        spec = small_spec()
        w = init_weights(spec, seed=9)
        with pytest.raises(ValueError):
            forward(spec, w, np.zeros((1, 3, 8)), "running")


class TestForwardShape:
    def test_softmax_rows_and_translation_covariance(self):
        spec = default_spec(4, 5)
        w = init_weights(spec, seed=10)
        batch = np.random.default_rng(11).standard_normal((7, 4, 64))
        res = forward(spec, w, batch, "batch")
        np.testing.assert_allclose(res.probs.sum(axis=1), 1.0, atol=1e-9)

        shifted = w.copy()
        shifted.classifier_bias = (shifted.classifier_bias + np.float32(3.25)).astype(np.float32)
        res2 = forward(spec, shifted, batch, "batch")
        np.testing.assert_allclose(res2.logits, res.logits + 3.25, atol=1e-9)
        np.testing.assert_allclose(res2.probs, res.probs, atol=1e-12)

    def test_deterministic(self):
        spec = default_spec(4, 2)
        w = init_weights(spec, seed=12)
        batch = np.random.default_rng(13).standard_normal((5, 4, 32))
        a = forward(spec, w, batch, "batch")
        b = forward(spec, w, batch, "batch")
        assert np.array_equal(a.logits, b.logits)
        assert np.array_equal(a.probs, b.probs)

    def test_shape_mismatch_rejected(self):
        spec = small_spec()
        w = init_weights(spec, seed=14)
        with pytest.raises(ValueError):
            forward(spec, w, np.zeros((2, 4, 16)), "batch")
        with pytest.raises(ValueError):
            forward(spec, w, np.zeros((0, 3, 16)), "batch")

    def test_too_short_for_pooling_rejected(self):
        spec = NetworkSpec(in_channels=2, num_classes=2, blocks=(BlockSpec(2, 3, 8),))
        w = init_weights(spec, seed=15)
        with pytest.raises(ValueError):
            forward(spec, w, np.zeros((1, 2, 7)), "batch")

    def test_default_spec_budget(self):
        spec = default_spec(8, 2)
        assert spec.param_count() < 50_000

    def test_default_spec_forward_under_a_second(self):
        import time

        spec = default_spec(8, 2)
        w = init_weights(spec, seed=16)
        batch = np.random.default_rng(17).standard_normal((40, 8, 256))
        forward(spec, w, batch, "batch")  # warm the einsum path
        start = time.perf_counter()
        forward(spec, w, batch, "batch")
        assert time.perf_counter() - start < 1.0


class TestWeightFile:
    def test_round_trip_bitwise(self, tmp_path):
        spec = default_spec(6, 4)
        w = init_weights(spec, seed=18)
        w = w.with_calib_whitener(np.random.default_rng(19).standard_normal((6, 6)))
        path = tmp_path / "w.eegw"
        save_weights(path, spec, w)
        spec2, w2 = load_weights(path)
        assert spec2 == spec
        for (name, a), (_, b) in zip(w.tensors(), w2.tensors()):
            assert a.tobytes() == b.tobytes(), name

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.eegw"
        path.write_bytes(b"NOPE" + b"\x00" * 100)
        with pytest.raises(FormatError) as err:
            load_weights(path)
        assert err.value.field == "magic"

    def test_truncated_mid_tensor_reports_offset(self, tmp_path):
        spec = small_spec()
        w = init_weights(spec, seed=20)
        path = tmp_path / "w.eegw"
        save_weights(path, spec, w)
        data = path.read_bytes()
        truncated = tmp_path / "t.eegw"
        truncated.write_bytes(data[: len(data) - 10])
        with pytest.raises(FormatError) as err:
            load_weights(truncated)
        assert err.value.offset is not None

    def test_trailing_bytes_rejected(self, tmp_path):
        spec = small_spec()
        w = init_weights(spec, seed=21)
        path = tmp_path / "w.eegw"
        save_weights(path, spec, w)
        padded = tmp_path / "p.eegw"
        padded.write_bytes(path.read_bytes() + b"\x00\x00")
        with pytest.raises(FormatError):
            load_weights(padded)

    def test_bad_header_named(self, tmp_path):
        import json

        import numpy as np

        header = json.dumps({"in_channels": 2, "num_classes": 2}).encode()
        blob = b"EEGW" + np.uint32(1).tobytes() + np.uint32(len(header)).tobytes() + header
        path = tmp_path / "h.eegw"
        path.write_bytes(blob)
        with pytest.raises(FormatError) as err:
            load_weights(path)
        assert err.value.field == "blocks"


def test_validate_weights_catches_shape_drift():
    spec = small_spec()
    w = init_weights(spec, seed=22)
    w.classifier_bias = np.zeros(3, dtype=np.float32)
    with pytest.raises(ValueError):
        validate_weights(spec, w)
