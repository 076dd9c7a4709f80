"""Frozen 1-D convolutional backbone with switchable batch-norm statistics.

Each block is conv (zero padding, length preserved) -> batch norm -> ReLU ->
non-overlapping max pool; blocks are followed by global average pooling over
time and one affine classifier layer. Batch-norm statistics come from one of
three sources per call: the stored running statistics, the current batch, or
an explicitly provided statistic set, which is what lets the same weights
serve strict one-trial inference and statistics-adaptive inference.

Weights are held as float32 (matching the on-disk container exactly, so
save/load round-trips are bit-exact) while all arithmetic runs in float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import FormatError, NumericalError

WEIGHT_MAGIC = b"EEGW"
WEIGHT_VERSION = 1

BN_STORED = "stored"
BN_BATCH = "batch"


@dataclass(frozen=True)
class BlockSpec:
    out_channels: int
    kernel_size: int
    pool_stride: int

    def __post_init__(self):
        if self.out_channels < 1:
            raise ValueError("out_channels must be >= 1")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and >= 1, got {self.kernel_size}")
        if self.pool_stride < 1:
            raise ValueError("pool_stride must be >= 1")


@dataclass(frozen=True)
class NetworkSpec:
    in_channels: int
    num_classes: int
    blocks: tuple[BlockSpec, ...]
    bn_eps: float = 1e-5

    def __post_init__(self):
        if self.in_channels < 1:
            raise ValueError("in_channels must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if len(self.blocks) < 1:
            raise ValueError("at least one block is required")
        if self.bn_eps <= 0:
            raise ValueError("bn_eps must be positive")
        object.__setattr__(self, "blocks", tuple(self.blocks))

    @property
    def feature_dim(self) -> int:
        return self.blocks[-1].out_channels

    def output_length(self, samples: int) -> int:
        t = samples
        for b in self.blocks:
            t = t // b.pool_stride
        return t

    def param_count(self) -> int:
        total = 0
        c_in = self.in_channels
        for b in self.blocks:
            total += b.out_channels * c_in * b.kernel_size + 3 * b.out_channels
            c_in = b.out_channels
        total += self.num_classes * self.feature_dim + self.num_classes
        return total


def default_spec(in_channels: int, num_classes: int) -> NetworkSpec:
    """Desk-scale default: three conv blocks, ~19k parameters for two classes."""
    return NetworkSpec(
        in_channels=in_channels,
        num_classes=num_classes,
        blocks=(
            BlockSpec(16, 7, 2),
            BlockSpec(32, 7, 2),
            BlockSpec(64, 7, 2),
        ),
        bn_eps=1e-5,
    )


@dataclass
class BlockWeights:
    conv_kernel: np.ndarray  # (out, in, k)
    conv_bias: np.ndarray  # (out,)
    bn_gamma: np.ndarray
    bn_beta: np.ndarray
    bn_running_mean: np.ndarray
    bn_running_var: np.ndarray

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        return [
            ("conv_kernel", self.conv_kernel),
            ("conv_bias", self.conv_bias),
            ("bn_gamma", self.bn_gamma),
            ("bn_beta", self.bn_beta),
            ("bn_running_mean", self.bn_running_mean),
            ("bn_running_var", self.bn_running_var),
        ]


@dataclass
class WeightStore:
    blocks: list[BlockWeights]
    classifier_weight: np.ndarray  # (K, F)
    classifier_bias: np.ndarray  # (K,)
    calib_whitener: np.ndarray | None = None  # (C, C) frozen aligner for strict online use

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, blk in enumerate(self.blocks):
            out.extend((f"blocks[{i}].{name}", arr) for name, arr in blk.tensors())
        out.append(("classifier_weight", self.classifier_weight))
        out.append(("classifier_bias", self.classifier_bias))
        if self.calib_whitener is not None:
            out.append(("calib_whitener", self.calib_whitener))
        return out

    def copy(self) -> "WeightStore":
        return WeightStore(
            blocks=[
                BlockWeights(*(arr.copy() for _, arr in blk.tensors())) for blk in self.blocks
            ],
            classifier_weight=self.classifier_weight.copy(),
            classifier_bias=self.classifier_bias.copy(),
            calib_whitener=None if self.calib_whitener is None else self.calib_whitener.copy(),
        )

    def with_calib_whitener(self, whitener: np.ndarray | None) -> "WeightStore":
        out = self.copy()
        out.calib_whitener = None if whitener is None else np.asarray(whitener, dtype=np.float32)
        return out


@dataclass(frozen=True)
class BnStatSet:
    """Per-BN-layer (mean, variance) vectors plus where they came from."""

    stats: tuple[tuple[np.ndarray, np.ndarray], ...]
    provenance: str  # "stored" or "recomputed"

    def __post_init__(self):
        for mean, var in self.stats:
            if mean.shape != var.shape:
                raise ValueError("mean/variance shape mismatch in statistic set")
            if np.any(var < 0):
                raise ValueError("variances must be non-negative")


def _tensor_shapes(spec: NetworkSpec) -> list[tuple[str, tuple[int, ...]]]:
    shapes = []
    c_in = spec.in_channels
    for i, b in enumerate(spec.blocks):
        shapes.extend(
            [
                (f"blocks[{i}].conv_kernel", (b.out_channels, c_in, b.kernel_size)),
                (f"blocks[{i}].conv_bias", (b.out_channels,)),
                (f"blocks[{i}].bn_gamma", (b.out_channels,)),
                (f"blocks[{i}].bn_beta", (b.out_channels,)),
                (f"blocks[{i}].bn_running_mean", (b.out_channels,)),
                (f"blocks[{i}].bn_running_var", (b.out_channels,)),
            ]
        )
        c_in = b.out_channels
    shapes.append(("classifier_weight", (spec.num_classes, spec.feature_dim)))
    shapes.append(("classifier_bias", (spec.num_classes,)))
    return shapes


def validate_weights(spec: NetworkSpec, weights: WeightStore) -> None:
    expected = dict(_tensor_shapes(spec))
    if len(weights.blocks) != len(spec.blocks):
        raise ValueError(
            f"weight store has {len(weights.blocks)} blocks, spec has {len(spec.blocks)}"
        )
    for name, arr in weights.tensors():
        if name == "calib_whitener":
            if arr.shape != (spec.in_channels, spec.in_channels):
                raise ValueError(f"calib_whitener shape {arr.shape} does not match input channels")
        elif arr.shape != expected[name]:
            raise ValueError(f"{name} has shape {arr.shape}, expected {expected[name]}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} contains non-finite values")
    for i, blk in enumerate(weights.blocks):
        if np.any(blk.bn_running_var < 0):
            raise ValueError(f"blocks[{i}].bn_running_var has negative entries")


def init_weights(spec: NetworkSpec, seed: int = 0) -> WeightStore:
    """He-style initialization, reproducible per seed, stored as float32."""
    rng = np.random.default_rng(seed)
    blocks = []
    c_in = spec.in_channels
    for b in spec.blocks:
        fan_in = c_in * b.kernel_size
        kernel = rng.standard_normal((b.out_channels, c_in, b.kernel_size)) * np.sqrt(
            2.0 / fan_in
        )
        blocks.append(
            BlockWeights(
                conv_kernel=kernel.astype(np.float32),
                conv_bias=np.zeros(b.out_channels, dtype=np.float32),
                bn_gamma=np.ones(b.out_channels, dtype=np.float32),
                bn_beta=np.zeros(b.out_channels, dtype=np.float32),
                bn_running_mean=np.zeros(b.out_channels, dtype=np.float32),
                bn_running_var=np.ones(b.out_channels, dtype=np.float32),
            )
        )
        c_in = b.out_channels
    cls_w = rng.standard_normal((spec.num_classes, spec.feature_dim)) / np.sqrt(
        spec.feature_dim
    )
    return WeightStore(
        blocks=blocks,
        classifier_weight=cls_w.astype(np.float32),
        classifier_bias=np.zeros(spec.num_classes, dtype=np.float32),
    )


def conv1d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Length-preserving 1-D convolution: (B, Cin, T) x (Cout, Cin, k) -> (B, Cout, T)."""
    k = kernel.shape[2]
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    windows = sliding_window_view(xp, k, axis=2)
    return np.einsum("bitk,oik->bot", windows, kernel, optimize=True) + bias[None, :, None]


def batch_bn_stats(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and population variance over the batch and time axes."""
    mean = x.mean(axis=(0, 2))
    var = x.var(axis=(0, 2))
    return mean, var


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class BlockCache:
    x_in: np.ndarray
    pre_bn: np.ndarray
    xhat: np.ndarray
    inv_std: np.ndarray
    relu_mask: np.ndarray
    pool_idx: np.ndarray | None
    pre_pool_len: int


@dataclass
class ForwardResult:
    logits: np.ndarray
    probs: np.ndarray
    stats: BnStatSet
    features: np.ndarray
    caches: list[BlockCache] | None = None
    stats_from_batch: bool = False


def _as_batch(spec: NetworkSpec, batch) -> np.ndarray:
    if isinstance(batch, np.ndarray):
        x = batch.astype(np.float64, copy=False)
    else:
        arrays = [np.asarray(b, dtype=np.float64) for b in batch]
        if not arrays:
            raise ValueError("batch must be non-empty")
        x = np.stack(arrays)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[0] < 1:
        raise ValueError(f"batch must be (n, channels, samples), got shape {x.shape}")
    if x.shape[1] != spec.in_channels:
        raise ValueError(f"batch has {x.shape[1]} channels, spec wants {spec.in_channels}")
    if x.shape[2] < 1:
        raise ValueError("trials must have at least one sample")
    if spec.output_length(x.shape[2]) < 1:
        raise ValueError(
            f"trial length {x.shape[2]} collapses to zero after pooling; too short for this spec"
        )
    return x


def forward(
    spec: NetworkSpec,
    weights: WeightStore,
    batch,
    bn_mode: str | BnStatSet = BN_STORED,
    *,
    want_cache: bool = False,
) -> ForwardResult:
    """Run the backbone on a batch of aligned trials.

    ``bn_mode`` selects the normalization statistics: ``"stored"`` uses the
    running statistics learned in training, ``"batch"`` recomputes them from
    this batch, and a :class:`BnStatSet` applies the given values. The
    statistics actually used are reported back in the result.
    """
    validate_weights(spec, weights)
    x = _as_batch(spec, batch)

    provided: BnStatSet | None = None
    if isinstance(bn_mode, BnStatSet):
        provided = bn_mode
        if len(provided.stats) != len(spec.blocks):
            raise ValueError(
                f"statistic set has {len(provided.stats)} layers, spec has {len(spec.blocks)}"
            )
    elif bn_mode not in (BN_STORED, BN_BATCH):
        raise ValueError(f"unknown bn_mode {bn_mode!r}")

    caches: list[BlockCache] | None = [] if want_cache else None
    used_stats: list[tuple[np.ndarray, np.ndarray]] = []
    for i, (blk_spec, blk) in enumerate(zip(spec.blocks, weights.blocks)):
        x_in = x
        pre_bn = conv1d(x, blk.conv_kernel.astype(np.float64), blk.conv_bias.astype(np.float64))

        if provided is not None:
            mean, var = provided.stats[i]
            mean = np.asarray(mean, dtype=np.float64)
            var = np.asarray(var, dtype=np.float64)
            if mean.shape != (blk_spec.out_channels,):
                raise ValueError(
                    f"provided stats for layer {i} have shape {mean.shape}, "
                    f"expected ({blk_spec.out_channels},)"
                )
        elif bn_mode == BN_BATCH:
            mean, var = batch_bn_stats(pre_bn)
        else:
            mean = blk.bn_running_mean.astype(np.float64)
            var = blk.bn_running_var.astype(np.float64)
        used_stats.append((mean, var))

        inv_std = 1.0 / np.sqrt(var + spec.bn_eps)
        xhat = (pre_bn - mean[None, :, None]) * inv_std[None, :, None]
        y = blk.bn_gamma.astype(np.float64)[None, :, None] * xhat
        y = y + blk.bn_beta.astype(np.float64)[None, :, None]

        relu_mask = y > 0
        y = np.where(relu_mask, y, 0.0)

        stride = blk_spec.pool_stride
        pre_pool_len = y.shape[2]
        if stride > 1:
            t_out = pre_pool_len // stride
            windows = y[:, :, : t_out * stride].reshape(y.shape[0], y.shape[1], t_out, stride)
            pool_idx = windows.argmax(axis=3)
            y = windows.max(axis=3)
        else:
            pool_idx = None

        if not np.all(np.isfinite(y)):
            raise NumericalError(f"non-finite activation after block {i}", layer=i)
        if caches is not None:
            caches.append(
                BlockCache(
                    x_in=x_in,
                    pre_bn=pre_bn,
                    xhat=xhat,
                    inv_std=inv_std,
                    relu_mask=relu_mask,
                    pool_idx=pool_idx,
                    pre_pool_len=pre_pool_len,
                )
            )
        x = y

    features = x.mean(axis=2)
    logits = features @ weights.classifier_weight.astype(np.float64).T
    logits = logits + weights.classifier_bias.astype(np.float64)[None, :]
    if not np.all(np.isfinite(logits)):
        raise NumericalError("non-finite classifier logits", layer=len(spec.blocks))

    if provided is not None:
        stats_out = provided
    else:
        provenance = "recomputed" if bn_mode == BN_BATCH else "stored"
        stats_out = BnStatSet(stats=tuple(used_stats), provenance=provenance)
    return ForwardResult(
        logits=logits,
        probs=softmax(logits),
        stats=stats_out,
        features=features,
        caches=caches,
        stats_from_batch=bn_mode == BN_BATCH and provided is None,
    )


# ---------------------------------------------------------------------------
# Weight container: magic, version, JSON header, little-endian f32 tensors.
# ---------------------------------------------------------------------------


def _spec_to_header(spec: NetworkSpec, has_whitener: bool) -> dict:
    return {
        "in_channels": spec.in_channels,
        "num_classes": spec.num_classes,
        "bn_eps": spec.bn_eps,
        "blocks": [
            {
                "out_channels": b.out_channels,
                "kernel_size": b.kernel_size,
                "pool_stride": b.pool_stride,
            }
            for b in spec.blocks
        ],
        "has_calib_whitener": has_whitener,
    }


def _spec_from_header(header: dict) -> tuple[NetworkSpec, bool]:
    try:
        blocks = tuple(
            BlockSpec(b["out_channels"], b["kernel_size"], b["pool_stride"])
            for b in header["blocks"]
        )
        spec = NetworkSpec(
            in_channels=header["in_channels"],
            num_classes=header["num_classes"],
            blocks=blocks,
            bn_eps=header["bn_eps"],
        )
        return spec, bool(header.get("has_calib_whitener", False))
    except KeyError as exc:
        raise FormatError(f"weight header is missing field {exc.args[0]!r}", field=exc.args[0])
    except (TypeError, ValueError) as exc:
        raise FormatError(f"weight header is invalid: {exc}", field="header")


def save_weights(path, spec: NetworkSpec, weights: WeightStore) -> None:
    validate_weights(spec, weights)
    header = json.dumps(
        _spec_to_header(spec, weights.calib_whitener is not None), sort_keys=True
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(WEIGHT_MAGIC)
        fh.write(np.uint32(WEIGHT_VERSION).tobytes())
        fh.write(np.uint32(len(header)).tobytes())
        fh.write(header)
        for _, arr in weights.tensors():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


class _Reader:
    def __init__(self, data: bytes, what: str):
        self.data = data
        self.offset = 0
        self.what = what

    def take(self, n: int, field: str) -> bytes:
        if self.offset + n > len(self.data):
            raise FormatError(
                f"{self.what} truncated while reading {field}: "
                f"needed {n} bytes at offset {self.offset}, file has {len(self.data)}",
                field=field,
                offset=self.offset,
            )
        out = self.data[self.offset : self.offset + n]
        self.offset += n
        return out

    def take_u32(self, field: str) -> int:
        return int(np.frombuffer(self.take(4, field), dtype="<u4")[0])

    def take_tensor(self, shape: tuple[int, ...], field: str) -> np.ndarray:
        count = int(np.prod(shape)) if shape else 1
        raw = self.take(4 * count, field)
        return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()

    def expect_eof(self) -> None:
        if self.offset != len(self.data):
            raise FormatError(
                f"{self.what} has {len(self.data) - self.offset} trailing bytes",
                offset=self.offset,
            )


def load_weights(path) -> tuple[NetworkSpec, WeightStore]:
    with open(path, "rb") as fh:
        reader = _Reader(fh.read(), "weight file")
    magic = reader.take(4, "magic")
    if magic != WEIGHT_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {WEIGHT_MAGIC!r}", field="magic", offset=0)
    version = reader.take_u32("version")
    if version != WEIGHT_VERSION:
        raise FormatError(f"unsupported weight format version {version}", field="version", offset=4)
    header_len = reader.take_u32("header_length")
    header_bytes = reader.take(header_len, "header")
    try:
        header = json.loads(header_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"weight header is not valid JSON: {exc}", field="header", offset=12)
    spec, has_whitener = _spec_from_header(header)

    blocks = []
    c_in = spec.in_channels
    for i, b in enumerate(spec.blocks):
        blocks.append(
            BlockWeights(
                conv_kernel=reader.take_tensor(
                    (b.out_channels, c_in, b.kernel_size), f"blocks[{i}].conv_kernel"
                ),
                conv_bias=reader.take_tensor((b.out_channels,), f"blocks[{i}].conv_bias"),
                bn_gamma=reader.take_tensor((b.out_channels,), f"blocks[{i}].bn_gamma"),
                bn_beta=reader.take_tensor((b.out_channels,), f"blocks[{i}].bn_beta"),
                bn_running_mean=reader.take_tensor(
                    (b.out_channels,), f"blocks[{i}].bn_running_mean"
                ),
                bn_running_var=reader.take_tensor(
                    (b.out_channels,), f"blocks[{i}].bn_running_var"
                ),
            )
        )
        c_in = b.out_channels
    weights = WeightStore(
        blocks=blocks,
        classifier_weight=reader.take_tensor(
            (spec.num_classes, spec.feature_dim), "classifier_weight"
        ),
        classifier_bias=reader.take_tensor((spec.num_classes,), "classifier_bias"),
        calib_whitener=(
            reader.take_tensor((spec.in_channels, spec.in_channels), "calib_whitener")
            if has_whitener
            else None
        ),
    )
    reader.expect_eof()
    try:
        validate_weights(spec, weights)
    except ValueError as exc:
        raise FormatError(f"weight file is inconsistent: {exc}", field="tensors")
    return spec, weights
