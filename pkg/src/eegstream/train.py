"""Supervised training of the backbone: backprop, SGD with momentum, and a
finite-difference gradient checker.

Training always runs batch normalization in batch-statistics mode and keeps
the running statistics as exponential moving averages, which is what the
stored-statistics inference path later consumes. Everything is plain
float64 numpy; reproducibility per seed is bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NumericalError
from .net import ForwardResult, NetworkSpec, WeightStore, forward, init_weights
from .trials import TrialSet, labels_of, stack_data

_DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-2
    momentum: float = 0.9
    epochs: int = 30
    batch_size: int = 32
    bn_momentum: float = 0.1
    seed: int = 0
    fine_tune_lr_scale: float = 0.1

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.bn_momentum <= 1.0:
            raise ValueError("bn_momentum must lie in (0, 1]")
        if not 0.0 < self.fine_tune_lr_scale <= 1.0:
            raise ValueError("fine_tune_lr_scale must lie in (0, 1]")


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    picked = probs[np.arange(len(labels)), labels]
    # a saturated wrong answer gives p=0 exactly; the infinite loss is real
    # and is what the divergence guard watches for
    with np.errstate(divide="ignore"):
        return float(-np.mean(np.log(picked)))


@dataclass
class Gradients:
    blocks: list[dict[str, np.ndarray]]
    classifier_weight: np.ndarray
    classifier_bias: np.ndarray

    def named(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, blk in enumerate(self.blocks):
            out.extend((f"blocks[{i}].{k}", v) for k, v in blk.items())
        out.append(("classifier_weight", self.classifier_weight))
        out.append(("classifier_bias", self.classifier_bias))
        return out


def backward(
    spec: NetworkSpec,
    weights: WeightStore,
    result: ForwardResult,
    labels: np.ndarray,
) -> Gradients:
    """Gradient of the mean cross-entropy loss for a cached forward pass.

    When the forward pass used batch statistics, the full dependence of the
    normalization on the batch is differentiated; with stored or provided
    statistics the normalization is an affine map.
    """
    if result.caches is None:
        raise ValueError("forward must be run with want_cache=True")
    batch_size = result.probs.shape[0]
    onehot = np.zeros_like(result.probs)
    onehot[np.arange(batch_size), labels] = 1.0
    dlogits = (result.probs - onehot) / batch_size

    d_cls_w = dlogits.T @ result.features
    d_cls_b = dlogits.sum(axis=0)
    dx = dlogits @ weights.classifier_weight.astype(np.float64)

    # global average pooling over time
    t_last = result.caches[-1].pre_pool_len // spec.blocks[-1].pool_stride
    dx = np.repeat(dx[:, :, None] / t_last, t_last, axis=2)

    block_grads: list[dict[str, np.ndarray]] = [None] * len(spec.blocks)  # type: ignore[list-item]
    for i in reversed(range(len(spec.blocks))):
        blk_spec = spec.blocks[i]
        blk = weights.blocks[i]
        cache = result.caches[i]

        if blk_spec.pool_stride > 1:
            stride = blk_spec.pool_stride
            b, c, t_out = dx.shape
            scattered = np.zeros((b, c, t_out, stride))
            np.put_along_axis(scattered, cache.pool_idx[..., None], dx[..., None], axis=3)
            dy = np.zeros((b, c, cache.pre_pool_len))
            dy[:, :, : t_out * stride] = scattered.reshape(b, c, t_out * stride)
        else:
            dy = dx

        dy = np.where(cache.relu_mask, dy, 0.0)

        gamma = blk.bn_gamma.astype(np.float64)
        d_gamma = (dy * cache.xhat).sum(axis=(0, 2))
        d_beta = dy.sum(axis=(0, 2))
        dxhat = dy * gamma[None, :, None]
        if result.stats_from_batch:
            mean_dxhat = dxhat.mean(axis=(0, 2), keepdims=True)
            mean_dxhat_xhat = (dxhat * cache.xhat).mean(axis=(0, 2), keepdims=True)
            d_pre = cache.inv_std[None, :, None] * (
                dxhat - mean_dxhat - cache.xhat * mean_dxhat_xhat
            )
        else:
            d_pre = dxhat * cache.inv_std[None, :, None]

        kernel = blk.conv_kernel.astype(np.float64)
        k = kernel.shape[2]
        pad = k // 2
        xp = np.pad(cache.x_in, ((0, 0), (0, 0), (pad, pad)))
        windows = sliding_window_view(xp, k, axis=2)
        d_kernel = np.einsum("bot,bitk->oik", d_pre, windows, optimize=True)
        d_bias = d_pre.sum(axis=(0, 2))

        dyp = np.pad(d_pre, ((0, 0), (0, 0), (k - 1, k - 1)))
        back_windows = sliding_window_view(dyp, k, axis=2)
        flipped = kernel[:, :, ::-1]
        dxp = np.einsum("botk,oik->bit", back_windows, flipped, optimize=True)
        dx = dxp[:, :, pad : pad + cache.x_in.shape[2]]

        block_grads[i] = {
            "conv_kernel": d_kernel,
            "conv_bias": d_bias,
            "bn_gamma": d_gamma,
            "bn_beta": d_beta,
        }

    return Gradients(
        blocks=block_grads, classifier_weight=d_cls_w, classifier_bias=d_cls_b
    )


def _learnable(weights: WeightStore) -> list[tuple[str, np.ndarray]]:
    out = []
    for i, blk in enumerate(weights.blocks):
        out.extend(
            (f"blocks[{i}].{name}", getattr(blk, name))
            for name in ("conv_kernel", "conv_bias", "bn_gamma", "bn_beta")
        )
    out.append(("classifier_weight", weights.classifier_weight))
    out.append(("classifier_bias", weights.classifier_bias))
    return out


def _check_dataset(spec: NetworkSpec, dataset: TrialSet) -> tuple[np.ndarray, np.ndarray]:
    if not dataset.aligned:
        raise ValueError(
            "training data must be aligned per recording group first (TrialSet.aligned is False)"
        )
    x = stack_data(dataset.trials)
    y = labels_of(dataset.trials)
    if np.any(y >= spec.num_classes):
        raise ValueError("label out of range for the network's class count")
    counts = np.bincount(y, minlength=spec.num_classes)
    missing = np.nonzero(counts == 0)[0]
    if missing.size:
        raise ValueError(f"classes without any trials: {missing.tolist()}")
    return x, y


def train(
    spec: NetworkSpec,
    init: WeightStore | int,
    dataset: TrialSet,
    cfg: TrainConfig,
    loss_log: list[float] | None = None,
) -> WeightStore:
    """Mini-batch SGD with momentum on softmax cross-entropy.

    ``init`` is either a weight store to start from or an integer seed for a
    fresh initialization. Batch statistics drive the normalization during
    training and feed the running-statistic moving averages.
    """
    weights = init_weights(spec, seed=init) if isinstance(init, int) else init.copy()
    x, y = _check_dataset(spec, dataset)
    # zero learning rate and zero epochs are both no-ops by definition; skip
    # the loop so weights (running statistics included) come back bit-equal
    if cfg.epochs == 0 or cfg.learning_rate == 0.0:
        return weights

    rng = np.random.default_rng(cfg.seed)
    velocity = {name: np.zeros(arr.shape, dtype=np.float64) for name, arr in _learnable(weights)}

    n = len(y)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            result = forward(spec, weights, x[idx], "batch", want_cache=True)
            loss = cross_entropy(result.probs, y[idx])
            if loss_log is not None:
                loss_log.append(loss)
            if not np.isfinite(loss) or loss > _DIVERGENCE_LIMIT:
                raise NumericalError(f"training diverged (loss={loss})", residual=loss)
            grads = backward(spec, weights, result, y[idx])

            m = cfg.bn_momentum
            for blk, (mean, var) in zip(weights.blocks, result.stats.stats):
                blk.bn_running_mean = (
                    (1.0 - m) * blk.bn_running_mean.astype(np.float64) + m * mean
                ).astype(np.float32)
                blk.bn_running_var = (
                    (1.0 - m) * blk.bn_running_var.astype(np.float64) + m * var
                ).astype(np.float32)

            params = dict(_learnable(weights))
            for name, grad in grads.named():
                v = velocity[name]
                v *= cfg.momentum
                v -= cfg.learning_rate * grad
                updated = (params[name].astype(np.float64) + v).astype(np.float32)
                _assign(weights, name, updated)
    return weights


def _assign(weights: WeightStore, name: str, value: np.ndarray) -> None:
    if name.startswith("blocks["):
        idx = int(name[len("blocks[") : name.index("]")])
        setattr(weights.blocks[idx], name.split(".", 1)[1], value)
    else:
        setattr(weights, name, value)


def fine_tune(
    spec: NetworkSpec,
    weights: WeightStore,
    dataset: TrialSet,
    cfg: TrainConfig,
    loss_log: list[float] | None = None,
) -> WeightStore:
    """Continue training from given weights at a scaled-down learning rate."""
    scaled = replace(cfg, learning_rate=cfg.learning_rate * cfg.fine_tune_lr_scale)
    return train(spec, weights, dataset, scaled, loss_log=loss_log)


def _weights_as_float64(weights: WeightStore) -> WeightStore:
    out = weights.copy()
    for blk in out.blocks:
        for name in ("conv_kernel", "conv_bias", "bn_gamma", "bn_beta",
                     "bn_running_mean", "bn_running_var"):
            setattr(blk, name, getattr(blk, name).astype(np.float64))
    out.classifier_weight = out.classifier_weight.astype(np.float64)
    out.classifier_bias = out.classifier_bias.astype(np.float64)
    return out


def _activation_signature(result: ForwardResult) -> bytes:
    parts = []
    for cache in result.caches:
        parts.append(cache.relu_mask.tobytes())
        if cache.pool_idx is not None:
            parts.append(cache.pool_idx.tobytes())
    return b"".join(parts)


def grad_check(
    spec: NetworkSpec,
    weights: WeightStore,
    batch: np.ndarray,
    labels: np.ndarray,
    *,
    num_params: int = 200,
    step: float = 1e-4,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Parameters are sampled across every learnable tensor. Probes whose
    ReLU/pool activation pattern differs between the two finite-difference
    points straddle a non-differentiability, where a central difference
    measures a subgradient average rather than the derivative; such probes
    are discarded and redrawn.
    """
    if spec.param_count() > 5000:
        raise ValueError("grad_check is meant for networks with at most 5000 parameters")
    if len(batch) > 4:
        raise ValueError("grad_check batches are capped at 4 trials")
    labels = np.asarray(labels)
    w64 = _weights_as_float64(weights)

    result = forward(spec, w64, batch, "batch", want_cache=True)
    grads = dict(backward(spec, w64, result, labels).named())
    base_signature = _activation_signature(result)

    params = _learnable(w64)
    sizes = np.array([arr.size for _, arr in params])
    offsets = np.cumsum(sizes)
    total = int(offsets[-1])

    rng = np.random.default_rng(seed)
    checked = 0
    worst = 0.0
    attempts = 0
    while checked < min(num_params, total) and attempts < 20 * num_params:
        attempts += 1
        flat = int(rng.integers(total))
        tensor_idx = int(np.searchsorted(offsets, flat, side="right"))
        local = flat - (offsets[tensor_idx - 1] if tensor_idx else 0)
        name, arr = params[tensor_idx]
        index = np.unravel_index(local, arr.shape)

        original = arr[index]
        losses = []
        signatures = []
        for delta in (step, -step):
            arr[index] = original + delta
            res = forward(spec, w64, batch, "batch", want_cache=True)
            losses.append(cross_entropy(res.probs, labels))
            signatures.append(_activation_signature(res))
        arr[index] = original

        if signatures[0] != base_signature or signatures[1] != base_signature:
            continue  # probe straddles a kink
        fd = (losses[0] - losses[1]) / (2.0 * step)
        analytic = grads[name][index]
        rel = abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-6)
        worst = max(worst, rel)
        checked += 1
    if checked == 0:
        raise NumericalError("no kink-free parameters found for finite differencing")
    return worst
