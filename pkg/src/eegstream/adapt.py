"""Streaming adaptive classification around a frozen backbone.

Three per-trial regimes share one statistics pipeline:

* ``online``   - strict streaming: the trial is whitened with a whitener
  frozen before the session (the calibration whitener stored with the
  weights, or identity) and classified with stored normalization statistics.
* ``adaptive`` - the trial plus everything previously seen this session
  (optionally a warm-up buffer) re-estimates both the alignment and the
  normalization statistics before classifying the new trial.
* ``offline``  - the whole trial set is available at once; a batch
  operation, see :func:`classify_offline`.

Statistic reductions run in a canonical order (sorted Gram matrices for the
alignment, byte-sorted rows for the batch normalization statistics), so the
adaptive prediction of a session's final trial is bit-identical to the
offline prediction of that trial, and offline predictions are exactly
invariant to input permutation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .align import AlignmentState, batch_state
from .linalg import inv_sqrt, trial_covariance
from .net import BN_STORED, NetworkSpec, WeightStore, forward, validate_weights
from .trials import Trial

MODES = ("online", "adaptive", "offline")


@dataclass(frozen=True)
class AdaptPolicy:
    """How a session stream updates statistics and decides labels."""

    mode: str = "adaptive"
    use_buffer: bool = False
    warmup_trials: int = 10
    buffer_size: int = 40
    use_soft_kmeans: bool = False
    soft_kmeans_beta: float = 5.0
    soft_kmeans_iters: int = 10
    eps_align: float | None = None
    # ablation switches; defaults match the main method
    buffer_bn_only: bool = False        # buffer feeds only normalization, not alignment
    online_self_align: bool = False     # online mode whitens each trial with its own Gram
    align_exclude_current: bool = False  # leave the incoming trial out of its own alignment

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.warmup_trials < 0:
            raise ValueError("warmup_trials must be >= 0")
        if self.buffer_size < 0:
            raise ValueError("buffer_size must be >= 0")
        if self.use_buffer and self.buffer_size == 0:
            raise ValueError("buffer_size must be positive when use_buffer is set")
        if self.soft_kmeans_beta <= 0:
            raise ValueError("soft_kmeans_beta must be positive")
        if self.soft_kmeans_iters < 0:
            raise ValueError("soft_kmeans_iters must be >= 0")


@dataclass
class SessionState:
    """Mutable per-session stream state; exclusively owned by one stream."""

    spec: NetworkSpec
    weights: WeightStore
    policy: AdaptPolicy
    buffer: tuple[Trial, ...]
    align_state: AlignmentState = field(default_factory=AlignmentState)
    history: list[Trial] = field(default_factory=list)
    predictions: list[int] = field(default_factory=list)
    prob_history: list[np.ndarray] = field(default_factory=list)


def start_session(
    spec: NetworkSpec,
    weights: WeightStore,
    policy: AdaptPolicy,
    buffer_trials: Sequence[Trial] = (),
) -> SessionState:
    """Open a fresh session stream; buffer trials are stored raw (unaligned)."""
    validate_weights(spec, weights)
    buffer = tuple(buffer_trials)
    if policy.use_buffer:
        if len(buffer) != policy.buffer_size:
            raise ValueError(
                f"policy wants a buffer of {policy.buffer_size} trials, got {len(buffer)}"
            )
    elif buffer:
        raise ValueError("buffer trials were provided but the policy does not use a buffer")
    for t in buffer:
        if t.channels != spec.in_channels:
            raise ValueError(
                f"buffer trial has {t.channels} channels, spec wants {spec.in_channels}"
            )
    return SessionState(
        spec=spec,
        weights=weights,
        policy=policy,
        buffer=buffer,
        align_state=AlignmentState(eps=policy.eps_align),
    )


def _canonical_batch_probs(
    spec: NetworkSpec,
    weights: WeightStore,
    align_trials: Sequence[Trial],
    batch_trials: Sequence[Trial],
    eps: float | None,
) -> np.ndarray:
    """Whiten and classify a trial set with order-canonical statistics.

    The alignment reference is estimated over ``align_trials``; every trial
    of ``batch_trials`` is whitened with it and classified with batch
    normalization statistics. Rows are fed to the network sorted by their
    byte representation and unsorted afterwards, making the returned
    probabilities an exact function of the trial multiset.
    """
    if align_trials:
        whitener = batch_state(align_trials, eps=eps).whitener()
        whitened = np.stack([whitener @ t.data for t in batch_trials])
    else:
        whitened = np.stack([t.data for t in batch_trials])
    order = sorted(range(len(batch_trials)), key=lambda i: whitened[i].tobytes())
    inverse = np.empty(len(order), dtype=np.intp)
    inverse[order] = np.arange(len(order))
    result = forward(spec, weights, whitened[list(order)], "batch")
    return result.probs[inverse]


def _stat_sets(state: SessionState) -> tuple[list[Trial], list[Trial]]:
    """Trials feeding the alignment estimate and the normalization batch."""
    policy = state.policy
    history = state.history
    in_warmup = policy.use_buffer and len(history) <= policy.warmup_trials
    if in_warmup:
        bn_trials = list(state.buffer) + history
        align_trials = history if policy.buffer_bn_only else bn_trials
    else:
        bn_trials = list(history)
        align_trials = bn_trials
    if policy.align_exclude_current:
        current = history[-1]
        align_trials = [t for t in align_trials if t is not current]
    return align_trials, bn_trials


def classify_next(state: SessionState, trial: Trial) -> tuple[int, np.ndarray]:
    """Consume one arriving trial and return (predicted class, probabilities)."""
    policy = state.policy
    if policy.mode == "offline":
        raise ValueError("offline mode classifies a whole set at once; use classify_offline")
    if trial.channels != state.spec.in_channels:
        raise ValueError(
            f"trial has {trial.channels} channels, spec wants {state.spec.in_channels}"
        )
    state.history.append(trial)
    state.align_state.accumulate(trial)

    if policy.mode == "online":
        if policy.online_self_align:
            whitener = inv_sqrt(trial_covariance(trial.data), policy.eps_align)
        elif state.weights.calib_whitener is not None:
            whitener = state.weights.calib_whitener.astype(np.float64)
        else:
            whitener = np.eye(state.spec.in_channels)
        result = forward(state.spec, state.weights, (whitener @ trial.data)[None], BN_STORED)
        probs = result.probs[0]
    else:
        align_trials, bn_trials = _stat_sets(state)
        rows = _canonical_batch_probs(
            state.spec, state.weights, align_trials, bn_trials, policy.eps_align
        )
        probs = rows[-1]  # the arriving trial is the last element of the batch

    state.prob_history.append(probs)
    if policy.use_soft_kmeans:
        decisions = soft_kmeans_decide(
            state.prob_history, policy.soft_kmeans_beta, policy.soft_kmeans_iters
        )
        predicted = decisions[-1]
    else:
        predicted = int(np.argmax(probs))
    state.predictions.append(predicted)
    return predicted, probs


def classify_offline(
    spec: NetworkSpec,
    weights: WeightStore,
    trials: Sequence[Trial],
    policy: AdaptPolicy | None = None,
) -> list[tuple[int, np.ndarray]]:
    """Classify a whole trial set with set-level statistics.

    Exactly permutation-equivariant: reordering the input reorders the
    output bit-for-bit.
    """
    trials = list(trials)
    if not trials:
        raise ValueError("expected at least one trial")
    eps = policy.eps_align if policy is not None else None
    rows = _canonical_batch_probs(spec, weights, trials, trials, eps)
    return [(int(np.argmax(row)), row) for row in rows]


def soft_kmeans_decide(
    prob_rows: Sequence[np.ndarray], beta: float, iters: int
) -> list[int]:
    """Re-decide class labels by soft k-means over probability vectors.

    Centroids start at the one-hot simplex vertices and keep their class
    identity throughout (no relabeling). Assignment weights are
    exp(-beta * squared distance), normalized per row; each decision is the
    nearest final centroid. ``iters=0`` therefore reduces to plain argmax.
    """
    rows = np.asarray(prob_rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] < 2:
        raise ValueError("expected rows of at least two class probabilities")
    if np.any(np.abs(rows.sum(axis=1) - 1.0) > 1e-6) or np.any(rows < -1e-9):
        raise ValueError("probability rows must lie on the simplex")
    if beta <= 0:
        raise ValueError("beta must be positive")

    k = rows.shape[1]
    centroids = np.eye(k)
    for _ in range(iters):
        d2 = ((rows[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        # shift per row before exponentiating so large beta stays finite
        w = np.exp(-beta * (d2 - d2.min(axis=1, keepdims=True)))
        w /= w.sum(axis=1, keepdims=True)
        mass = w.sum(axis=0)
        fresh = w.T @ rows
        for j in range(k):
            if mass[j] > 1e-300:  # empty clusters keep their previous centroid
                centroids[j] = fresh[j] / mass[j]
    d2 = ((rows[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return [int(i) for i in np.argmin(d2, axis=1)]
