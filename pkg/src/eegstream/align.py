"""Euclidean alignment of trial covariance statistics.

Each trial is whitened by the inverse square root of the running arithmetic
mean of trial Gram matrices, so that the mean covariance of the whitened
trials is the identity (He & Wu style alignment). Two entry points exist:
:func:`align_batch` for a fixed trial set, and :class:`AlignmentState` for
streams where the reference matrix is re-estimated as trials arrive.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import EmptyStateError
from .linalg import inv_sqrt, trial_covariance
from .trials import Trial


class AlignmentState:
    """Running covariance statistics of one session stream.

    Owns the trial count, the Gram-matrix sum, and a cached whitener that is
    invalidated on every accumulation, so an accumulate/whiten cycle costs
    exactly one eigendecomposition.
    """

    def __init__(self, eps: float | None = None):
        self.eps = eps
        self.n = 0
        self.cov_sum: np.ndarray | None = None
        self._whitener: np.ndarray | None = None
        self._dirty = True

    @property
    def dim(self) -> int | None:
        return None if self.cov_sum is None else self.cov_sum.shape[0]

    @property
    def dirty(self) -> bool:
        return self._dirty

    def reset(self) -> None:
        self.n = 0
        self.cov_sum = None
        self._whitener = None
        self._dirty = True

    def accumulate(self, trial: Trial) -> "AlignmentState":
        """Add one trial's Gram matrix to the running statistics."""
        gram = trial_covariance(trial.data)
        if self.cov_sum is None:
            self.cov_sum = gram
        else:
            if gram.shape != self.cov_sum.shape:
                raise ValueError(
                    f"channel count mismatch: state is {self.cov_sum.shape[0]}, "
                    f"trial has {gram.shape[0]}"
                )
            self.cov_sum = self.cov_sum + gram
        self.n += 1
        self._dirty = True
        return self

    def mean_covariance(self) -> np.ndarray:
        if self.n == 0 or self.cov_sum is None:
            raise EmptyStateError("no trials accumulated")
        return self.cov_sum / self.n

    def whitener(self) -> np.ndarray:
        """Inverse square root of the mean covariance, cached until the next accumulate."""
        if self._dirty:
            self._whitener = inv_sqrt(self.mean_covariance(), self.eps)
            self._dirty = False
        assert self._whitener is not None
        return self._whitener

    def whiten(self, trial: Trial) -> Trial:
        """Whiten one trial with the current statistics; metadata is preserved."""
        if self.n == 0:
            raise EmptyStateError("cannot whiten with an empty alignment state")
        w = self.whitener()
        if trial.data.shape[0] != w.shape[0]:
            raise ValueError(
                f"channel count mismatch: state is {w.shape[0]}, trial has {trial.data.shape[0]}"
            )
        return trial.with_data(w @ trial.data)


def accumulate(state: AlignmentState, trial: Trial) -> AlignmentState:
    return state.accumulate(trial)


def whiten(state: AlignmentState, trial: Trial) -> Trial:
    return state.whiten(trial)


def batch_state(trials: Sequence[Trial], eps: float | None = None) -> AlignmentState:
    """Alignment state over a whole trial set, independent of list order.

    Gram matrices are summed in a canonical byte order so that permuting the
    input produces a bit-identical reference matrix, not merely one equal to
    rounding. Streams that accumulate incrementally agree with this up to
    the usual floating-point reordering (~1e-16 relative).
    """
    if not trials:
        raise ValueError("expected at least one trial")
    grams = [trial_covariance(t.data) for t in trials]
    dim = grams[0].shape[0]
    for g in grams:
        if g.shape[0] != dim:
            raise ValueError("all trials must share the same channel count")
    state = AlignmentState(eps=eps)
    state.cov_sum = np.zeros((dim, dim))
    for g in sorted(grams, key=lambda g: g.tobytes()):
        state.cov_sum += g
    state.n = len(grams)
    state._dirty = True
    return state


def align_batch(trials: Sequence[Trial], eps: float | None = None) -> list[Trial]:
    """Whiten a full trial set with statistics estimated over the whole set.

    Output order matches input order; permuting the input permutes the
    output bit-exactly (see :func:`batch_state`).
    """
    state = batch_state(trials, eps=eps)
    return [state.whiten(t) for t in trials]
