"""Shared fixtures-in-spirit: small specs and datasets the suites reuse."""

import numpy as np

from eegstream.net import BlockSpec, NetworkSpec
from eegstream.trials import Trial, TrialSet


def tiny_spec():
    """429 parameters: big enough to probe 200 of them, small enough for FD."""
    return NetworkSpec(
        in_channels=4,
        num_classes=3,
        blocks=(BlockSpec(6, 5, 2), BlockSpec(8, 5, 2)),
    )


def bench_spec(in_channels, num_classes):
    """The lightweight backbone used for synthetic-benchmark experiments."""
    return NetworkSpec(
        in_channels=in_channels,
        num_classes=num_classes,
        blocks=(BlockSpec(10, 7, 4), BlockSpec(20, 7, 4)),
    )


def separable_dataset(n_per_class=32, channels=4, samples=64, seed=0, shift=2.0):
    """Two classes separated by a strong per-channel DC shift; trivially learnable."""
    rng = np.random.default_rng(seed)
    trials = []
    for label in (0, 1):
        for i in range(n_per_class):
            x = rng.standard_normal((channels, samples))
            x[label] += shift
            trials.append(
                Trial(x, subject_id=0, session_id=0, index_in_session=len(trials), label=label)
            )
    return TrialSet(trials=trials, num_classes=2, fs=128.0, aligned=True)
