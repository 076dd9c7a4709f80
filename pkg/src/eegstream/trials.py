"""Trial containers: the unit of streaming and the labeled sets fed to training."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class Trial:
    """One channels-by-time segment with its recording metadata.

    ``data`` is a C-by-T float array; ``label`` is a class index in
    ``[0, num_classes)`` or ``None`` for unlabeled trials.
    """

    data: np.ndarray
    subject_id: int = 0
    session_id: int = 0
    index_in_session: int = 0
    label: int | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"trial data must be a non-empty 2-D array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("trial data contains non-finite values")
        if self.index_in_session < 0:
            raise ValueError("index_in_session must be >= 0")
        if self.label is not None and self.label < 0:
            raise ValueError("label must be a non-negative class index or None")
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def samples(self) -> int:
        return self.data.shape[1]

    def with_data(self, data: np.ndarray) -> "Trial":
        return replace(self, data=data)


@dataclass
class TrialSet:
    """A flat collection of trials plus the dataset-level facts the engine needs.

    ``aligned`` records whether the trials have already been whitened per
    recording group; the trainer refuses unaligned sets.
    """

    trials: list[Trial] = field(default_factory=list)
    num_classes: int = 2
    fs: float | None = None
    aligned: bool = False

    def __len__(self) -> int:
        return len(self.trials)

    def __iter__(self):
        return iter(self.trials)

    def subjects(self) -> list[int]:
        return sorted({t.subject_id for t in self.trials})

    def sessions_of(self, subject_id: int) -> list[int]:
        return sorted({t.session_id for t in self.trials if t.subject_id == subject_id})

    def subset(self, predicate) -> "TrialSet":
        return TrialSet(
            trials=[t for t in self.trials if predicate(t)],
            num_classes=self.num_classes,
            fs=self.fs,
            aligned=self.aligned,
        )

    def session(self, subject_id: int, session_id: int) -> list[Trial]:
        out = [
            t
            for t in self.trials
            if t.subject_id == subject_id and t.session_id == session_id
        ]
        out.sort(key=lambda t: t.index_in_session)
        return out

    def groups(self) -> dict[tuple[int, int], list[Trial]]:
        """Trials grouped by (subject, session), each in chronological order."""
        out: dict[tuple[int, int], list[Trial]] = {}
        for t in self.trials:
            out.setdefault((t.subject_id, t.session_id), []).append(t)
        for group in out.values():
            group.sort(key=lambda t: t.index_in_session)
        return out


def stack_data(trials: Sequence[Trial] | Iterable[Trial]) -> np.ndarray:
    """Stack trial matrices into an (n, C, T) array, checking shape agreement."""
    trials = list(trials)
    if not trials:
        raise ValueError("expected at least one trial")
    shape = trials[0].data.shape
    for t in trials:
        if t.data.shape != shape:
            raise ValueError(f"inconsistent trial shapes: {t.data.shape} vs {shape}")
    return np.stack([t.data for t in trials])


def labels_of(trials: Sequence[Trial]) -> np.ndarray:
    out = []
    for t in trials:
        if t.label is None:
            raise ValueError("trial is unlabeled")
        out.append(t.label)
    return np.asarray(out, dtype=np.int64)
