"""Replay evaluation harness: trial-file I/O, splits, session replay, reports.

A trial file holds one subject-session of trials. Replaying a session feeds
its trials to the engine one at a time (or once as a set for offline mode)
and produces a report with per-trial outcomes and the cumulative-accuracy
curve in replay order.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .adapt import AdaptPolicy, classify_next, classify_offline, start_session
from .align import align_batch
from .errors import FormatError
from .net import NetworkSpec, WeightStore, _Reader
from .trials import Trial, TrialSet

TRIAL_MAGIC = b"EEGT"
TRIAL_VERSION = 1


# ---------------------------------------------------------------------------
# Trial file container
# ---------------------------------------------------------------------------


def write_trial_file(
    path,
    trials: Sequence[Trial],
    *,
    fs: float,
    num_classes: int,
    preprocessing: dict | None = None,
) -> None:
    """Write one subject-session of trials as a binary container.

    Layout: magic, u32 version, u32 header length, UTF-8 JSON header, i32
    labels (-1 for unlabeled), then float32 data in [trial][channel][time]
    order, all little-endian. Byte length is exactly determined by the
    header.
    """
    trials = list(trials)
    if not trials:
        raise ValueError("cannot write an empty trial file")
    subject = trials[0].subject_id
    session = trials[0].session_id
    shape = trials[0].data.shape
    for t in trials:
        if (t.subject_id, t.session_id) != (subject, session):
            raise ValueError("a trial file holds exactly one subject-session")
        if t.data.shape != shape:
            raise ValueError("all trials in a file must share channel and sample counts")
    labels = np.array(
        [-1 if t.label is None else t.label for t in trials], dtype="<i4"
    )
    if np.any(labels >= num_classes):
        raise ValueError("a label exceeds the declared class count")
    header = {
        "subject_id": subject,
        "session_id": session,
        "channels": shape[0],
        "samples": shape[1],
        "fs": fs,
        "num_classes": num_classes,
        "n_trials": len(trials),
        "preprocessing": preprocessing or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(TRIAL_MAGIC)
        fh.write(np.uint32(TRIAL_VERSION).tobytes())
        fh.write(np.uint32(len(blob)).tobytes())
        fh.write(blob)
        fh.write(labels.tobytes())
        data = np.stack([t.data for t in trials]).astype("<f4")
        fh.write(data.tobytes())


def read_trial_header(path) -> dict:
    """Parse and validate only the header of a trial file."""
    header, _, _ = _read_trial_parts(path, header_only=True)
    return header


def _read_trial_parts(path, header_only: bool = False):
    with open(path, "rb") as fh:
        raw = fh.read()
    reader = _Reader(raw, "trial file")
    magic = reader.take(4, "magic")
    if magic != TRIAL_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {TRIAL_MAGIC!r}", field="magic", offset=0)
    version = reader.take_u32("version")
    if version != TRIAL_VERSION:
        raise FormatError(f"unsupported trial format version {version}", field="version", offset=4)
    header_len = reader.take_u32("header_length")
    header_bytes = reader.take(header_len, "header")
    try:
        header = json.loads(header_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"trial header is not valid JSON: {exc}", field="header", offset=12)
    for key in ("subject_id", "session_id", "channels", "samples", "fs",
                "num_classes", "n_trials"):
        if key not in header:
            raise FormatError(f"trial header is missing field {key!r}", field=key)
    n, c, t = header["n_trials"], header["channels"], header["samples"]
    if min(n, c, t) < 1 or header["num_classes"] < 2:
        raise FormatError("trial header declares degenerate sizes", field="header")

    expected = reader.offset + 4 * n + 4 * n * c * t
    if len(raw) != expected:
        raise FormatError(
            f"trial file is {len(raw)} bytes but the header implies {expected}",
            field="n_trials",
            offset=min(len(raw), expected),
        )
    if header_only:
        return header, None, None
    labels = np.frombuffer(reader.take(4 * n, "labels"), dtype="<i4")
    if np.any((labels < -1) | (labels >= header["num_classes"])):
        raise FormatError("label outside {-1} u [0, num_classes)", field="labels")
    data = np.frombuffer(reader.take(4 * n * c * t, "data"), dtype="<f4").reshape(n, c, t)
    reader.expect_eof()
    return header, labels, data


def read_trial_file(path) -> tuple[dict, list[Trial]]:
    """Load one trial file back into Trial objects (float64 data)."""
    header, labels, data = _read_trial_parts(path)
    trials = [
        Trial(
            data[i].astype(np.float64),
            subject_id=header["subject_id"],
            session_id=header["session_id"],
            index_in_session=i,
            label=None if labels[i] < 0 else int(labels[i]),
        )
        for i in range(header["n_trials"])
    ]
    return header, trials


def save_dataset(directory, dataset: TrialSet, preprocessing: dict | None = None) -> list[Path]:
    """Write one trial file per subject-session under ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if dataset.fs is None:
        raise ValueError("dataset has no sampling rate to record")
    paths = []
    for (subject, session), group in sorted(dataset.groups().items()):
        path = directory / f"s{subject:03d}_sess{session:02d}.eegt"
        write_trial_file(
            path,
            group,
            fs=dataset.fs,
            num_classes=dataset.num_classes,
            preprocessing=preprocessing,
        )
        paths.append(path)
    return paths


def load_dataset(source) -> TrialSet:
    """Load a directory of trial files (or an explicit list of files)."""
    if isinstance(source, (str, Path)):
        files = sorted(Path(source).glob("*.eegt"))
        if not files:
            raise FileNotFoundError(f"no .eegt files under {source}")
    else:
        files = [Path(p) for p in source]
    trials: list[Trial] = []
    num_classes = None
    fs = None
    for path in files:
        header, file_trials = read_trial_file(path)
        if num_classes is None:
            num_classes, fs = header["num_classes"], header["fs"]
        elif header["num_classes"] != num_classes:
            raise FormatError(
                f"{path} declares {header['num_classes']} classes, dataset has {num_classes}",
                field="num_classes",
            )
        trials.extend(file_trials)
    return TrialSet(trials=trials, num_classes=num_classes or 2, fs=fs, aligned=False)


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------


def split_cross_subject(dataset: TrialSet, held_out_subject: int) -> tuple[TrialSet, TrialSet]:
    """All other subjects for training; every session of the held-out subject for evaluation."""
    if held_out_subject not in dataset.subjects():
        raise ValueError(f"subject {held_out_subject} is not in the dataset")
    train = dataset.subset(lambda t: t.subject_id != held_out_subject)
    evaluation = dataset.subset(lambda t: t.subject_id == held_out_subject)
    return train, evaluation


def split_fine_tuning(
    sessions: Sequence[int],
    dataset_kind: str | tuple[int, int] = "bnci",
) -> tuple[list[int], list[int]]:
    """Chronological calibration/test split of one subject's session ids.

    ``"bnci"``-like datasets have two sessions (1 calibration + 1 test);
    ``"large"``-like have five (2 + 3). An explicit ``(n_cal, n_test)``
    tuple overrides both.
    """
    ordered = sorted(sessions)
    if isinstance(dataset_kind, tuple):
        n_cal, n_test = dataset_kind
    elif dataset_kind == "bnci":
        n_cal, n_test = 1, 1
    elif dataset_kind == "large":
        n_cal, n_test = 2, 3
    else:
        raise ValueError(f"unknown dataset kind {dataset_kind!r}")
    if n_cal < 1 or n_test < 1:
        raise ValueError("both splits need at least one session")
    if len(ordered) != n_cal + n_test:
        raise ValueError(
            f"expected {n_cal + n_test} sessions for this split, got {len(ordered)}"
        )
    return ordered[:n_cal], ordered[n_cal:]


def align_per_group(dataset: TrialSet, eps: float | None = None) -> TrialSet:
    """Whiten every (subject, session) group independently; marks the set aligned."""
    aligned: list[Trial] = []
    for _, group in sorted(dataset.groups().items()):
        aligned.extend(align_batch(group, eps=eps))
    return TrialSet(
        trials=aligned, num_classes=dataset.num_classes, fs=dataset.fs, aligned=True
    )


def sample_buffer(pool: Sequence[Trial], size: int, seed: int) -> list[Trial]:
    """Draw a fixed warm-up buffer from a pool of raw trials, without replacement."""
    pool = list(pool)
    if len(pool) < size:
        raise ValueError(f"buffer pool has {len(pool)} trials, need {size}")
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(pool), size=size, replace=False)
    return [pool[i] for i in picks]


# ---------------------------------------------------------------------------
# Replay
# ---------------------------------------------------------------------------


def cumulative_curve(correct_flags: Sequence[bool]) -> list[float]:
    """cumulative_accuracy[t] = mean correctness over positions 0..t."""
    curve = []
    correct = 0
    for i, flag in enumerate(correct_flags):
        correct += bool(flag)
        curve.append(correct / (i + 1))
    return curve


@dataclass
class TrialOutcome:
    index_in_session: int
    true_label: int
    predicted_label: int
    correct: bool
    probs: list[float] = field(default_factory=list)


@dataclass
class ReplayReport:
    outcomes: list[TrialOutcome]
    cumulative_accuracy: list[float]
    mode: str
    policy: dict
    seed: int
    shuffled: bool
    subject_id: int
    session_id: int
    wall_time_s: float

    @property
    def final_accuracy(self) -> float:
        return self.cumulative_accuracy[-1]

    def validate(self) -> None:
        correct = 0
        for i, outcome in enumerate(self.outcomes):
            correct += outcome.correct
            expected = correct / (i + 1)
            if abs(self.cumulative_accuracy[i] - expected) > 1e-12:
                raise ValueError(f"cumulative accuracy inconsistent at position {i}")
            count = self.cumulative_accuracy[i] * (i + 1)
            if abs(count - round(count)) > 1e-9:
                raise ValueError(f"cumulative accuracy at {i} is not a count/(t+1) ratio")

    def to_dict(self, *, include_timing: bool = True) -> dict:
        out = {
            "subject_id": self.subject_id,
            "session_id": self.session_id,
            "mode": self.mode,
            "policy": self.policy,
            "seed": self.seed,
            "shuffled": self.shuffled,
            "final_accuracy": self.final_accuracy,
            "cumulative_accuracy": self.cumulative_accuracy,
            "trials": [asdict(o) for o in self.outcomes],
        }
        if include_timing:
            out["wall_time_s"] = self.wall_time_s
        return out

    def canonical_json(self) -> str:
        """Deterministic serialization: identical runs produce identical bytes.

        Timing is excluded; it is the one field that varies between
        otherwise identical replays.
        """
        return json.dumps(self.to_dict(include_timing=False), sort_keys=True)


def replay(
    spec: NetworkSpec,
    weights: WeightStore,
    session_trials: Sequence[Trial],
    policy: AdaptPolicy,
    *,
    shuffle: bool = False,
    seed: int = 0,
    buffer_pool: Sequence[Trial] | None = None,
) -> ReplayReport:
    """Replay one labeled session under a policy and score it.

    Trials are fed chronologically, or in a seeded random order when
    ``shuffle`` is set. Offline mode classifies the set once (its statistics
    are order-free) and is scored in replay order. Buffer trials, when the
    policy wants them, are sampled from ``buffer_pool`` with the same seed.
    """
    trials = sorted(session_trials, key=lambda t: t.index_in_session)
    if not trials:
        raise ValueError("cannot replay an empty session")
    for t in trials:
        if t.label is None:
            raise ValueError("replay needs labeled trials for scoring")

    order = list(range(len(trials)))
    if shuffle:
        order = list(np.random.default_rng(seed).permutation(len(trials)))
    replayed = [trials[i] for i in order]

    buffer: list[Trial] = []
    if policy.use_buffer:
        if buffer_pool is None:
            raise ValueError("policy uses a warm-up buffer but no buffer pool was given")
        buffer = sample_buffer(buffer_pool, policy.buffer_size, seed)

    start = time.perf_counter()
    if policy.mode == "offline":
        results = classify_offline(spec, weights, replayed, policy)
    else:
        state = start_session(spec, weights, policy, buffer)
        results = []
        for position, trial in enumerate(replayed):
            try:
                results.append(classify_next(state, trial))
            except Exception as exc:
                raise RuntimeError(
                    f"replay aborted at position {position} "
                    f"(trial index {trial.index_in_session}): {exc}"
                ) from exc
    wall = time.perf_counter() - start

    outcomes = []
    for trial, (predicted, probs) in zip(replayed, results):
        correct = predicted == trial.label
        outcomes.append(
            TrialOutcome(
                index_in_session=trial.index_in_session,
                true_label=trial.label,
                predicted_label=predicted,
                correct=bool(correct),
                probs=[float(p) for p in probs],
            )
        )
    report = ReplayReport(
        outcomes=outcomes,
        cumulative_accuracy=cumulative_curve([o.correct for o in outcomes]),
        mode=policy.mode,
        policy=asdict(policy),
        seed=seed,
        shuffled=shuffle,
        subject_id=trials[0].subject_id,
        session_id=trials[0].session_id,
        wall_time_s=wall,
    )
    report.validate()
    return report


def mean_curve(reports: Sequence[ReplayReport]) -> np.ndarray:
    """Average cumulative-accuracy curves, truncated to the shortest session."""
    if not reports:
        raise ValueError("no reports to average")
    length = min(len(r.cumulative_accuracy) for r in reports)
    return np.mean([r.cumulative_accuracy[:length] for r in reports], axis=0)


def write_curve_csv(path, curve: Sequence[float]) -> None:
    with open(path, "w") as fh:
        fh.write("trial_index,cumulative_accuracy\n")
        for i, value in enumerate(curve):
            fh.write(f"{i},{value:.10f}\n")
