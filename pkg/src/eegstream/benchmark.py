"""Leave-one-subject-out benchmark driver for the synthetic dataset.

One run = hold a subject out, train a backbone on everyone else, then replay
each of the held-out subject's sessions under several policies. Repeating
over seeds gives mean/std figures; each mode sees identical trials.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .adapt import AdaptPolicy, soft_kmeans_decide
from .harness import ReplayReport, align_per_group, replay, split_cross_subject
from .net import NetworkSpec
from .train import TrainConfig, fine_tune, train
from .trials import TrialSet

DEFAULT_POLICIES = {
    "online": AdaptPolicy(mode="online"),
    "adaptive": AdaptPolicy(mode="adaptive"),
    "adaptive_buffer": AdaptPolicy(mode="adaptive", use_buffer=True),
    "offline": AdaptPolicy(mode="offline"),
}


@dataclass
class BenchmarkResults:
    """Replay reports grouped by policy name, keyed (seed, subject, session)."""

    reports: dict[str, dict[tuple[int, int, int], ReplayReport]] = field(default_factory=dict)

    def add(self, policy_name: str, key: tuple[int, int, int], report: ReplayReport) -> None:
        self.reports.setdefault(policy_name, {})[key] = report

    def final_accuracies(self, policy_name: str) -> np.ndarray:
        return np.array([r.final_accuracy for r in self.reports[policy_name].values()])

    def mean_final_accuracy(self, policy_name: str) -> float:
        return float(self.final_accuracies(policy_name).mean())

    def mean_curve(self, policy_name: str) -> np.ndarray:
        curves = [r.cumulative_accuracy for r in self.reports[policy_name].values()]
        length = min(len(c) for c in curves)
        return np.mean([c[:length] for c in curves], axis=0)


def run_loso_benchmark(
    dataset: TrialSet,
    spec_factory,
    train_cfg: TrainConfig,
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4),
    policies: dict[str, AdaptPolicy] | None = None,
    shuffled_variants: tuple[str, ...] = (),
    subjects: tuple[int, ...] | None = None,
) -> BenchmarkResults:
    """Train per (seed, held-out subject) and replay every session per policy.

    ``spec_factory(channels, num_classes)`` builds the backbone spec. Warm-up
    buffers are drawn from the raw trials of the training subjects, as a
    cross-subject evaluation has no calibration data. ``shuffled_variants``
    adds a ``<name>_shuffled`` replay for the named policies.
    """
    policies = dict(policies or DEFAULT_POLICIES)
    results = BenchmarkResults()
    eval_subjects = subjects if subjects is not None else tuple(dataset.subjects())
    for seed in seeds:
        cfg = replace(train_cfg, seed=seed)
        for subject in eval_subjects:
            train_set, eval_set = split_cross_subject(dataset, subject)
            spec: NetworkSpec = spec_factory(
                dataset.trials[0].channels, dataset.num_classes
            )
            weights = train(spec, seed, align_per_group(train_set), cfg)
            buffer_pool = train_set.trials
            for session_id in eval_set.sessions_of(subject):
                session = eval_set.session(subject, session_id)
                key = (seed, subject, session_id)
                for name, policy in policies.items():
                    results.add(
                        name,
                        key,
                        replay(
                            spec, weights, session, policy,
                            seed=seed, buffer_pool=buffer_pool,
                        ),
                    )
                for name in shuffled_variants:
                    results.add(
                        f"{name}_shuffled",
                        key,
                        replay(
                            spec, weights, session, policies[name],
                            shuffle=True, seed=seed, buffer_pool=buffer_pool,
                        ),
                    )
    return results


def redecide_with_soft_kmeans(report: ReplayReport, beta: float, iters: int) -> list[int]:
    """Per-step soft k-means re-decisions from a replay's probability rows.

    Step ``t`` re-clusters the rows accumulated up to ``t`` and takes the
    decision of the newest row, which is exactly what the streaming engine
    does when the policy enables soft k-means (the probability rows are
    unaffected by the decision rule).
    """
    rows = [np.asarray(o.probs) for o in report.outcomes]
    return [
        soft_kmeans_decide(rows[: t + 1], beta, iters)[t] for t in range(len(rows))
    ]


def fine_tuning_comparison(
    dataset: TrialSet,
    spec_factory,
    train_cfg: TrainConfig,
    seeds: tuple[int, ...],
    subjects: tuple[int, ...] | None = None,
) -> list[tuple[float, float]]:
    """Paired offline accuracies (pretrained, fine-tuned) on held-out test sessions.

    For each seed and held-out subject: pretrain on the other subjects,
    evaluate offline on the subject's last session, then fine-tune on the
    subject's first session and evaluate again.
    """
    pairs = []
    eval_subjects = subjects if subjects is not None else tuple(dataset.subjects())
    offline = AdaptPolicy(mode="offline")
    for seed in seeds:
        cfg = replace(train_cfg, seed=seed)
        for subject in eval_subjects:
            train_set, eval_set = split_cross_subject(dataset, subject)
            sessions = eval_set.sessions_of(subject)
            if len(sessions) < 2:
                raise ValueError("fine-tuning comparison needs at least two sessions")
            calibration = eval_set.subset(lambda t: t.session_id == sessions[0])
            test_session = eval_set.session(subject, sessions[-1])

            spec = spec_factory(dataset.trials[0].channels, dataset.num_classes)
            base = train(spec, seed, align_per_group(train_set), cfg)
            base_acc = replay(spec, base, test_session, offline, seed=seed).final_accuracy

            tuned = fine_tune(spec, base, align_per_group(calibration), cfg)
            tuned_acc = replay(spec, tuned, test_session, offline, seed=seed).final_accuracy
            pairs.append((base_acc, tuned_acc))
    return pairs
