"""Offline replay evaluation: augmentation by replication with dropout, the
bandit replay loop, and accuracy aggregation across repeated runs."""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from cfbandit.contexts import SessionRecord
from cfbandit.numerics import TooFewSamples, paired_t_test
from cfbandit.policies import Policy


class InsufficientEvents(ValueError):
    pass


class UnequalRuns(ValueError):
    pass


def derive_seed(*parts) -> np.random.SeedSequence:
    """Stable seed from ints and strings (strings hashed with CRC-32)."""
    words = []
    for p in parts:
        if isinstance(p, str):
            words.append(zlib.crc32(p.encode("utf-8")))
        else:
            words.append(int(p))
    return np.random.SeedSequence(words)


@dataclass(frozen=True)
class ReplayEvent:
    source_session_id: str
    surviving_images: tuple[str, ...]
    intuition: int
    true_label: int
    context: np.ndarray | None = field(default=None, compare=False)

    def with_context(self, context: np.ndarray) -> ReplayEvent:
        return replace(self, context=context)


def augment_dataset(sessions: Sequence[SessionRecord], r: int, p_drop: float,
                    rng: np.random.Generator, shuffle: bool = True) -> list[ReplayEvent]:
    """Replicate every session ``r`` times, dropping each clicked image with
    probability ``p_drop``; a replica that loses every image keeps one chosen
    uniformly at random. The event list is shuffled at the end.
    """
    if r < 1:
        raise ValueError("r must be at least 1")
    if not 0.0 <= p_drop < 1.0:
        raise ValueError("p_drop must lie in [0, 1)")
    events = []
    for s in sessions:
        imgs = s.clicked_images
        for _ in range(r):
            keep = rng.random(len(imgs)) >= p_drop
            if keep.any():
                surviving = tuple(img for img, k in zip(imgs, keep) if k)
            else:
                surviving = (imgs[int(rng.integers(len(imgs)))],)
            events.append(ReplayEvent(s.session_id, surviving, s.intuition, s.true_label))
    if shuffle:
        order = np.arange(len(events))
        rng.shuffle(order)
        events = [events[j] for j in order]
    return events


def majority_label(events: Sequence[ReplayEvent], num_arms: int) -> int:
    counts = np.bincount([e.true_label for e in events], minlength=num_arms)
    return int(np.argmax(counts))


@dataclass
class Trajectory:
    policy: str
    arms: np.ndarray
    rewards: np.ndarray

    def __len__(self) -> int:
        return len(self.rewards)

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.rewards, dtype=np.int64)

    def records(self):
        """Yield ``(t, arm, reward, cumulative_reward)`` with 1-based ``t``."""
        cum = self.cumulative
        for t in range(len(self)):
            yield t + 1, int(self.arms[t]), int(self.rewards[t]), int(cum[t])


def replay_run(events: Sequence[ReplayEvent], policy: Policy, horizon: int) -> Trajectory:
    if len(events) < horizon:
        raise InsufficientEvents(f"{len(events)} events for a horizon of {horizon}")
    arms = np.empty(horizon, dtype=np.int64)
    rewards = np.empty(horizon, dtype=np.int64)
    for t in range(horizon):
        ev = events[t]
        arm = policy.select_arm(ev.context, ev.intuition).arm
        reward = int(arm == ev.true_label)
        policy.update(ev.context, ev.intuition, arm, reward)
        arms[t] = arm
        rewards[t] = reward
    return Trajectory(policy.name, arms, rewards)


def accuracy_at(traj: Trajectory, t: int) -> float:
    """Mean reward over the first ``t`` rounds."""
    if not 1 <= t <= len(traj):
        raise ValueError(f"cutoff {t} outside [1, {len(traj)}]")
    return int(traj.rewards[:t].sum()) / t


@dataclass(frozen=True)
class SummaryRow:
    context: str
    policy: str
    cutoff: int
    mean_acc: float
    std_acc: float
    n: int
    best_other: str
    p_vs_best_other: float | None


@dataclass
class RunSummary:
    rows: list[SummaryRow] = field(default_factory=list)
    # (context, cutoff, policy_a, policy_b) -> two-sided p-value, a < b by name order
    pairwise: dict[tuple[str, int, str, str], float | None] = field(default_factory=dict)
    # (context, policy, cutoff) -> per-run accuracies in run order
    accuracies: dict[tuple[str, str, int], list[float]] = field(default_factory=dict)

    def row(self, context: str, policy: str, cutoff: int) -> SummaryRow:
        for r in self.rows:
            if (r.context, r.policy, r.cutoff) == (context, policy, cutoff):
                return r
        raise KeyError((context, policy, cutoff))

    def p_value(self, context: str, cutoff: int, a: str, b: str) -> float | None:
        key = (context, cutoff) + tuple(sorted((a, b)))
        return self.pairwise[key]

    def merge(self, other: RunSummary) -> RunSummary:
        return RunSummary(self.rows + other.rows, {**self.pairwise, **other.pairwise},
                          {**self.accuracies, **other.accuracies})


def aggregate_runs(trajectories: Mapping[str, Sequence[Trajectory]], cutoffs: Sequence[int],
                   context: str = "") -> RunSummary:
    """Mean and sample std of per-run accuracy for every policy and cutoff,
    plus paired t-tests between every pair of policies.

    Runs are paired by position, so ``trajectories[p][k]`` of every policy must
    come from the same augmented dataset. With a single run the p-values are
    ``None``.
    """
    names = list(trajectories)
    counts = {len(trajectories[p]) for p in names}
    if len(counts) > 1:
        raise UnequalRuns(f"policies have different run counts: {sorted(counts)}")
    n = counts.pop() if counts else 0
    summary = RunSummary()
    for cutoff in cutoffs:
        acc = {p: [accuracy_at(tr, cutoff) for tr in trajectories[p]] for p in names}
        for p in names:
            summary.accuracies[(context, p, cutoff)] = acc[p]
        for a_i, a in enumerate(names):
            for b in names[a_i + 1:]:
                try:
                    pval = paired_t_test(acc[a], acc[b]).p_two_sided
                except TooFewSamples:
                    pval = None
                summary.pairwise[(context, cutoff) + tuple(sorted((a, b)))] = pval
        means = {p: math.fsum(acc[p]) / n for p in names}
        for p in names:
            std = float(np.std(acc[p], ddof=1)) if n >= 2 else 0.0
            others = [q for q in names if q != p]
            if others:
                best = max(others, key=lambda q: (means[q], -names.index(q)))
                pval = summary.pairwise[(context, cutoff) + tuple(sorted((p, best)))]
            else:
                best, pval = "", None
            summary.rows.append(SummaryRow(context, p, cutoff, means[p], std, n, best, pval))
    return summary
