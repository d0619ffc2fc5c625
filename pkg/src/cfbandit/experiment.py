"""Experiment configuration and the replication loop.

One replication (run) draws a fresh augmented dataset, builds the context
vectors for every requested context type and replays every policy over the
same event sequence. Aggregation happens after all runs, in run-index order.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Callable, Sequence

import numpy as np

from cfbandit.contexts import (
    CONTEXT_TYPES,
    DEFAULT_PCA_DIM,
    ContextBuilder,
    ImageFeatureTable,
    SessionRecord,
    make_builder,
)
from cfbandit.policies import Policy, PolicyKind
from cfbandit.replay import (
    RunSummary,
    Trajectory,
    aggregate_runs,
    augment_dataset,
    derive_seed,
    majority_label,
    replay_run,
)
from cfbandit.synthenv import GeneratorParams, generate_corpus


class ConfigError(ValueError):
    pass


ALL_POLICIES = tuple(k.value for k in PolicyKind)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment.

    Leave ``sessions_path`` empty to use the synthetic generator; in that mode
    ``sessions`` sessions are drawn from ``generator``, redrawn for every run
    unless ``resample_corpus`` is false.
    """

    sessions_path: str | None = None
    features_path: str | None = None
    generator: GeneratorParams = field(default_factory=GeneratorParams)
    sessions: int = 515
    resample_corpus: bool = True
    num_arms: int | None = None
    arm_names: tuple[str, ...] | None = None
    contexts: tuple[str, ...] = CONTEXT_TYPES
    policies: tuple[str, ...] = ALL_POLICIES
    r: int = 6
    p_drop: float = 0.2
    n: int = 100
    cutoffs: tuple[int, ...] = (1000, 2000, 3000)
    seed: int | None = None
    pca_dim: int = DEFAULT_PCA_DIM
    scale: float = 1.0
    out_dir: str = "results"

    @property
    def synthetic(self) -> bool:
        return self.sessions_path is None

    @property
    def arms(self) -> int:
        return self.num_arms if self.num_arms is not None else self.generator.num_arms

    @property
    def horizon(self) -> int:
        return max(self.cutoffs)

    def names_of_arms(self) -> list[str]:
        if self.arm_names is not None:
            return list(self.arm_names)
        return [f"arm{a}" for a in range(self.arms)]

    def validate(self, session_count: int | None = None) -> None:
        """Check field ranges; ``session_count`` overrides ``sessions`` for
        the horizon check once a real dataset has been read."""
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        if self.r < 1:
            raise ConfigError("r must be at least 1")
        if not 0.0 <= self.p_drop < 1.0:
            raise ConfigError("p_drop must lie in [0, 1)")
        if not self.cutoffs or any(c < 1 for c in self.cutoffs):
            raise ConfigError("cutoffs must be a nonempty list of positive integers")
        if list(self.cutoffs) != sorted(set(self.cutoffs)):
            raise ConfigError("cutoffs must be strictly increasing")
        if not self.contexts:
            raise ConfigError("at least one context type is required")
        for c in self.contexts:
            if c not in CONTEXT_TYPES:
                raise ConfigError(f"unknown context type {c!r}; expected one of {CONTEXT_TYPES}")
        if not self.policies:
            raise ConfigError("at least one policy is required")
        for p in self.policies:
            if p not in ALL_POLICIES:
                raise ConfigError(f"unknown policy {p!r}; expected one of {ALL_POLICIES}")
        if len(set(self.policies)) != len(self.policies):
            raise ConfigError("policies are listed twice")
        if self.pca_dim < 1:
            raise ConfigError("pca_dim must be positive")
        if self.scale <= 0:
            raise ConfigError("scale must be positive")
        if self.arms < 2:
            raise ConfigError("need at least two arms")
        if self.arm_names is not None and len(self.arm_names) != self.arms:
            raise ConfigError("arm_names must have one entry per arm")
        if self.synthetic:
            if self.features_path is not None:
                raise ConfigError("features_path given without sessions_path")
            try:
                self.generator.validate()
            except ValueError as err:
                raise ConfigError(f"generator: {err}") from None
            if self.num_arms is not None and self.num_arms != self.generator.num_arms:
                raise ConfigError("num_arms disagrees with the generator")
        elif self.features_path is None:
            raise ConfigError("sessions_path needs a features_path")
        count = self.sessions if session_count is None else session_count
        if count < 1:
            raise ConfigError("session count must be at least 1")
        if self.horizon > self.r * count:
            raise ConfigError(
                f"largest cutoff {self.horizon} exceeds r x sessions = {self.r * count}"
            )

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, GeneratorParams):
                value = value.to_dict()
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(d)
        if "generator" in kw:
            g = kw["generator"]
            try:
                kw["generator"] = g if isinstance(g, GeneratorParams) else GeneratorParams.from_dict(g)
            except (TypeError, ValueError) as err:
                raise ConfigError(f"generator: {err}") from None
        for name in ("arm_names", "contexts", "policies", "cutoffs"):
            if kw.get(name) is not None:
                if isinstance(kw[name], str):
                    raise ConfigError(f"{name} must be a list")
                kw[name] = tuple(kw[name])
        return cls(**kw)

    def updated(self, **changes) -> ExperimentConfig:
        return replace(self, **changes)


@dataclass
class Dataset:
    sessions: list[SessionRecord]
    features: ImageFeatureTable


@dataclass
class RunResult:
    run_index: int
    # context -> policy label -> trajectory
    trajectories: dict[str, dict[str, Trajectory]]
    majority_label: int


def _builders(cfg: ExperimentConfig, data: Dataset) -> dict[str, ContextBuilder]:
    return {c: make_builder(c, data.sessions, data.features, cfg.pca_dim) for c in cfg.contexts}


def synthetic_dataset(cfg: ExperimentConfig, run_index: int | None) -> Dataset:
    """Corpus for one run (or the shared corpus when ``run_index`` is None)."""
    parts = (cfg.seed, "corpus") if run_index is None else (cfg.seed, run_index, "corpus")
    corpus = generate_corpus(cfg.generator, cfg.sessions, np.random.default_rng(derive_seed(*parts)))
    return Dataset(corpus.sessions, corpus.features)


def run_replication(cfg: ExperimentConfig, run_index: int, data: Dataset,
                    builders: dict[str, ContextBuilder] | None = None) -> RunResult:
    """Augment, build contexts and replay every policy for one run.

    The augmented dataset is shared by all context types and policies; each
    policy gets its own RNG stream keyed by the run index and its name.
    """
    if builders is None:
        builders = _builders(cfg, data)
    aug_rng = np.random.default_rng(derive_seed(cfg.seed, run_index, "augment"))
    skeleton = augment_dataset(data.sessions, cfg.r, cfg.p_drop, aug_rng)
    majority = majority_label(skeleton, cfg.arms)
    out: dict[str, dict[str, Trajectory]] = {}
    for ctx in cfg.contexts:
        build = builders[ctx]
        events = [e.with_context(build(e.surviving_images)) for e in skeleton]
        out[ctx] = {}
        for name in cfg.policies:
            kind = PolicyKind(name)
            policy = Policy(kind, cfg.arms, build.dim, majority_label=majority,
                            seed=derive_seed(cfg.seed, run_index, kind.label), scale=cfg.scale)
            out[ctx][kind.label] = replay_run(events, policy, cfg.horizon)
    return RunResult(run_index, out, majority)


def run_experiment(cfg: ExperimentConfig, data: Dataset | None = None,
                   on_run: Callable[[RunResult], None] | None = None) -> RunSummary:
    """Run ``cfg.n`` replications (indices 1..n) and aggregate them.

    ``on_run`` receives each finished run in index order, e.g. to write its
    trajectories. Real data must be passed in ``data``; in synthetic mode it
    is generated from the master seed.
    """
    if cfg.seed is None:
        raise ConfigError("a master seed is required")
    if cfg.synthetic:
        cfg.validate()
    else:
        if data is None:
            raise ConfigError("real-data mode needs a loaded dataset")
        cfg.validate(len(data.sessions))
        for s in data.sessions:
            s.check_labels(cfg.arms)

    shared_builders = None
    if not cfg.synthetic or not cfg.resample_corpus:
        if data is None:
            data = synthetic_dataset(cfg, None)
        shared_builders = _builders(cfg, data)

    collected: dict[str, dict[str, list[Trajectory]]] = {
        c: {PolicyKind(p).label: [] for p in cfg.policies} for c in cfg.contexts
    }
    for run_index in range(1, cfg.n + 1):
        if shared_builders is None:
            result = run_replication(cfg, run_index, synthetic_dataset(cfg, run_index))
        else:
            result = run_replication(cfg, run_index, data, shared_builders)
        for ctx, by_policy in result.trajectories.items():
            for label, traj in by_policy.items():
                collected[ctx][label].append(traj)
        if on_run is not None:
            on_run(result)

    summary = RunSummary()
    for ctx in cfg.contexts:
        summary = summary.merge(aggregate_runs(collected[ctx], cfg.cutoffs, context=ctx))
    return summary


def mean_cumulative(trajectories: Sequence[Trajectory]) -> np.ndarray:
    """Average cumulative-reward curve over runs, summed in run order."""
    total = np.zeros(len(trajectories[0]), dtype=np.int64)
    for tr in trajectories:
        total += tr.cumulative
    return total / len(trajectories)
