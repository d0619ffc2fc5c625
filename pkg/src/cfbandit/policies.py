"""Arm-selection models: counterfactual Thompson sampling, disjoint linear
Thompson sampling, its intuition-extended variant, the observational
baseline and ZeroR.

Every policy exposes the same two calls, ``select_arm(x, intuition)`` and
``update(x, intuition, arm, reward)``, so the replay loop treats them
uniformly.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from cfbandit.numerics import (
    DimensionMismatch,
    TriFactor,
    cholesky_factor,
    mvn_sample,
    rank_one_update,
    spd_solve,
)

# full refactorisation of B every this many rank-one updates, per slice
REFACTOR_EVERY = 512


class PolicyKind(str, enum.Enum):
    CFTS = "cfts"
    TS = "ts"
    EXTTS = "extts"
    OBS = "obs"
    ZEROR = "zeror"

    @property
    def label(self) -> str:
        return _LABELS[self]


_LABELS = {
    PolicyKind.CFTS: "CF-TS",
    PolicyKind.TS: "TS",
    PolicyKind.EXTTS: "ExtTS",
    PolicyKind.OBS: "Obs",
    PolicyKind.ZEROR: "ZeroR",
}


class MissingMajority(ValueError):
    pass


class InvalidReward(ValueError):
    pass


class GaussianArmState:
    """Bayesian linear model for one arm: precision ``B``, response ``f`` and
    posterior mean ``mu_hat = B^-1 f``, starting from ``B = I``, ``f = 0``.
    """

    def __init__(self, dim: int):
        self.dim = dim
        self.B = np.eye(dim)
        self.factor = TriFactor.identity(dim)
        self.f = np.zeros(dim)
        self.mu_hat = np.zeros(dim)
        self.n_updates = 0

    def sample(self, rng, scale: float = 1.0) -> np.ndarray:
        return mvn_sample(self.mu_hat, self.factor, rng, scale)

    def update(self, x: np.ndarray, reward: float) -> None:
        self.B += np.outer(x, x)
        self.n_updates += 1
        if self.n_updates % REFACTOR_EVERY == 0:
            self.factor = cholesky_factor(self.B)
        else:
            self.factor = rank_one_update(self.factor, x)
        self.f += x * reward
        self.mu_hat = spd_solve(self.factor, self.f)

    def copy(self) -> GaussianArmState:
        other = GaussianArmState.__new__(GaussianArmState)
        other.dim = self.dim
        other.B = self.B.copy()
        other.factor = TriFactor(self.factor.L.copy())
        other.f = self.f.copy()
        other.mu_hat = self.mu_hat.copy()
        other.n_updates = self.n_updates
        return other


@dataclass(frozen=True)
class Decision:
    arm: int
    # expected reward per candidate arm; None for the non-sampling baselines
    sampled_means: tuple[float, ...] | None = None


class Policy:
    """One selection model with its own parameter slices and RNG stream.

    Parameters
    ----------
    kind : PolicyKind
    num_arms : int
        Number of arms ``A`` (diseases), at least 2.
    context_dim : int
        Dimension ``d`` of the context vectors fed to ``select_arm``.
    majority_label : int, optional
        Constant answer of ZeroR; required for that kind only.
    seed : int or numpy.random.SeedSequence
        Seed of the policy's private generator.
    scale : float
        Multiplier ``v`` of the posterior standard deviation when sampling.
        ``1.0`` samples from ``N(mu_hat, B^-1)`` exactly.
    """

    def __init__(
        self,
        kind: PolicyKind | str,
        num_arms: int,
        context_dim: int,
        majority_label: int | None = None,
        seed=0,
        scale: float = 1.0,
    ):
        kind = PolicyKind(kind)
        if num_arms < 2:
            raise ValueError("need at least two arms")
        if context_dim < 1:
            raise ValueError("context dimension must be positive")
        if kind is PolicyKind.ZEROR:
            if majority_label is None:
                raise MissingMajority("ZeroR needs a majority label")
            if not 0 <= majority_label < num_arms:
                raise ValueError(f"majority label {majority_label} out of range")
        self.kind = kind
        self.num_arms = num_arms
        self.context_dim = context_dim
        self.majority_label = majority_label
        self.scale = scale
        self.rng = np.random.default_rng(seed)

        A, d = num_arms, context_dim
        if kind is PolicyKind.CFTS:
            self.slices = [[GaussianArmState(d) for _ in range(A)] for _ in range(A)]
        elif kind is PolicyKind.TS:
            self.slices = [GaussianArmState(d) for _ in range(A)]
        elif kind is PolicyKind.EXTTS:
            self.slices = [GaussianArmState(d + A) for _ in range(A)]
        else:
            self.slices = []

    @property
    def name(self) -> str:
        return self.kind.label

    def _check(self, x, intuition: int) -> np.ndarray:
        v = np.ascontiguousarray(x, dtype=np.float64)
        if v.shape != (self.context_dim,):
            raise DimensionMismatch(
                f"context has shape {v.shape}, expected ({self.context_dim},)"
            )
        if not 0 <= intuition < self.num_arms:
            raise ValueError(f"intuition {intuition} out of range")
        return v

    def _extended(self, x: np.ndarray, intuition: int) -> np.ndarray:
        ext = np.zeros(self.context_dim + self.num_arms)
        ext[: self.context_dim] = x
        ext[self.context_dim + intuition] = 1.0
        return ext

    def _row(self, intuition: int) -> list[GaussianArmState]:
        if self.kind is PolicyKind.CFTS:
            return self.slices[intuition]
        return self.slices

    def select_arm(self, x, intuition: int) -> Decision:
        x = self._check(x, intuition)
        if self.kind is PolicyKind.OBS:
            return Decision(intuition)
        if self.kind is PolicyKind.ZEROR:
            return Decision(self.majority_label)
        if self.kind is PolicyKind.EXTTS:
            x = self._extended(x, intuition)
        # arms are sampled in ascending order so the draw stream is reproducible
        scores = np.array([x @ arm.sample(self.rng, self.scale) for arm in self._row(intuition)])
        best = np.flatnonzero(scores == scores.max())
        arm = int(best[0]) if len(best) == 1 else int(best[self.rng.integers(len(best))])
        return Decision(arm, tuple(float(s) for s in scores))

    def update(self, x, intuition: int, arm: int, reward: int) -> None:
        x = self._check(x, intuition)
        if reward not in (0, 1):
            raise InvalidReward(f"reward must be 0 or 1, got {reward!r}")
        if not 0 <= arm < self.num_arms:
            raise ValueError(f"arm {arm} out of range")
        if self.kind in (PolicyKind.OBS, PolicyKind.ZEROR):
            return
        if self.kind is PolicyKind.EXTTS:
            x = self._extended(x, intuition)
        self._row(intuition)[arm].update(x, float(reward))


def policy_init(kind, num_arms: int, context_dim: int, majority_label: int | None = None,
                seed=0, scale: float = 1.0) -> Policy:
    return Policy(kind, num_arms, context_dim, majority_label=majority_label, seed=seed, scale=scale)
