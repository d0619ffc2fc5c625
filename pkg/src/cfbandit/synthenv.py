"""Synthetic diagnosis sessions with a hidden confounder.

Each session has a true disease ``y*`` and a hidden binary user trait ``u``.
``u`` raises both the share of clicks on images of the true disease (so the
context depends on the class and on ``u``) and the probability that the
user's final choice (the intuition) is correct. Policies only ever see the
clicked images and the intuition; ``(u, y*)`` stay in ``hidden``.

The data here is a stand-in for a private user study, not a model of it.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from cfbandit.contexts import ImageFeatureTable, SessionRecord


@dataclass(frozen=True)
class GeneratorParams:
    num_arms: int = 5
    class_priors: tuple[float, ...] = (0.221, 0.200, 0.200, 0.190, 0.189)
    feature_dim: int = 64
    prototype_scale: float = 1.0
    # per-coordinate noise of image feature vectors around their prototype
    feature_noise: float = 0.5
    confounder_prior: float = 0.57
    intuition_acc_u1: float = 0.50
    intuition_acc_u0: float = 0.20
    images_per_disease: int = 30
    clicks_min: int = 3
    clicks_max: int = 8
    # P(click from the true disease's pool) = click_quality + click_quality_u * u
    click_quality: float = 0.6
    click_quality_u: float = 0.2

    def validate(self) -> None:
        A = self.num_arms
        if A < 2:
            raise ValueError("num_arms must be at least 2")
        if len(self.class_priors) != A:
            raise ValueError("class_priors must have one entry per arm")
        if any(p < 0 for p in self.class_priors) or abs(sum(self.class_priors) - 1.0) > 1e-12:
            raise ValueError("class_priors must be a probability vector")
        for name in ("confounder_prior", "intuition_acc_u1", "intuition_acc_u0"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for u in (0, 1):
            q = self.click_quality + self.click_quality_u * u
            if not 0.0 <= q <= 1.0:
                raise ValueError("click quality must lie in [0, 1] for u = 0 and u = 1")
        if self.feature_dim < A:
            raise ValueError("feature_dim must be at least num_arms (orthogonal prototypes)")
        if self.images_per_disease < 1:
            raise ValueError("images_per_disease must be positive")
        if not 1 <= self.clicks_min <= self.clicks_max:
            raise ValueError("need 1 <= clicks_min <= clicks_max")
        if self.clicks_max > self.images_per_disease * A:
            raise ValueError("clicks_max exceeds the image pool")
        if self.feature_noise < 0:
            raise ValueError("feature_noise must be nonnegative")

    @property
    def expected_obs_accuracy(self) -> float:
        q = self.confounder_prior
        return q * self.intuition_acc_u1 + (1 - q) * self.intuition_acc_u0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["class_priors"] = list(self.class_priors)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> GeneratorParams:
        d = dict(d)
        if "class_priors" in d:
            d["class_priors"] = tuple(float(p) for p in d["class_priors"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown generator parameters: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class HiddenTrace:
    u: int
    true_class: int


@dataclass
class SyntheticCorpus:
    sessions: list[SessionRecord]
    features: ImageFeatureTable
    hidden: list[HiddenTrace] = field(repr=False)
    params: GeneratorParams


def image_id(disease: int, j: int) -> str:
    return f"d{disease}_img{j:02d}"


def generate_corpus(params: GeneratorParams, m: int, rng: np.random.Generator) -> SyntheticCorpus:
    """Draw an image pool and ``m`` sessions.

    Image features are ``scale * e_disease + N(0, feature_noise^2)`` per
    coordinate. Per session: ``y* ~ Cat(priors)``, ``u ~ Bernoulli(q)``, a
    click count uniform on ``[clicks_min, clicks_max]``, each click taken from
    the true pool with probability ``click_quality + click_quality_u * u`` and
    from a uniformly chosen image of the other pools otherwise (no repeats),
    and an intuition that equals ``y*`` with probability
    ``intuition_acc_u{u}`` and is otherwise uniform over the wrong arms.
    """
    params.validate()
    if m < 1:
        raise ValueError("session count must be at least 1")
    A, n_img, D = params.num_arms, params.images_per_disease, params.feature_dim

    rows = {}
    for a in range(A):
        proto = np.zeros(D)
        proto[a] = params.prototype_scale
        noise = rng.normal(0.0, params.feature_noise, size=(n_img, D))
        for j in range(n_img):
            rows[image_id(a, j)] = proto + noise[j]
    features = ImageFeatureTable(D, rows)

    priors = np.asarray(params.class_priors)
    sessions, hidden = [], []
    for s in range(m):
        y = int(rng.choice(A, p=priors))
        u = int(rng.random() < params.confounder_prior)
        k = int(rng.integers(params.clicks_min, params.clicks_max + 1))
        quality = params.click_quality + params.click_quality_u * u
        acc = params.intuition_acc_u1 if u else params.intuition_acc_u0
        if rng.random() < acc:
            intuition = y
        else:
            intuition = int(rng.integers(A - 1))
            intuition += intuition >= y
        clicked: list[str] = []
        while len(clicked) < k:
            if rng.random() < quality:
                img = image_id(y, int(rng.integers(n_img)))
            else:
                other = int(rng.integers(A - 1))
                other += other >= y
                img = image_id(other, int(rng.integers(n_img)))
            if img not in clicked:
                clicked.append(img)
        sessions.append(SessionRecord(f"s{s:05d}", tuple(clicked), intuition, y))
        hidden.append(HiddenTrace(u, y))
    return SyntheticCorpus(sessions, features, hidden, params)


def corpus_diagnostics(c: SyntheticCorpus) -> dict:
    """Empirical statistics used to validate the generator against its
    analytic targets."""
    if len(c.hidden) != len(c.sessions):
        raise ValueError("corpus has no hidden trace")
    A = c.params.num_arms
    intuition = np.array([s.intuition for s in c.sessions])
    label = np.array([s.true_label for s in c.sessions])
    u = np.array([h.u for h in c.hidden])
    hit = intuition == label
    per_u = {}
    for val in (0, 1):
        mask = u == val
        per_u[val] = float(hit[mask].mean()) if mask.any() else float("nan")
    own = [
        np.mean([img.startswith(f"d{s.true_label}_") for img in s.clicked_images])
        for s in c.sessions
    ]
    return {
        "sessions": len(c.sessions),
        "obs_accuracy": float(hit.mean()),
        "class_frequencies": np.bincount(label, minlength=A) / len(label),
        "mean_clicks": float(np.mean([len(s.clicked_images) for s in c.sessions])),
        "intuition_accuracy_by_u": per_u,
        "confounder_rate": float(u.mean()),
        "own_pool_click_share": float(np.mean(own)),
    }
