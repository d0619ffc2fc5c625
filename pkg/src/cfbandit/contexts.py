"""Context vectors built from the images a user clicked during a session.

Two representations are supported:

* ``imgctx``: sum of the PCA projections of the clicked images' feature rows;
* ``simctx``: sum of the PCA projections of the clicked images' co-click
  similarity rows.

Both PCA models are fit on per-image rows (one row per image in the pool) and
projections are summed afterwards.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from cfbandit.numerics import PcaModel, pca_fit, pca_project

DEFAULT_PCA_DIM = 64
CONTEXT_TYPES = ("imgctx", "simctx")


class UnknownImage(KeyError):
    pass


class InvalidSession(ValueError):
    pass


@dataclass(frozen=True)
class SessionRecord:
    session_id: str
    clicked_images: tuple[str, ...]
    intuition: int
    true_label: int

    def __post_init__(self):
        object.__setattr__(self, "clicked_images", tuple(self.clicked_images))
        if not self.clicked_images:
            raise InvalidSession(f"session {self.session_id!r} has no clicked images")
        if len(set(self.clicked_images)) != len(self.clicked_images):
            raise InvalidSession(f"session {self.session_id!r} repeats an image")

    def check_labels(self, num_arms: int) -> None:
        for name in ("intuition", "true_label"):
            value = getattr(self, name)
            if not 0 <= value < num_arms:
                raise InvalidSession(
                    f"session {self.session_id!r}: {name}={value} outside [0, {num_arms})"
                )


@dataclass
class ImageFeatureTable:
    """Pre-extracted feature vector per image id, in insertion order."""

    feature_dim: int
    rows: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for image_id, vec in list(self.rows.items()):
            v = np.asarray(vec, dtype=np.float64)
            if v.shape != (self.feature_dim,):
                raise ValueError(f"image {image_id!r}: expected {self.feature_dim} features")
            if not np.all(np.isfinite(v)):
                raise ValueError(f"image {image_id!r}: non-finite feature")
            self.rows[image_id] = v

    @property
    def image_ids(self) -> list[str]:
        return list(self.rows)

    def matrix(self) -> np.ndarray:
        if not self.rows:
            return np.zeros((0, self.feature_dim))
        return np.stack(list(self.rows.values()))


@dataclass(frozen=True)
class CoClickMatrix:
    image_ids: tuple[str, ...]
    counts: np.ndarray

    def index(self) -> dict[str, int]:
        return {img: j for j, img in enumerate(self.image_ids)}


def _images_of(s) -> Sequence[str]:
    return s.clicked_images if hasattr(s, "clicked_images") else s


def co_click_matrix(sessions: Iterable[SessionRecord],
                    image_ids: Sequence[str] | None = None) -> CoClickMatrix:
    """Count, for each image pair, the sessions in which both were clicked.

    ``image_ids`` fixes the row order (e.g. the feature table's order); by
    default the sorted union of clicked ids is used.
    """
    sessions = list(sessions)
    if image_ids is None:
        image_ids = sorted({img for s in sessions for img in s.clicked_images})
    ids = tuple(image_ids)
    idx = {img: j for j, img in enumerate(ids)}
    counts = np.zeros((len(ids), len(ids)), dtype=np.int64)
    for s in sessions:
        try:
            js = sorted(idx[img] for img in s.clicked_images)
        except KeyError as err:
            raise UnknownImage(err.args[0]) from None
        for a in range(len(js)):
            for b in range(a + 1, len(js)):
                counts[js[a], js[b]] += 1
                counts[js[b], js[a]] += 1
    return CoClickMatrix(ids, counts)


def similarity_vectors(c: CoClickMatrix) -> np.ndarray:
    """Row-normalise co-click counts; never co-clicked images get a zero row."""
    counts = c.counts.astype(np.float64)
    totals = counts.sum(axis=1)
    sim = np.zeros_like(counts)
    nz = totals > 0
    sim[nz] = counts[nz] / totals[nz, None]
    return sim


def fit_context_pca(rows: np.ndarray, k: int = DEFAULT_PCA_DIM) -> PcaModel:
    """PCA on per-image rows with ``k`` capped at the row width."""
    rows = np.asarray(rows, dtype=np.float64)
    return pca_fit(rows, min(k, rows.shape[1]))


def _sum_projections(images, index: dict[str, int], rows: np.ndarray, pca: PcaModel) -> np.ndarray:
    try:
        js = sorted(index[img] for img in images)
    except KeyError as err:
        raise UnknownImage(err.args[0]) from None
    out = np.zeros(pca.k)
    for j in js:
        out += pca_project(pca, rows[j])
    return out


def build_img_context(s, feats: ImageFeatureTable, pca: PcaModel) -> np.ndarray:
    """Sum of projected feature rows of the clicked images.

    ``s`` is a :class:`SessionRecord` (or anything with ``clicked_images``) or
    a plain sequence of image ids.
    """
    ids = feats.image_ids
    return _sum_projections(_images_of(s), {img: j for j, img in enumerate(ids)},
                            feats.matrix(), pca)


def build_sim_context(s, sim: np.ndarray, pca: PcaModel,
                      image_ids: Sequence[str]) -> np.ndarray:
    """Sum of projected similarity rows of the clicked images."""
    return _sum_projections(_images_of(s), {img: j for j, img in enumerate(image_ids)},
                            np.asarray(sim, dtype=np.float64), pca)


class ContextBuilder:
    """Caches per-image projections so contexts for many events are cheap.

    Produces the same bits as :func:`build_img_context` /
    :func:`build_sim_context`: projections are computed with
    :func:`pca_project` and accumulated in image-index order.
    """

    def __init__(self, image_ids: Sequence[str], rows: np.ndarray, pca: PcaModel):
        self.image_ids = tuple(image_ids)
        self.pca = pca
        self.index = {img: j for j, img in enumerate(self.image_ids)}
        self.projections = np.stack([pca_project(pca, r) for r in np.asarray(rows, dtype=np.float64)])

    @property
    def dim(self) -> int:
        return self.pca.k

    def __call__(self, images) -> np.ndarray:
        try:
            js = sorted(self.index[img] for img in _images_of(images))
        except KeyError as err:
            raise UnknownImage(err.args[0]) from None
        out = np.zeros(self.pca.k)
        for j in js:
            out += self.projections[j]
        return out

    @classmethod
    def img(cls, feats: ImageFeatureTable, k: int = DEFAULT_PCA_DIM) -> ContextBuilder:
        rows = feats.matrix()
        return cls(feats.image_ids, rows, fit_context_pca(rows, k))

    @classmethod
    def sim(cls, sessions: Sequence[SessionRecord], image_ids: Sequence[str],
            k: int = DEFAULT_PCA_DIM) -> ContextBuilder:
        sim = similarity_vectors(co_click_matrix(sessions, image_ids))
        return cls(image_ids, sim, fit_context_pca(sim, k))


def make_builder(kind: str, sessions: Sequence[SessionRecord], feats: ImageFeatureTable,
                 k: int = DEFAULT_PCA_DIM) -> ContextBuilder:
    if kind == "imgctx":
        return ContextBuilder.img(feats, k)
    if kind == "simctx":
        return ContextBuilder.sim(sessions, feats.image_ids, k)
    raise ValueError(f"unknown context type {kind!r}; expected one of {CONTEXT_TYPES}")
