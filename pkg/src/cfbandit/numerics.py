"""Small dense numeric kernel used by the bandit policies and the context
pipeline: Cholesky factors with rank-one updates, SPD solves, Gaussian
sampling from a precision factor, Jacobi-based PCA and the paired t-test.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

from cfbandit import _kernels

PIVOT_TOL = 1e-12
SYMMETRY_TOL = 1e-10
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
# eigenvalues below this fraction of the largest one are treated as zero
ZERO_EIG_RTOL = 1e-12


class NumericsError(ValueError):
    pass


class DimensionMismatch(NumericsError):
    pass


class NotSymmetric(NumericsError):
    pass


class NotPositiveDefinite(NumericsError):
    pass


class EmptyData(NumericsError):
    pass


class BadK(NumericsError):
    pass


class LengthMismatch(NumericsError):
    pass


class TooFewSamples(NumericsError):
    pass


@dataclass(frozen=True)
class TriFactor:
    """Lower-triangular Cholesky factor ``L`` of an SPD matrix ``L @ L.T``."""

    L: np.ndarray

    @property
    def dim(self) -> int:
        return self.L.shape[0]

    @classmethod
    def identity(cls, dim: int) -> TriFactor:
        return cls(np.eye(dim))

    def matrix(self) -> np.ndarray:
        return self.L @ self.L.T


def _vector(x, dim: int, name: str = "vector") -> np.ndarray:
    v = np.ascontiguousarray(x, dtype=np.float64)
    if v.shape != (dim,):
        raise DimensionMismatch(f"{name} has shape {v.shape}, expected ({dim},)")
    return v


def cholesky_factor(m) -> TriFactor:
    """Factor a symmetric positive-definite matrix as ``L @ L.T``.

    Raises
    ------
    NotSymmetric
        If ``m`` is not square or deviates from symmetry by more than 1e-10.
    NotPositiveDefinite
        If a pivot falls to 1e-12 or below.
    """
    a = np.ascontiguousarray(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {a.shape}")
    if a.size and np.max(np.abs(a - a.T)) > SYMMETRY_TOL:
        raise NotSymmetric("matrix is not symmetric")
    L, bad = _kernels.cholesky_lower(a, PIVOT_TOL)
    if bad >= 0:
        raise NotPositiveDefinite(f"non-positive pivot at column {bad}")
    return TriFactor(L)


def rank_one_update(factor: TriFactor, x) -> TriFactor:
    """Return the factor of ``L @ L.T + outer(x, x)`` in O(dim^2)."""
    v = _vector(x, factor.dim, "update vector")
    return TriFactor(_kernels.chol_update(factor.L, v))


def spd_solve(factor: TriFactor, b) -> np.ndarray:
    """Solve ``(L @ L.T) y = b`` by forward then back substitution."""
    v = _vector(b, factor.dim, "right-hand side")
    return _kernels.back_sub_t(factor.L, _kernels.forward_sub(factor.L, v))


def mvn_sample(mean, precision_factor: TriFactor, z_source, scale: float = 1.0) -> np.ndarray:
    """Draw from ``N(mean, scale**2 * (L @ L.T)^-1)``.

    ``z_source`` is either a ``numpy.random.Generator`` (exactly ``dim``
    standard-normal draws are taken from it) or a pre-drawn vector of
    ``dim`` standard-normal values.
    """
    d = precision_factor.dim
    mu = _vector(mean, d, "mean")
    if isinstance(z_source, np.random.Generator):
        z = z_source.standard_normal(d)
    else:
        z = _vector(z_source, d, "z")
    w = _kernels.back_sub_t(precision_factor.L, z)
    if scale != 1.0:
        w = scale * w
    return mu + w


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.mean.shape[0]

    @property
    def k(self) -> int:
        return self.components.shape[0]


def pca_fit(rows, k: int) -> PcaModel:
    """Fit a k-component PCA by Jacobi eigendecomposition of the covariance.

    Components come back ordered by decreasing eigenvalue. Each nonzero row is
    sign-normalised so that its largest-magnitude entry is positive; directions
    with (numerically) zero variance are returned as all-zero rows.
    """
    X = np.asarray(rows, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise EmptyData("PCA needs at least two rows")
    m, n = X.shape
    if k < 1 or k > n:
        raise BadK(f"k={k} outside [1, {n}]")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = np.ascontiguousarray((Xc.T @ Xc) / (m - 1))
    cov = 0.5 * (cov + cov.T)
    w, V, _ = _kernels.jacobi_eigh(cov, JACOBI_TOL, JACOBI_MAX_SWEEPS)
    order = np.argsort(-w, kind="stable")[:k]
    vals = w[order]
    comps = V[:, order].T.copy()
    cutoff = ZERO_EIG_RTOL * max(float(w.max()), 0.0)
    for j in range(k):
        if vals[j] <= cutoff or vals[j] <= 0.0:
            comps[j] = 0.0
            vals[j] = 0.0
            continue
        if comps[j, np.argmax(np.abs(comps[j]))] < 0:
            comps[j] = -comps[j]
    return PcaModel(mean=mean, components=comps, eigenvalues=vals)


def pca_project(model: PcaModel, v) -> np.ndarray:
    x = _vector(v, model.input_dim, "input")
    return model.components @ (x - model.mean)


def pca_project_rows(model: PcaModel, rows) -> np.ndarray:
    """Project every row of a matrix; same arithmetic as :func:`pca_project`."""
    X = np.asarray(rows, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise DimensionMismatch(f"rows of width {model.input_dim} expected")
    return np.stack([pca_project(model, r) for r in X]) if len(X) else np.zeros((0, model.k))


@dataclass(frozen=True)
class TTestResult:
    t_stat: float
    dof: int
    p_two_sided: float


def student_t_sf2(t: float, dof: int) -> float:
    """Two-sided tail probability P(|T| >= |t|) for Student's t."""
    if math.isinf(t):
        return 0.0
    x = dof / (dof + t * t)
    return float(betainc(0.5 * dof, 0.5, x))


def paired_t_test(a, b) -> TTestResult:
    """Paired-samples t-test on two equal-length series.

    Zero-variance differences give ``t = 0, p = 1`` when the mean difference
    is zero and ``t = +-inf, p = 0`` otherwise.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"series shapes {x.shape} and {y.shape} differ")
    n = x.shape[0]
    if n < 2:
        raise TooFewSamples(f"need at least 2 pairs, got {n}")
    diff = x - y
    mean = float(diff.mean())
    sd = float(diff.std(ddof=1))
    dof = n - 1
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, dof, 1.0)
        return TTestResult(math.copysign(math.inf, mean), dof, 0.0)
    t = mean / (sd / math.sqrt(n))
    p = 1.0 if t == 0.0 else student_t_sf2(t, dof)
    return TTestResult(t, dof, p)
