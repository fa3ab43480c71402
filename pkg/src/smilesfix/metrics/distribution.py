"""Gaussian summaries, Fréchet distance, PCA projection and 1-D KDE."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from smilesfix.errors import BadBandwidth, DegenerateData, DimMismatch, EmptySet, NonFiniteInput


@dataclass(frozen=True)
class GaussianSummary:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])

    @classmethod
    def fit(cls, x: np.ndarray) -> "GaussianSummary":
        """Sample mean and (unbiased) covariance of the rows of ``x``."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] == 0:
            raise EmptySet("need at least one embedding row")
        mu = x.mean(axis=0)
        if x.shape[0] < 2:
            cov = np.zeros((x.shape[1], x.shape[1]))
        else:
            cov = np.cov(x, rowvar=False).reshape(x.shape[1], x.shape[1])
        return cls(mu, (cov + cov.T) / 2)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((m + m.T) / 2)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def frechet_distance(g: GaussianSummary, r: GaussianSummary) -> float:
    """||mu_g - mu_r||^2 + Tr(S_g + S_r - 2 (S_g S_r)^(1/2)).

    The trace of the product root is taken from the symmetric form
    S_g^(1/2) S_r S_g^(1/2), whose eigenvalues are clamped at zero.
    """
    if g.mean.shape != r.mean.shape or g.cov.shape != r.cov.shape:
        raise DimMismatch(f"dims {g.mean.shape} vs {r.mean.shape}")
    for arr in (g.mean, g.cov, r.mean, r.cov):
        if not np.all(np.isfinite(arr)):
            raise NonFiniteInput("summary contains NaN or inf")
    diff = g.mean - r.mean
    root_g = _psd_sqrt(g.cov)
    inner = root_g @ r.cov @ root_g
    w = np.linalg.eigvalsh((inner + inner.T) / 2)
    tr_root = float(np.sqrt(np.clip(w, 0.0, None)).sum())
    d = float(diff @ diff) + float(np.trace(g.cov) + np.trace(r.cov)) - 2.0 * tr_root
    return max(d, 0.0)


@dataclass(frozen=True)
class PCAResult:
    projections: np.ndarray  # (n, dims)
    explained_variance_ratio: np.ndarray
    components: np.ndarray  # (dims, d)
    center: np.ndarray

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.center) @ self.components.T


def pca_project(vectors, dims: int = 1) -> PCAResult:
    """Project centred vectors onto the top ``dims`` covariance eigenvectors.

    Each axis is oriented so its largest-magnitude loading is positive.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DegenerateData("PCA needs at least two vectors")
    center = x.mean(axis=0)
    cov = np.cov(x - center, rowvar=False).reshape(x.shape[1], x.shape[1])
    if not np.any(np.abs(cov) > 0):
        raise DegenerateData("covariance is all zero")
    w, v = np.linalg.eigh(cov)
    order = np.argsort(w)[::-1]
    w, v = np.clip(w[order], 0.0, None), v[:, order]
    comps = v[:, :dims].T.copy()
    for k in range(comps.shape[0]):
        if comps[k, np.argmax(np.abs(comps[k]))] < 0:
            comps[k] = -comps[k]
    return PCAResult((x - center) @ comps.T, w[:dims] / w.sum(), comps, center)


def scott_bandwidth(values) -> float:
    v = np.asarray(values, dtype=np.float64)
    sd = v.std(ddof=1) if v.size > 1 else 0.0
    return float(sd * v.size ** (-1 / 5)) if sd > 0 else 1.0


def kde_1d(values, bandwidth: float, grid) -> np.ndarray:
    """Gaussian kernel density estimate evaluated on ``grid``."""
    if not bandwidth > 0:
        raise BadBandwidth(f"bandwidth must be positive, got {bandwidth}")
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptySet("kde needs at least one value")
    z = (np.asarray(grid, dtype=np.float64)[:, None] - v[None, :]) / bandwidth
    return np.exp(-0.5 * z * z).sum(axis=1) / (v.size * bandwidth * np.sqrt(2 * np.pi))
