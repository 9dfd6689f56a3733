"""PCA and LDA projections by eigendecomposition."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh


class TransformError(ValueError):
    pass


class DegenerateDataError(TransformError):
    pass


class SingleClassError(TransformError):
    pass


class RankBoundError(TransformError):
    pass


def _fix_signs(basis: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[idx, np.arange(basis.shape[1])])
    signs[signs == 0] = 1.0
    return basis * signs


@dataclass(frozen=True, eq=False)
class Pca:
    mean: np.ndarray
    basis: np.ndarray  # (input_dim, d), orthonormal columns
    eigenvalues: np.ndarray

    def project(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x) - self.mean) @ self.basis


def fit_pca(features: np.ndarray, d_pca: int, rcond: float = 1e-12) -> Pca:
    x = np.asarray(features, dtype=np.float64)
    m, dim = x.shape
    if not 1 <= d_pca <= dim:
        raise TransformError(f"d_pca must be in [1, {dim}], got {d_pca}")
    if m <= d_pca:
        raise DegenerateDataError(f"{m} samples cannot support {d_pca} components")
    mean = x.mean(axis=0)
    cov = np.cov(x - mean, rowvar=False, bias=False).reshape(dim, dim)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1][:d_pca]
    vals, vecs = vals[order], vecs[:, order]
    if vals[0] <= 0 or vals[-1] <= rcond * vals[0]:
        raise DegenerateDataError(f"data has fewer than {d_pca} non-degenerate directions")
    return Pca(mean, _fix_signs(vecs), vals)


def scatter_matrices(x: np.ndarray, labels) -> tuple[np.ndarray, np.ndarray]:
    """Within-class and between-class scatter."""
    labels = np.asarray(labels)
    mu = x.mean(axis=0)
    dim = x.shape[1]
    sw = np.zeros((dim, dim))
    sb = np.zeros((dim, dim))
    for c in np.unique(labels):
        xc = x[labels == c]
        mc = xc.mean(axis=0)
        d = xc - mc
        sw += d.T @ d
        diff = (mc - mu)[:, None]
        sb += xc.shape[0] * (diff @ diff.T)
    return sw, sb


@dataclass(frozen=True, eq=False)
class Lda:
    basis: np.ndarray  # (d_in, d_lda)
    eigenvalues: np.ndarray

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) @ self.basis


def fit_lda(projected: np.ndarray, labels, d_lda: int, reg: float = 1e-6) -> Lda:
    """Top generalised eigenvectors of (Sw + eps I)^-1 Sb, eps = reg * trace(Sw) / dim.

    Columns are scaled so that W^T (Sw + eps I) W = I.
    """
    x = np.asarray(projected, dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.size < 2:
        raise SingleClassError("LDA needs at least two classes")
    dim = x.shape[1]
    bound = min(dim, classes.size - 1)
    if not 1 <= d_lda <= bound:
        raise RankBoundError(f"d_lda={d_lda} outside [1, {bound}] for {classes.size} classes in {dim} dims")
    sw, sb = scatter_matrices(x, labels)
    eps = reg * np.trace(sw) / dim
    if not eps > 0:
        raise DegenerateDataError("within-class scatter is zero")
    vals, vecs = eigh(sb, sw + eps * np.eye(dim))
    order = np.argsort(vals)[::-1][:d_lda]
    return Lda(_fix_signs(vecs[:, order]), vals[order])


def fisher_ratio(x: np.ndarray, labels) -> float:
    """trace(Sb) / trace(Sw) of already-projected data."""
    sw, sb = scatter_matrices(np.asarray(x, dtype=np.float64), labels)
    return float(np.trace(sb) / np.trace(sw))


@dataclass(frozen=True, eq=False)
class FeatureTransform:
    pca: Pca
    lda: Lda

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.lda.project(self.pca.project(x))

    @property
    def output_dim(self) -> int:
        return self.lda.basis.shape[1]

    def to_dict(self) -> dict:
        return {
            "pca_mean": self.pca.mean.tolist(),
            "pca_basis": self.pca.basis.tolist(),
            "pca_eigenvalues": self.pca.eigenvalues.tolist(),
            "lda_basis": self.lda.basis.tolist(),
            "lda_eigenvalues": self.lda.eigenvalues.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> FeatureTransform:
        a = lambda k: np.asarray(d[k], dtype=np.float64)  # noqa: E731
        return cls(Pca(a("pca_mean"), a("pca_basis"), a("pca_eigenvalues")), Lda(a("lda_basis"), a("lda_eigenvalues")))
