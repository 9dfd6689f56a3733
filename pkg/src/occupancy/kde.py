"""Gaussian kernel density estimation on a uniform grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GRID_POINTS = 512
MIN_SAMPLES = 10


class KdeError(ValueError):
    pass


class TooFewSamplesError(KdeError):
    pass


class ZeroSpreadError(KdeError):
    pass


@dataclass(frozen=True, eq=False)
class PdfCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def integral(self) -> float:
        return float(np.trapezoid(self.density, self.grid))

    def __call__(self, x) -> np.ndarray:
        """Linear interpolation of the density; zero outside the grid."""
        return np.interp(x, self.grid, self.density, left=0.0, right=0.0)

    def to_dict(self) -> dict:
        return {"grid": self.grid.tolist(), "density": self.density.tolist(), "bandwidth": self.bandwidth}

    @classmethod
    def from_dict(cls, d: dict) -> PdfCurve:
        return cls(np.asarray(d["grid"], float), np.asarray(d["density"], float), float(d["bandwidth"]))


def silverman_bandwidth(samples: np.ndarray) -> float:
    """0.9 * min(std, IQR / 1.34) * m ** (-1/5).

    Falls back to whichever spread estimate is non-zero when the other vanishes
    (e.g. a sample set that is mostly one repeated value).
    """
    x = np.asarray(samples, dtype=np.float64)
    std = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(std, (q75 - q25) / 1.34)
    if spread <= 0:
        spread = max(std, (q75 - q25) / 1.34)
    return 0.9 * spread * x.size ** (-0.2)


def fit_kde(samples, bandwidth: float | None = None, grid_points: int = GRID_POINTS) -> PdfCurve:
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < MIN_SAMPLES:
        raise TooFewSamplesError(f"need at least {MIN_SAMPLES} samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise KdeError("samples must be finite")
    if x.max() == x.min():
        raise ZeroSpreadError("all samples are identical")
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise ZeroSpreadError(f"bandwidth must be positive, got {h}")

    grid = np.linspace(x.min() - 3 * h, x.max() + 3 * h, grid_points)
    density = _binned_gaussian_kde(x, grid, h)
    return PdfCurve(grid, density, h)


def _binned_gaussian_kde(x: np.ndarray, grid: np.ndarray, h: float) -> np.ndarray:
    # Linear binning onto the grid, then convolution with the sampled kernel.
    # Exact evaluation is O(m * grid) and too slow for pooled Monte-Carlo sets.
    if x.size <= 4096:
        z = (grid[:, None] - x[None, :]) / h
        return np.exp(-0.5 * z * z).sum(axis=1) / (x.size * h * np.sqrt(2 * np.pi))
    dx = grid[1] - grid[0]
    pos = (x - grid[0]) / dx
    lo = np.floor(pos).astype(int)
    frac = pos - lo
    counts = np.bincount(lo, weights=1 - frac, minlength=grid.size + 1)
    counts += np.bincount(lo + 1, weights=frac, minlength=grid.size + 1)[: counts.size]
    counts = counts[: grid.size]
    half = int(np.ceil(8 * h / dx))
    k = np.arange(-half, half + 1) * dx / h
    kernel = np.exp(-0.5 * k * k) / (x.size * h * np.sqrt(2 * np.pi))
    return np.convolve(counts, kernel, mode="full")[half : half + grid.size]


def map_level(curve: PdfCurve) -> float:
    """Abscissa of the global density maximum (first one on ties)."""
    return float(curve.grid[int(np.argmax(curve.density))])
