"""Climate and weather scoring: kernel density estimation, KL divergence,
Hellinger distance, temporal autocovariance comparison and the energy score.

Climate scores compare stationary statistics of scalar observables; the
energy score is a strictly proper multivariate scoring rule for ensemble
forecasts (lower is better).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import next_fast_len, irfft, rfft
from scipy.signal import fftconvolve

__all__ = [
    "DensityEstimate",
    "AutocovCurve",
    "ScoreReport",
    "DisjointSupportError",
    "silverman_bandwidth",
    "kde_fit",
    "kl_divergence",
    "hellinger_distance",
    "empirical_autocov",
    "d_r",
    "energy_score",
    "energy_score_matrix",
    "energy_score_curve",
]

_KL_FLOOR = 1e-12


class DisjointSupportError(ValueError):
    """The two density estimates share essentially no support."""


@dataclass
class DensityEstimate:
    """Gaussian-kernel density estimate evaluated on a uniform grid."""

    grid: np.ndarray
    values: np.ndarray
    bandwidth: float

    def __post_init__(self) -> None:
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.grid.shape != self.values.shape or self.grid.ndim != 1:
            raise ValueError("grid and values must be matching 1-D arrays")
        if np.any(self.values < 0):
            raise ValueError("density values must be nonnegative")
        mass = np.trapezoid(self.values, self.grid)
        if not 0.99 <= mass <= 1.01:
            raise ValueError(f"density integrates to {mass:.4f}, not ~1")


@dataclass
class AutocovCurve:
    """Autocovariance r(tau) on a uniform lag grid starting at tau = 0."""

    lags: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        self.lags = np.asarray(self.lags, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.lags.shape != self.values.shape or self.lags.ndim != 1:
            raise ValueError("lags and values must be matching 1-D arrays")
        if self.lags[0] != 0.0:
            raise ValueError("lag grid must start at 0")
        if self.lags.size > 1:
            spacing = np.diff(self.lags)
            if not np.allclose(spacing, spacing[0]):
                raise ValueError("lag grid must be uniform")


@dataclass
class ScoreReport:
    """Named scores of one evaluation run plus free-form provenance metadata.

    ``energy_curve`` is an (n_leads, 2) array of (lead time, mean score) rows;
    climate-only reports leave it None, weather-only reports leave the scalar
    scores None.
    """

    kl: float | None = None
    hellinger: float | None = None
    d_r: float | None = None
    energy_curve: np.ndarray | None = None
    metadata: dict | None = None

    def __post_init__(self) -> None:
        if self.kl is not None and self.kl < 0:
            raise ValueError("kl must be >= 0")
        if self.hellinger is not None and not 0.0 <= self.hellinger <= 1.0:
            raise ValueError("hellinger must be in [0, 1]")
        if self.d_r is not None and self.d_r < 0:
            raise ValueError("d_r must be >= 0")
        if self.energy_curve is not None:
            self.energy_curve = np.asarray(self.energy_curve, dtype=float)
            if self.energy_curve.ndim != 2 or self.energy_curve.shape[1] != 2:
                raise ValueError("energy_curve must be (n_leads, 2)")
        if self.metadata is None:
            self.metadata = {}


def silverman_bandwidth(samples: np.ndarray) -> float:
    """0.9 * min(std, IQR/1.34) * n^(-1/5), with the IQR term skipped when it
    degenerates to zero."""
    samples = np.asarray(samples, dtype=float)
    std = samples.std(ddof=1)
    q75, q25 = np.percentile(samples, [75, 25])
    iqr = q75 - q25
    spread = min(std, iqr / 1.34) if iqr > 0 else std
    return 0.9 * spread * samples.size ** (-0.2)


def kde_fit(samples: np.ndarray, grid_size: int = 2048) -> DensityEstimate:
    """Gaussian-kernel density estimate on a uniform grid.

    The grid spans [min - 3h, max + 3h] with Silverman's bandwidth h. Samples
    are binned onto the grid and convolved with the kernel, which is accurate
    to the bin spacing and fast enough to run inside scoring loops; the result
    is renormalised to unit mass.
    """
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size < 100:
        raise ValueError(f"need at least 100 samples for a density estimate, got {samples.size}")
    if not np.isfinite(samples).all():
        raise ValueError("samples must be finite")
    if samples.std() == 0:
        raise ValueError("samples have zero variance; density is degenerate")

    h = silverman_bandwidth(samples)
    lo, hi = samples.min() - 3.0 * h, samples.max() + 3.0 * h
    grid = np.linspace(lo, hi, grid_size)
    spacing = grid[1] - grid[0]

    edges = np.linspace(lo - 0.5 * spacing, hi + 0.5 * spacing, grid_size + 1)
    counts, _ = np.histogram(samples, bins=edges)
    binned = counts / (samples.size * spacing)

    half_width = int(np.ceil(6.0 * h / spacing))
    offsets = np.arange(-half_width, half_width + 1) * spacing
    kernel = np.exp(-0.5 * (offsets / h) ** 2)
    kernel /= kernel.sum()

    values = fftconvolve(binned, kernel, mode="same")
    values = np.clip(values, 0.0, None)
    values /= np.trapezoid(values, grid)
    return DensityEstimate(grid=grid, values=values, bandwidth=h)


def _interp_onto(p: DensityEstimate, q: DensityEstimate) -> np.ndarray:
    """q's density interpolated onto p's grid (zero outside q's support)."""
    return np.interp(p.grid, q.grid, q.values, left=0.0, right=0.0)


def _overlap_mass(p: DensityEstimate, q_on_p: np.ndarray) -> float:
    return float(np.trapezoid(p.values * (q_on_p > _KL_FLOOR), p.grid))


def kl_divergence(p: DensityEstimate, q: DensityEstimate) -> float:
    """Kullback-Leibler divergence KL(p || q) by trapezoidal quadrature on
    p's grid, with q floored at 1e-12; small negative estimates (estimator
    noise) are clipped to zero. Raises DisjointSupportError when essentially
    all of p's mass falls where q vanishes.
    """
    q_on_p = _interp_onto(p, q)
    if _overlap_mass(p, q_on_p) < 1e-3:
        raise DisjointSupportError("densities share essentially no support")
    q_floored = np.maximum(q_on_p, _KL_FLOOR)
    positive = p.values > 0
    integrand = np.where(
        positive,
        p.values * (np.log(np.maximum(p.values, _KL_FLOOR)) - np.log(q_floored)),
        0.0,
    )
    return max(float(np.trapezoid(integrand, p.grid)), 0.0)


def hellinger_distance(p: DensityEstimate, q: DensityEstimate) -> float:
    """Hellinger distance sqrt(1 - integral sqrt(p*q)), clipped to [0, 1].

    Unlike the KL divergence this remains well-defined (and equal to 1) for
    densities with disjoint supports.
    """
    q_on_p = _interp_onto(p, q)
    affinity = float(np.trapezoid(np.sqrt(p.values * q_on_p), p.grid))
    return float(np.clip(np.sqrt(max(1.0 - affinity, 0.0)), 0.0, 1.0))


def empirical_autocov(
    series: np.ndarray,
    dt: float,
    max_lag: float,
    stride: int = 1,
) -> AutocovCurve:
    """Biased autocovariance estimate r(tau) = (1/N) sum (x_n - xbar)(x_{n+m} - xbar).

    The series is subsampled by ``stride`` first, so the lag resolution is
    dt * stride; lags run from 0 to ``max_lag``. Computed via FFT.
    """
    series = np.asarray(series, dtype=float).ravel()
    if stride < 1:
        raise ValueError("stride must be >= 1")
    sub = series[::stride]
    dt_eff = dt * stride
    n_lags = int(np.floor(max_lag / dt_eff)) + 1
    if sub.size <= n_lags:
        raise ValueError(
            f"series too short: {sub.size} subsampled points for {n_lags} lags"
        )
    x = sub - sub.mean()
    nfft = next_fast_len(2 * sub.size)
    spectrum = rfft(x, nfft)
    acov = irfft(spectrum * np.conj(spectrum), nfft)[:n_lags] / sub.size
    return AutocovCurve(lags=np.arange(n_lags) * dt_eff, values=acov)


def d_r(r_true: AutocovCurve, r_model: AutocovCurve) -> float:
    """Relative L2 error ||r_true - r_model|| / ||r_true|| over the lag grid."""
    if not np.array_equal(r_true.lags, r_model.lags):
        raise ValueError("autocovariance curves are on different lag grids")
    denom = float(np.linalg.norm(r_true.values))
    if denom == 0.0:
        raise ValueError("reference autocovariance has zero norm")
    return float(np.linalg.norm(r_true.values - r_model.values)) / denom


def energy_score(ensemble: np.ndarray, truth: np.ndarray) -> float:
    """Energy score of an ensemble {Z_j} against the verifying value:
    mean_j ||Z_j - truth|| - (1/2) mean_{i,j} ||Z_i - Z_j||."""
    ensemble = np.atleast_2d(np.asarray(ensemble, dtype=float))
    truth = np.asarray(truth, dtype=float)
    if ensemble.shape[-1] != truth.shape[-1]:
        raise ValueError("ensemble and truth dimensions differ")
    misfit = np.linalg.norm(ensemble - truth, axis=-1).mean()
    spread = np.linalg.norm(ensemble[:, None, :] - ensemble[None, :, :], axis=-1).mean()
    return float(misfit - 0.5 * spread)


def energy_score_matrix(ensembles: np.ndarray, truths: np.ndarray) -> np.ndarray:
    """Energy scores for every (instance, lead time) cell.

    ``ensembles`` has shape (n_instances, n_leads, n_members, d) and
    ``truths`` (n_instances, n_leads, d); returns (n_instances, n_leads).
    """
    ensembles = np.asarray(ensembles, dtype=float)
    truths = np.asarray(truths, dtype=float)
    if ensembles.ndim != 4 or truths.ndim != 3:
        raise ValueError("expected (inst, lead, member, d) ensembles and (inst, lead, d) truths")
    n_inst = ensembles.shape[0]
    if n_inst == 0:
        raise ValueError("no weather instances supplied")
    out = np.empty(ensembles.shape[:2])
    for i in range(n_inst):  # per-instance to bound the pairwise-distance temporaries
        ens = ensembles[i]
        misfit = np.linalg.norm(ens - truths[i][:, None, :], axis=-1).mean(axis=-1)
        spread = np.linalg.norm(ens[:, :, None, :] - ens[:, None, :, :], axis=-1).mean(axis=(-2, -1))
        out[i] = misfit - 0.5 * spread
    return out


def energy_score_curve(ensembles: np.ndarray, truths: np.ndarray) -> np.ndarray:
    """Mean energy score per lead time, averaged over weather instances."""
    return energy_score_matrix(ensembles, truths).mean(axis=0)
