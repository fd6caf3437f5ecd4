"""Fully functional structural-break detection.

The detector is the maximum of the squared L2 norm of the tied-down functional
CUSUM process. Its null distribution, the supremum of an eigenvalue-weighted
sum of squared independent Brownian bridges, is approximated by Monte Carlo
simulation from the estimated long-run covariance spectrum.
"""

from dataclasses import dataclass, field

import numpy as np

from .basis import CurveSeries, eigen_decompose
from .longrun import LongRunConfig, estimate_longrun

__all__ = [
    "NullLimitSample",
    "DetectionReport",
    "cusum_paths",
    "cusum_norm_sq",
    "detector_stat",
    "simulate_null_limit",
    "test",
]


def cusum_paths(series: CurveSeries) -> np.ndarray:
    """Tied-down scaled CUSUM rows, shape (n+1, D); rows 0 and n are zero."""
    x = series.data
    n = x.shape[0]
    sums = np.vstack([np.zeros((1, x.shape[1])), np.cumsum(x, axis=0)])
    total = sums[-1]
    frac = np.arange(n + 1)[:, None] / n
    return (sums - frac * total) / np.sqrt(n)


def cusum_norm_sq(series: CurveSeries) -> np.ndarray:
    """Squared CUSUM norms for k = 0..n, from one prefix-sum pass."""
    paths = cusum_paths(series)
    return np.einsum("ij,ij->i", paths, paths)


def detector_stat(series: CurveSeries) -> float:
    """Max-type detector: the largest squared CUSUM norm over k = 1..n."""
    return float(cusum_norm_sq(series)[1:].max())


@dataclass(frozen=True)
class NullLimitSample:
    """Sorted Monte Carlo draws from the null limit distribution."""

    draws: np.ndarray
    degenerate: bool = False

    def quantile(self, q) -> float:
        return float(np.quantile(self.draws, q))


def _bridge_sq_path(rng: np.random.Generator, lam_over_grid: np.ndarray,
                    grid_frac: np.ndarray) -> np.ndarray:
    """One realization of sum_l lam_l B_l^2 on the interior grid points."""
    z = rng.standard_normal((lam_over_grid.size, grid_frac.size))
    np.cumsum(z, axis=1, out=z)
    endpoint = z[:, -1].copy()
    z -= endpoint[:, None] * grid_frac
    np.square(z, out=z)
    return lam_over_grid @ z


def _replication_rngs(seed, reps: int):
    for child in np.random.SeedSequence(seed).spawn(reps):
        yield np.random.default_rng(child)


def simulate_null_limit(eigenvalues, reps: int = 1000, grid: int = 1000,
                        seed=None) -> NullLimitSample:
    """Simulate sup over [0,1] of the eigenvalue-weighted sum of squared bridges.

    Each Brownian bridge is built on the grid j/grid, j = 0..grid, as
    B(j/G) = W(j/G) - (j/G) W(1) from Gaussian increments of variance 1/G, and
    the supremum is approximated by the grid maximum. Negative eigenvalues are
    clipped at zero; an all-zero spectrum yields a degenerate all-zero sample.
    One RNG stream is derived per replication index, so results are
    deterministic for a given (seed, reps, grid).
    """
    lam = np.clip(np.asarray(eigenvalues, dtype=float).ravel(), 0.0, None)
    if not np.all(np.isfinite(lam)):
        raise ValueError("eigenvalues must be finite")
    if reps < 1:
        raise ValueError("need at least one replication")
    if grid < 100:
        raise ValueError("bridge grid must have at least 100 steps")
    if not lam.any():
        return NullLimitSample(np.zeros(reps), degenerate=True)
    lam = lam[lam > 0]
    # increments of variance 1/G are folded into the weights: lam * (Z-cumsum)^2 / G
    lam_over_grid = lam / grid
    grid_frac = np.arange(1, grid + 1) / grid
    draws = np.empty(reps)
    for i, rng in enumerate(_replication_rngs(seed, reps)):
        draws[i] = _bridge_sq_path(rng, lam_over_grid, grid_frac).max()
    return NullLimitSample(np.sort(draws))


@dataclass(frozen=True)
class DetectionReport:
    """Outcome of the fully functional test plus its configuration echo."""

    stat: float
    critical_values: dict
    p_value: float
    eigenvalues_used: np.ndarray
    config: dict = field(default_factory=dict)
    degenerate: bool = False

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError("p-value outside [0, 1]")
        alphas = sorted(self.critical_values)
        quants = [self.critical_values[a] for a in alphas]
        if any(q1 < q2 for q1, q2 in zip(quants, quants[1:])):
            raise ValueError("critical values must decrease in alpha")


def test(series: CurveSeries, alpha: float = 0.05,
         config: LongRunConfig | None = None, *, reps: int = 1000,
         grid: int = 1000, seed=None) -> DetectionReport:
    """Run the fully functional break test at level ``alpha``.

    Estimates the long-run kernel with piecewise demeaning at the CUSUM argmax,
    simulates the null limit from all D estimated eigenvalues (negatives
    clipped), and reports the statistic, critical values and the finite-sample
    Monte Carlo p-value (1 + #{draws >= stat}) / (reps + 1).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    cfg = config or LongRunConfig()
    norms = cusum_norm_sq(series)
    stat = float(norms[1:].max())
    split = int(np.argmax(norms[1:])) + 1
    kernel, h_used = estimate_longrun(series, cfg, split=split)
    eig = eigen_decompose(kernel)
    lam = np.clip(eig.values, 0.0, None)
    null = simulate_null_limit(lam, reps=reps, grid=grid, seed=seed)
    p_value = (1 + int(np.count_nonzero(null.draws >= stat))) / (reps + 1)
    levels = sorted({round(a, 12) for a in (alpha, 0.10, 0.05, 0.01)})
    critical_values = {a: null.quantile(1.0 - a) for a in levels}
    return DetectionReport(
        stat=stat,
        critical_values=critical_values,
        p_value=p_value,
        eigenvalues_used=lam,
        config={
            "alpha": alpha,
            "weight": cfg.weight,
            "bandwidth": cfg.bandwidth if cfg.h is None else "fixed",
            "h": h_used,
            "reps": reps,
            "grid": grid,
            "seed": seed,
            "split": split,
        },
        degenerate=null.degenerate,
    )
