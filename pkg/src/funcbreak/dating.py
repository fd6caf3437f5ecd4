"""Break-date estimation, nuisance parameters and confidence intervals.

The break date estimate is the smallest maximizer of the CUSUM norm. Interval
construction simulates the argmax law of a two-sided Brownian motion with
triangular drift, whose slopes are the estimated break fraction and whose
diffusion scale is the long-run variance in the estimated break direction.
"""

from dataclasses import dataclass, field

import numpy as np

from .basis import Curve, CurveSeries, KernelMatrix, eigen_decompose
from .detect import _bridge_sq_path, _replication_rngs, cusum_norm_sq
from .longrun import LongRunConfig, estimate_longrun

__all__ = [
    "LimitProcessConfig",
    "XiSample",
    "DatingReport",
    "estimate_break_date",
    "estimate_break_function",
    "sigma2_hat",
    "simulate_xi",
    "confidence_interval",
    "no_break_argmax_sample",
    "simulate_fixed_break_limit",
    "date_break",
]


def estimate_break_date(series: CurveSeries) -> int:
    """Smallest k in 1..n maximizing the CUSUM norm (min tie-break)."""
    norms = cusum_norm_sq(series)
    return int(np.argmax(norms[1:])) + 1


def estimate_break_function(series: CurveSeries, k_hat: int) -> Curve:
    """Mean of the curves after ``k_hat`` minus the mean of those up to it."""
    n = series.n
    if not 1 <= k_hat <= n - 1:
        raise ValueError(f"break date must be in [1, {n - 1}], got {k_hat}")
    x = series.data
    return Curve(x[k_hat:].mean(axis=0) - x[:k_hat].mean(axis=0), series.basis)


def sigma2_hat(c_hat: KernelMatrix, delta_hat: Curve) -> float:
    """Long-run variance in the break direction: the normalized quadratic form."""
    d = delta_hat.coeffs
    norm_sq = float(d @ d)
    if norm_sq == 0.0:
        raise ValueError("break function is zero; sigma^2 is undefined")
    sym = (c_hat.entries + c_hat.entries.T) / 2.0
    return float(d @ sym @ d) / norm_sq


@dataclass(frozen=True)
class LimitProcessConfig:
    """Grid and replication settings for the drifted-argmax simulation.

    When ``half_width``/``step`` are omitted they default to
    L = 50 sigma^2 / min(theta, 1-theta)^2 and L/5000, which keeps the argmax
    inside the grid with overwhelming probability.
    """

    half_width: float | None = None
    step: float | None = None
    reps: int = 10_000
    seed: int | None = None

    def resolve(self, theta: float, sigma2: float) -> tuple[float, float]:
        edge = min(theta, 1.0 - theta)
        half = self.half_width if self.half_width is not None else 50.0 * sigma2 / edge**2
        step = self.step if self.step is not None else half / 5000.0
        if not half > 0.0:
            raise ValueError("domain half-width must be positive")
        if not 0.0 < step <= half / 100.0:
            raise ValueError("grid step must be positive and at most L/100")
        return float(half), float(step)


@dataclass(frozen=True)
class XiSample:
    """Sorted draws of the argmax of the drifted two-sided Brownian motion."""

    draws: np.ndarray
    degenerate: bool = False

    def quantile(self, q) -> float:
        return float(np.quantile(self.draws, q))


def simulate_xi(theta: float, sigma2: float,
                cfg: LimitProcessConfig | None = None) -> XiSample:
    """Simulate the location of the maximum of the drifted limit process.

    The process has drift slope (1-theta) left of zero and -theta right of it,
    plus sigma times a two-sided Brownian motion built from Gaussian increments
    of variance ``step`` on the grid. The reported argmax takes the smallest
    maximizer. sigma^2 = 0 yields a degenerate all-zero sample.
    """
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must be in (0, 1)")
    if sigma2 < 0.0:
        raise ValueError("sigma^2 must be nonnegative")
    cfg = cfg or LimitProcessConfig()
    if sigma2 == 0.0:
        return XiSample(np.zeros(cfg.reps), degenerate=True)
    half, step = cfg.resolve(theta, sigma2)
    m = int(round(half / step))
    sigma_step = np.sqrt(sigma2 * step)
    offsets = step * np.arange(1, m + 1)
    # full grid ordered by x: -m*step .. 0 .. m*step
    x_grid = np.concatenate([-offsets[::-1], [0.0], offsets])
    drift = np.concatenate([
        -(1.0 - theta) * offsets[::-1],  # (1-theta)*x for x<0
        [0.0],
        -theta * offsets,
    ])
    draws = np.empty(cfg.reps)
    for i, rng in enumerate(_replication_rngs(cfg.seed, cfg.reps)):
        z = rng.standard_normal(2 * m)
        right = np.cumsum(z[:m]) * sigma_step
        left = np.cumsum(z[m:]) * sigma_step
        path = drift.copy()
        path[m + 1:] += right
        path[:m] += left[::-1]
        draws[i] = x_grid[int(np.argmax(path))]
    return XiSample(np.sort(draws))


def confidence_interval(k_hat: int, delta_hat: Curve, xi_sample: XiSample,
                        alpha: float) -> tuple[float, float]:
    """Interval (k - Xi_{1-a/2}/||d||^2, k - Xi_{a/2}/||d||^2), unclamped."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    norm_sq = float(delta_hat.coeffs @ delta_hat.coeffs)
    if norm_sq == 0.0:
        raise ValueError("break function is zero; no interval exists")
    lo = k_hat - xi_sample.quantile(1.0 - alpha / 2.0) / norm_sq
    hi = k_hat - xi_sample.quantile(alpha / 2.0) / norm_sq
    return float(lo), float(hi)


def no_break_argmax_sample(eigenvalues, reps: int = 1000, grid: int = 1000,
                           seed=None) -> np.ndarray:
    """Draws of the argmax position of the weighted bridge norm on [0, 1].

    This is the no-break limit of the relative break date estimate; positions
    use the smallest maximizer on the grid.
    """
    lam = np.clip(np.asarray(eigenvalues, dtype=float).ravel(), 0.0, None)
    if not np.all(np.isfinite(lam)):
        raise ValueError("eigenvalues must be finite")
    if not lam.any():
        raise ValueError("all eigenvalues are zero; argmax law is undefined")
    lam = lam[lam > 0]
    lam_over_grid = lam / grid
    grid_frac = np.arange(1, grid + 1) / grid
    draws = np.empty(reps)
    for i, rng in enumerate(_replication_rngs(seed, reps)):
        path = _bridge_sq_path(rng, lam_over_grid, grid_frac)
        draws[i] = grid_frac[int(np.argmax(path))]
    return np.sort(draws)


def simulate_fixed_break_limit(delta: Curve, theta: float, error_generator,
                               window: int, reps: int = 1000,
                               seed=None) -> np.ndarray:
    """Simulate the fixed-break limit law of the dating error.

    Draws the smallest maximizer over k in [-window, window] of the two-sided
    walk with drift -theta ||delta||^2 k for k >= 0 and (1-theta) ||delta||^2 k
    for k < 0, plus the inner products of delta with partial sums of generated
    errors. ``error_generator(rng, count)`` must return a (count, D) array of
    error-curve coefficients; the first ``window`` rows serve as the
    negative-index errors.
    """
    if window < 1:
        raise ValueError("window must be at least 1")
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must be in (0, 1)")
    d = delta.coeffs
    norm_sq = float(d @ d)
    if norm_sq == 0.0:
        raise ValueError("break function is zero")
    k_neg = np.arange(-window, 0)
    k_pos = np.arange(1, window + 1)
    drift = np.concatenate([(1.0 - theta) * norm_sq * k_neg, [0.0],
                            -theta * norm_sq * k_pos])
    draws = np.empty(reps, dtype=int)
    for i, rng in enumerate(_replication_rngs(seed, reps)):
        errs = np.asarray(error_generator(rng, 2 * window), dtype=float)
        if errs.shape != (2 * window, d.size):
            raise ValueError("error generator returned the wrong shape")
        inner = errs @ d
        # sums eps_k + .. + eps_{-1} for k = -window..-1, ordered by k
        neg = np.cumsum(inner[:window][::-1])[::-1]
        pos = np.cumsum(inner[window:])
        path = drift + np.concatenate([neg, [0.0], pos])
        draws[i] = int(np.argmax(path)) - window
    return np.sort(draws)


@dataclass(frozen=True)
class DatingReport:
    """Break date estimate with nuisance parameters and confidence interval."""

    k_hat: int
    theta_hat: float
    delta_hat: Curve
    sigma2_hat: float
    lambda1_hat: float
    xi_quantiles: dict
    ci: tuple[float, float]
    ci_raw: tuple[float, float]
    conservative: bool = False
    degenerate: bool = False
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.sigma2_hat > self.lambda1_hat + 1e-10:
            raise AssertionError(
                "sigma^2 exceeded the top long-run eigenvalue; the Rayleigh "
                "bound was violated"
            )
        lo, hi = self.ci
        if not lo <= self.k_hat <= hi:
            raise AssertionError("interval does not contain the break estimate")


_XI_QUANTILE_LEVELS = (0.005, 0.025, 0.05, 0.25, 0.5, 0.75, 0.95, 0.975, 0.995)


def date_break(series: CurveSeries, alpha: float = 0.05,
               config: LongRunConfig | None = None,
               xi_config: LimitProcessConfig | None = None,
               conservative: bool = False) -> DatingReport:
    """Full dating pipeline: date, break function, sigma^2, Xi quantiles, CI.

    With ``conservative`` the Xi simulation runs at the top long-run eigenvalue
    instead of sigma^2, which can only widen the interval.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    n = series.n
    k_hat = estimate_break_date(series)
    delta = estimate_break_function(series, k_hat)
    kernel, h_used = estimate_longrun(series, config, split=k_hat)
    eig = eigen_decompose(kernel)
    lambda1 = float(max(eig.values[0], 0.0))
    if delta.norm() == 0.0:
        raise ValueError("estimated break function is zero; cannot date a break")
    # a variance: non-PSD tapers can push the raw quadratic form slightly negative
    sigma2 = max(sigma2_hat(kernel, delta), 0.0)
    theta_hat = k_hat / n
    xi_cfg = xi_config or LimitProcessConfig()
    xi = simulate_xi(theta_hat, lambda1 if conservative else sigma2, xi_cfg)
    ci_raw = confidence_interval(k_hat, delta, xi, alpha)
    ci = (min(max(ci_raw[0], 1.0), float(n)), min(max(ci_raw[1], 1.0), float(n)))
    cfg = config or LongRunConfig()
    return DatingReport(
        k_hat=k_hat,
        theta_hat=theta_hat,
        delta_hat=delta,
        sigma2_hat=sigma2,
        lambda1_hat=lambda1,
        xi_quantiles={q: xi.quantile(q) for q in _XI_QUANTILE_LEVELS},
        ci=ci,
        ci_raw=ci_raw,
        conservative=conservative,
        degenerate=xi.degenerate,
        config={
            "alpha": alpha,
            "weight": cfg.weight,
            "bandwidth": cfg.bandwidth if cfg.h is None else "fixed",
            "h": h_used,
            "xi_reps": xi_cfg.reps,
            "xi_seed": xi_cfg.seed,
            "conservative": conservative,
        },
    )
