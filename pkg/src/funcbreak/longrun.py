"""Long-run covariance estimation for the error sequence of a mean-break model.

Implements the break-adjusted lag-window estimator: sample autocovariances are
computed from observations demeaned piecewise around a supplied split point,
then tapered by a symmetric weight function with bounded support and summed
over lags up to the bandwidth.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .basis import CurveSeries, KernelMatrix

__all__ = [
    "WeightFunction",
    "WEIGHTS",
    "LongRunConfig",
    "weight",
    "autocov_kernel",
    "longrun_kernel",
    "bandwidth",
    "trace",
    "estimate_longrun",
]


def _bartlett(x):
    ax = np.abs(x)
    return np.where(ax <= 1.0, 1.0 - ax, 0.0)


def _parzen(x):
    ax = np.abs(x)
    inner = 1.0 - 6.0 * ax**2 + 6.0 * ax**3
    outer = 2.0 * (1.0 - ax) ** 3
    return np.where(ax <= 0.5, inner, np.where(ax <= 1.0, outer, 0.0))


def _flattop(x):
    ax = np.abs(x)
    return np.where(ax <= 0.5, 1.0, np.where(ax <= 1.0, 2.0 * (1.0 - ax), 0.0))


@dataclass(frozen=True)
class WeightFunction:
    """A symmetric lag-window taper with bounded support.

    ``order`` is the taper order tau and ``q_constant`` the limit of
    x^(-tau) (1 - w(x)) at zero; the flat-top taper is flat at the origin, so
    that limit is degenerate (stored as NaN) and it carries a nominal order.
    ``w_sq_integral`` is the integral of w^2 over the real line.
    """

    kind: str
    order: float
    q_constant: float
    support: float
    w_sq_integral: float
    fn: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x):
        return self.fn(x)


WEIGHTS = {
    "bartlett": WeightFunction("bartlett", 1.0, 1.0, 1.0, 2.0 / 3.0, _bartlett),
    "parzen": WeightFunction("parzen", 2.0, 6.0, 1.0, 151.0 / 280.0, _parzen),
    "flattop": WeightFunction("flattop", 2.0, float("nan"), 1.0, 4.0 / 3.0, _flattop),
}

BANDWIDTH_EXPONENTS = {"n13": 1.0 / 3.0, "n14": 1.0 / 4.0, "n15": 1.0 / 5.0}


def _resolve_weight(w) -> WeightFunction:
    if isinstance(w, WeightFunction):
        return w
    try:
        return WEIGHTS[str(w).lower()]
    except KeyError:
        raise ValueError(f"unknown weight function {w!r}") from None


def weight(kind, x):
    """Evaluate the named weight function at x (scalar or array)."""
    wf = _resolve_weight(kind)
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("weight argument must be finite")
    out = wf(x)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LongRunConfig:
    """Estimator configuration: taper choice and bandwidth rule.

    ``bandwidth`` is one of the exponent rules n13/n14/n15, or "adaptive";
    an explicit ``h`` overrides the rule.
    """

    weight: str = "bartlett"
    bandwidth: str = "n14"
    h: float | None = None


def _split_demean(data: np.ndarray, split: int) -> np.ndarray:
    n = data.shape[0]
    if not 1 <= split <= n - 1:
        raise ValueError(f"split must be in [1, {n - 1}], got {split}")
    out = data.copy()
    out[:split] -= data[:split].mean(axis=0)
    out[split:] -= data[split:].mean(axis=0)
    return out


def _lagged_cov(centered: np.ndarray, lag: int) -> np.ndarray:
    n = centered.shape[0]
    if lag >= 0:
        return centered[: n - lag].T @ centered[lag:] / n
    return centered[-lag:].T @ centered[: n + lag] / n


def autocov_kernel(series: CurveSeries, lag: int, split: int) -> KernelMatrix:
    """Sample autocovariance at the given lag, demeaned piecewise at ``split``.

    Rows 1..split are centered at the pre-split mean, the rest at the
    post-split mean; the sum is normalized by n regardless of lag.
    """
    n = series.n
    if abs(lag) >= n:
        raise ValueError(f"|lag| must be below the sample size {n}")
    centered = _split_demean(series.data, split)
    return KernelMatrix(_lagged_cov(centered, lag))


def longrun_kernel(series: CurveSeries, weight="bartlett", h: float = 1.0,
                   split: int | None = None) -> KernelMatrix:
    """Lag-window estimate of the long-run covariance kernel.

    Sums w(lag/h) times the lagged autocovariances over all lags inside the
    taper support, using piecewise demeaning at ``split`` (the estimated break
    date when testing or dating). The result is symmetrized.
    """
    wf = _resolve_weight(weight)
    if h < 1.0:
        raise ValueError("bandwidth must be at least 1")
    if split is None:
        raise ValueError("a demeaning split point is required")
    n = series.n
    centered = _split_demean(series.data, split)
    acc = _lagged_cov(centered, 0)
    max_lag = min(n - 1, int(np.floor(wf.support * h)))
    for lag in range(1, max_lag + 1):
        w_val = float(wf(lag / h))
        if w_val == 0.0:
            continue
        g = _lagged_cov(centered, lag)
        acc += w_val * (g + g.T)
    return KernelMatrix((acc + acc.T) / 2.0)


def trace(k: KernelMatrix) -> float:
    """Trace of the kernel, i.e. the integral of C(t, t) over [0, 1]."""
    return float(np.trace(k.entries))


def _adaptive_constant(series: CurveSeries, wf: WeightFunction, split: int) -> float:
    # Reconstruction of the plug-in rule for the optimal bandwidth constant:
    # flat-top pilot estimates at h0 = n^(1/5) feed the asymptotic MSE formula.
    n = series.n
    h0 = max(1.0, n ** 0.2)
    pilot = WEIGHTS["flattop"]
    centered = _split_demean(series.data, split)
    c_pilot = _lagged_cov(centered, 0)
    c_tau = np.zeros_like(c_pilot)
    max_lag = min(n - 1, int(np.floor(pilot.support * h0)))
    for lag in range(1, max_lag + 1):
        w_val = float(pilot(lag / h0))
        if w_val == 0.0:
            continue
        g = _lagged_cov(centered, lag)
        c_pilot += w_val * (g + g.T)
        c_tau += (lag ** wf.order) * w_val * (g + g.T)
    tau = wf.order
    num = 2.0 * tau * (wf.q_constant ** 2) * float(np.sum(c_tau**2))
    den = (float(np.sum(c_pilot**2)) + float(np.trace(c_pilot)) ** 2) * wf.w_sq_integral
    if den <= 0.0 or num < 0.0:
        raise ValueError("degenerate pilot estimates for the adaptive bandwidth")
    power = 1.0 / (1.0 + 2.0 * tau)
    return (num ** power) / (den ** power)


def bandwidth(rule: str, n: int, series: CurveSeries | None = None,
              weight="bartlett", split: int | None = None) -> float:
    """Bandwidth h for the lag-window estimator.

    Exponent rules return n to the named power. The adaptive rule returns
    M_hat * n^(1/(1+2 tau)) with M_hat estimated from pilot fits of the series;
    it needs the series, a Bartlett or Parzen target weight, and the demeaning
    split. Results are floored at 1.
    """
    if n < 4:
        raise ValueError("bandwidth selection needs n >= 4")
    if rule in BANDWIDTH_EXPONENTS:
        return max(1.0, float(n) ** BANDWIDTH_EXPONENTS[rule])
    if rule == "adaptive":
        if series is None:
            raise ValueError("adaptive bandwidth needs the series data")
        if split is None:
            raise ValueError("adaptive bandwidth needs the demeaning split")
        wf = _resolve_weight(weight)
        if not np.isfinite(wf.q_constant):
            raise ValueError(
                "adaptive bandwidth is defined for bartlett/parzen weights only"
            )
        m_hat = _adaptive_constant(series, wf, split)
        return max(1.0, m_hat * float(n) ** (1.0 / (1.0 + 2.0 * wf.order)))
    raise ValueError(f"unknown bandwidth rule {rule!r}")


def estimate_longrun(series: CurveSeries, config: LongRunConfig | None = None,
                     split: int | None = None) -> tuple[KernelMatrix, float]:
    """Estimate the long-run kernel under a config; returns (kernel, h used)."""
    cfg = config or LongRunConfig()
    if cfg.h is not None:
        h = float(cfg.h)
        if h < 1.0:
            raise ValueError("explicit bandwidth must be at least 1")
    else:
        h = bandwidth(cfg.bandwidth, series.n, series=series,
                      weight=cfg.weight, split=split)
    return longrun_kernel(series, weight=cfg.weight, h=h, split=split), h
