"""Simulation laboratory: data generators, break insertion and experiment runs.

Generates the three eigenvalue-decay settings with iid or first-order
functional autoregressive errors, inserts mean breaks calibrated to a target
signal-to-noise ratio, and drives size/power/dating/coverage experiments over
parameter grids with reproducible per-replication random streams.
"""

import hashlib
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .basis import Curve, CurveSeries, FourierBasis, eigen_decompose
from .dating import (
    LimitProcessConfig,
    confidence_interval,
    estimate_break_date,
    estimate_break_function,
    sigma2_hat,
    simulate_xi,
)
from .detect import simulate_null_limit, test as ff_test
from .fpca import aligned_statistic, fit_fpca, fpca_statistic, tve_dimension
from .longrun import LongRunConfig, estimate_longrun

__all__ = [
    "DgpConfig",
    "BreakSpec",
    "ExperimentResult",
    "CSV_COLUMNS",
    "sigma_vector",
    "gen_innovations",
    "gen_errors",
    "gen_far1",
    "break_function",
    "snr_to_c",
    "far1_longrun_trace",
    "insert_break",
    "validate_grid",
    "run_experiment",
]

DEFAULT_BURNIN = 100

_VALID_KINDS = ("size", "power", "dating", "coverage")


@lru_cache(maxsize=None)
def _default_basis(n_basis: int) -> FourierBasis:
    return FourierBasis(n_basis)


def sigma_vector(setting: int, n_basis: int = 21) -> np.ndarray:
    """Innovation standard deviations for the three eigenvalue-decay settings."""
    idx = np.arange(1, n_basis + 1, dtype=float)
    if setting == 1:
        return np.where(idx <= 3, 1.0, 0.0)
    if setting == 2:
        return 3.0 ** (-idx)
    if setting == 3:
        return 1.0 / idx
    raise ValueError(f"unknown setting {setting!r}")


@dataclass(frozen=True)
class DgpConfig:
    """One data generating process of the simulation study."""

    setting: int
    dependence: str = "iid"
    innovation: str = "gaussian"
    df: int | None = None
    n: int = 100
    n_basis: int = 21
    kappa: float = 0.5
    permute: bool = True
    seed: int | None = None

    def __post_init__(self):
        if self.setting not in (1, 2, 3):
            raise ValueError("setting must be 1, 2 or 3")
        if self.dependence not in ("iid", "far1"):
            raise ValueError("dependence must be 'iid' or 'far1'")
        if self.innovation not in ("gaussian", "student"):
            raise ValueError("innovation must be 'gaussian' or 'student'")
        if self.innovation == "student" and self.df not in (2, 3, 4):
            raise ValueError("student innovations need df in {2, 3, 4}")
        if not -1.0 < self.kappa < 1.0:
            raise ValueError("kappa must lie in (-1, 1)")
        if self.n < 10:
            raise ValueError("sample size must be at least 10")
        if self.n_basis < 1:
            raise ValueError("n_basis must be positive")


@dataclass(frozen=True)
class BreakSpec:
    """Break configuration: loaded directions, target SNR, relative location."""

    m: int
    snr: float
    theta: float

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be at least 1")
        if self.snr < 0.0:
            raise ValueError("snr must be nonnegative")
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")


def _innovation_matrix(cfg: DgpConfig, rng: np.random.Generator, count: int,
                       sigma: np.ndarray) -> np.ndarray:
    if cfg.innovation == "gaussian":
        z = rng.standard_normal((count, sigma.size))
    else:
        z = rng.standard_t(cfg.df, size=(count, sigma.size))
    return z * sigma


def _apply_permutation(data: np.ndarray, permutation) -> np.ndarray:
    if permutation is None:
        return data
    out = np.empty_like(data)
    out[:, np.asarray(permutation)] = data
    return out


def gen_errors(cfg: DgpConfig, rng: np.random.Generator | None = None,
               permutation=None, burnin: int = DEFAULT_BURNIN,
               return_operator: bool = False):
    """Generate the error sequence of the configured DGP.

    For far1 dependence the random operator (Psi = kappa * Psi0 with Psi0
    scaled to unit operator norm) is drawn first, then the innovations; the
    recursion discards ``burnin`` initial curves. A permutation relabels the
    coefficient columns of the finished series. With ``return_operator`` the
    (unpermuted) Psi matrix is returned alongside the series.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    sigma = sigma_vector(cfg.setting, cfg.n_basis)
    psi = None
    if cfg.dependence == "iid":
        data = _innovation_matrix(cfg, rng, cfg.n, sigma)
    else:
        psi0 = rng.standard_normal((cfg.n_basis, cfg.n_basis)) * np.outer(sigma, sigma)
        psi0 /= np.linalg.norm(psi0, 2)
        psi = cfg.kappa * psi0
        z = _innovation_matrix(cfg, rng, cfg.n + burnin, sigma)
        data = np.empty_like(z)
        prev = np.zeros(cfg.n_basis)
        for i in range(z.shape[0]):
            prev = psi @ prev + z[i]
            data[i] = prev
        data = data[burnin:]
    series = CurveSeries(_apply_permutation(data, permutation),
                         _default_basis(cfg.n_basis))
    return (series, psi) if return_operator else series


def gen_innovations(cfg: DgpConfig, rng: np.random.Generator | None = None,
                    permutation=None) -> CurveSeries:
    """Independent innovation curves with the setting's coefficient scales."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    sigma = sigma_vector(cfg.setting, cfg.n_basis)
    data = _innovation_matrix(cfg, rng, cfg.n, sigma)
    return CurveSeries(_apply_permutation(data, permutation),
                       _default_basis(cfg.n_basis))


def gen_far1(cfg: DgpConfig, kappa: float | None = None,
             burnin: int = DEFAULT_BURNIN,
             rng: np.random.Generator | None = None,
             permutation=None) -> CurveSeries:
    """First-order functional autoregression with a random contraction operator."""
    if kappa is not None:
        cfg = replace(cfg, dependence="far1", kappa=kappa)
    elif cfg.dependence != "far1":
        cfg = replace(cfg, dependence="far1")
    return gen_errors(cfg, rng=rng, permutation=permutation, burnin=burnin)


def break_function(m: int, c: float, n_basis: int = 21, permutation=None,
                   basis: FourierBasis | None = None) -> Curve:
    """Break curve sqrt(c/m) * sum of the first m (permuted) basis functions."""
    if not 1 <= m <= n_basis:
        raise ValueError(f"m must be in [1, {n_basis}]")
    if c < 0.0:
        raise ValueError("c must be nonnegative")
    coeffs = np.zeros(n_basis)
    targets = np.arange(m) if permutation is None else np.asarray(permutation)[:m]
    coeffs[targets] = np.sqrt(c / m)
    return Curve(coeffs, basis if basis is not None else _default_basis(n_basis))


def snr_to_c(snr: float, theta: float, trace_ceps: float) -> float:
    """Break energy c giving the target signal-to-noise ratio."""
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0, 1)")
    if trace_ceps <= 0.0:
        raise ValueError("trace of the long-run kernel must be positive")
    return snr * trace_ceps / (theta * (1.0 - theta))


def far1_longrun_trace(sigma, psi) -> float:
    """Analytic long-run trace of a FAR(1): tr((I-Psi)^-1 S (I-Psi')^-1)."""
    sigma = np.asarray(sigma, dtype=float).ravel()
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (sigma.size, sigma.size):
        raise ValueError("operator shape does not match sigma")
    if np.max(np.abs(np.linalg.eigvals(psi))) >= 1.0:
        raise ValueError("operator spectral radius must be below 1")
    binv = np.linalg.inv(np.eye(sigma.size) - psi)
    return float((binv**2 @ sigma**2).sum())


def insert_break(series: CurveSeries, delta: Curve, k_star: int) -> CurveSeries:
    """Add the break curve to observations k_star+1..n; k_star=0 keeps the null."""
    if not series.basis.same_as(delta.basis):
        raise ValueError("break curve and series use different bases")
    if not 0 <= k_star <= series.n:
        raise ValueError(f"break date must be in [0, {series.n}]")
    data = series.data.copy()
    data[k_star:] += delta.coeffs
    return CurveSeries(data, series.basis)


# ---------------------------------------------------------------------------
# experiment runner


CSV_COLUMNS = ("setting", "dependence", "n", "m", "snr", "theta", "detector",
               "metric", "value", "stderr", "reps", "seed")

# fixed constant so cached fPCA/aligned critical values are stable across runs
_CV_SEED_BASE = 202_412

_DETECTOR_KINDS = {"size": ("ff", "fpca", "aligned"),
                   "power": ("ff", "fpca", "aligned"),
                   "dating": ("ff", "fpca"),
                   "coverage": ("ff",)}


def _parse_detector(name: str) -> tuple[str, float | None]:
    token = name.strip()
    low = token.lower()
    if low == "ff":
        return "ff", None
    if low == "aligned":
        return "aligned", None
    if low.startswith("fpca@"):
        tve = float(token.split("@", 1)[1])
        if not 0.0 < tve <= 1.0:
            raise ValueError(f"TVE fraction out of (0, 1] in detector {name!r}")
        return "fpca", tve
    raise ValueError(f"unknown detector {name!r}")


@lru_cache(maxsize=None)
def _bridge_critical_value(d: int, alpha: float, grid: int) -> float:
    # shared across replications: the d-dimensional limit law is data-free
    null = simulate_null_limit(np.ones(d), reps=10_000, grid=grid,
                               seed=_CV_SEED_BASE + d)
    return null.quantile(1.0 - alpha)


def _cell_digest(dgp: DgpConfig) -> int:
    # data-generating parameters only: break parameters are excluded so that
    # cells differing only in the break replay identical error sequences
    key = (dgp.setting, dgp.dependence, dgp.innovation, dgp.df, dgp.n,
           dgp.n_basis, dgp.kappa, dgp.permute)
    blob = hashlib.sha256(repr(key).encode()).digest()
    return int.from_bytes(blob[:8], "big")


@dataclass(frozen=True)
class _CellTask:
    kind: str
    dgp: DgpConfig
    break_spec: BreakSpec | None
    detectors: tuple[str, ...]
    alpha: float
    seed: int
    digest: int
    null_reps: int
    null_grid: int
    xi_reps: int
    conservative: bool
    lr_config: LongRunConfig


def _replicate(task: _CellTask, rep: int) -> tuple[dict, dict]:
    """Run one replication; returns (detector -> outcome, detector -> error)."""
    dgp = task.dgp
    ss = np.random.SeedSequence((task.seed, task.digest, rep))
    rng = np.random.default_rng(ss)
    perm = rng.permutation(dgp.n_basis) if dgp.permute else None
    series, psi = gen_errors(dgp, rng=rng, permutation=perm, return_operator=True)
    # drawn after all data randomness, so the draw position is break-invariant
    aux_seed = int(rng.integers(0, 2**63))

    k_star = 0
    spec = task.break_spec
    if spec is not None:
        sigma = sigma_vector(dgp.setting, dgp.n_basis)
        trace_c = float(sigma @ sigma) if psi is None else far1_longrun_trace(sigma, psi)
        c = snr_to_c(spec.snr, spec.theta, trace_c)
        delta = break_function(spec.m, c, dgp.n_basis, permutation=perm,
                               basis=series.basis)
        k_star = int(spec.theta * dgp.n)
        series = insert_break(series, delta, k_star)

    outcomes, errors = {}, {}
    for name in task.detectors:
        kind_name, tve = _parse_detector(name)
        try:
            outcomes[name] = _eval_detector(task, kind_name, tve, series,
                                            aux_seed, k_star)
        except Exception as exc:  # noqa: BLE001 - failures are counted, not fatal
            errors[name] = f"{type(exc).__name__}: {exc}"
    return outcomes, errors


def _eval_detector(task: _CellTask, kind_name: str, tve: float | None,
                   series: CurveSeries, aux_seed: int, k_star: int):
    if task.kind in ("size", "power"):
        if kind_name == "ff":
            report = ff_test(series, task.alpha, task.lr_config,
                             reps=task.null_reps, grid=task.null_grid,
                             seed=aux_seed)
            return report.p_value <= task.alpha
        if kind_name == "fpca":
            model = fit_fpca(series, tve=tve)
            result = fpca_statistic(series, model.d)
            return result.stat > _bridge_critical_value(model.d, task.alpha,
                                                        task.null_grid)
        stat = aligned_statistic(series, config=task.lr_config)
        return stat > _bridge_critical_value(1, task.alpha, task.null_grid)

    if task.kind == "dating":
        if kind_name == "ff":
            return estimate_break_date(series) - k_star
        model = fit_fpca(series, tve=tve)
        return fpca_statistic(series, model.d).k_hat - k_star

    # coverage: fully functional confidence interval around the break estimate
    k_hat = estimate_break_date(series)
    delta_hat = estimate_break_function(series, k_hat)
    kernel, _ = estimate_longrun(series, task.lr_config, split=k_hat)
    eig = eigen_decompose(kernel)
    lambda1 = float(max(eig.values[0], 0.0))
    sigma2 = max(sigma2_hat(kernel, delta_hat), 0.0)
    if sigma2 > lambda1 + 1e-10:
        raise AssertionError("Rayleigh bound violated: sigma^2 > lambda_1")
    xi = simulate_xi(k_hat / series.n, lambda1 if task.conservative else sigma2,
                     LimitProcessConfig(reps=task.xi_reps, seed=aux_seed))
    lo, hi = confidence_interval(k_hat, delta_hat, xi, task.alpha)
    return (bool(lo <= k_star <= hi), hi - lo)


def _run_chunk(task: _CellTask, start: int, stop: int):
    results = []
    for rep in range(start, stop):
        results.append(_replicate(task, rep))
    return results


def validate_grid(kind, dgps, specs, detectors) -> None:
    """Check every grid value before any work starts; lists all offenders."""
    problems = []
    if kind not in _VALID_KINDS:
        raise ValueError(f"kind must be one of {_VALID_KINDS}")
    if kind == "size" and specs:
        problems.append("size experiments take no break grid")
    if kind != "size" and not specs:
        problems.append(f"{kind} experiments need at least one break spec")
    allowed = _DETECTOR_KINDS[kind]
    for name in detectors:
        try:
            kind_name, _ = _parse_detector(name)
        except ValueError as exc:
            problems.append(str(exc))
            continue
        if kind_name not in allowed:
            problems.append(f"detector {name!r} does not support {kind} runs")
    for cfg in dgps:
        for spec in specs:
            if spec.m > cfg.n_basis:
                problems.append(f"m={spec.m} exceeds the basis size {cfg.n_basis}")
    if problems:
        raise ValueError("invalid experiment grid: "
                         + "; ".join(sorted(set(problems))))


def _resolve_workers(workers: int | None) -> int:
    env = os.environ.get("FUNCBREAK_THREADS")
    if workers is None:
        workers = os.cpu_count() or 1
    if env:
        workers = min(workers, max(1, int(env)))
    return max(1, int(workers))


@dataclass
class ExperimentResult:
    """Flat result rows, one per (cell, detector, metric)."""

    rows: list

    def select(self, **filters) -> list:
        out = []
        for row in self.rows:
            if all(row.get(key) == val for key, val in filters.items()):
                out.append(row)
        return out

    def value(self, **filters) -> float:
        rows = self.select(**filters)
        if len(rows) != 1:
            raise KeyError(f"filters {filters} matched {len(rows)} rows")
        return rows[0]["value"]

    def to_csv(self, target) -> None:
        import csv

        def _write(fh):
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for row in self.rows:
                record = []
                for col in CSV_COLUMNS:
                    val = row[col]
                    if isinstance(val, float) and np.isnan(val):
                        val = ""
                    record.append(val)
                writer.writerow(record)

        if hasattr(target, "write"):
            _write(target)
        else:
            with open(target, "w", encoding="utf-8", newline="") as fh:
                _write(fh)


def _cell_rows(task: _CellTask, per_rep: list) -> list:
    spec = task.break_spec
    base = {
        "setting": task.dgp.setting,
        "dependence": task.dgp.dependence,
        "n": task.dgp.n,
        "m": spec.m if spec else 0,
        "snr": spec.snr if spec else 0.0,
        "theta": spec.theta if spec else 0.0,
        "seed": task.seed,
    }
    rows = []
    for name in task.detectors:
        values = [out[name] for out, _ in per_rep if name in out]
        fails = sum(1 for _, errs in per_rep if name in errs)
        done = len(values)

        def _row(metric, value, stderr=float("nan"), reps=done):
            rows.append({**base, "detector": name, "metric": metric,
                         "value": value, "stderr": stderr, "reps": reps})

        if task.kind in ("size", "power") and done:
            rate = float(np.mean(values))
            _row("rejection_rate", rate, float(np.sqrt(rate * (1 - rate) / done)))
        elif task.kind == "dating" and done:
            err = np.asarray(values, dtype=float)
            _row("bias", float(err.mean()),
                 float(err.std(ddof=1) / np.sqrt(done)) if done > 1 else float("nan"))
            _row("median_abs_error", float(np.median(np.abs(err))))
            _row("q25", float(np.quantile(err, 0.25)))
            _row("q75", float(np.quantile(err, 0.75)))
        elif task.kind == "coverage" and done:
            covered = np.asarray([v[0] for v in values], dtype=float)
            widths = np.asarray([v[1] for v in values], dtype=float)
            rate = float(covered.mean())
            _row("coverage", rate, float(np.sqrt(rate * (1 - rate) / done)))
            _row("median_width", float(np.median(widths)))
        if fails:
            _row("failures", fails, reps=len(per_rep))
    return rows


def run_experiment(kind: str, dgp, break_specs=None, detectors=("FF",),
                   reps: int = 1000, alpha: float = 0.05, seed: int = 0,
                   workers: int | None = None, null_reps: int = 1000,
                   null_grid: int = 1000, xi_reps: int = 2000,
                   conservative: bool = False,
                   lr_config: LongRunConfig | None = None) -> ExperimentResult:
    """Run a simulation experiment over DGP x break grids.

    ``kind`` is one of size, power, dating, coverage. ``dgp`` may be a single
    DgpConfig or a sequence; ``break_specs`` a sequence of BreakSpec (must be
    empty for size runs, where the null is sampled directly). Replications use
    streams keyed by (seed, DGP digest, replication), so any cell is
    reproducible in isolation and cells sharing a DGP replay identical errors.
    Failed replications are counted per detector in ``failures`` rows.
    """
    if reps < 1:
        raise ValueError("need at least one replication")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    dgps = [dgp] if isinstance(dgp, DgpConfig) else list(dgp)
    specs = list(break_specs) if break_specs else []
    validate_grid(kind, dgps, specs, detectors)

    tasks = []
    for cfg in dgps:
        digest = _cell_digest(cfg)
        for spec in (specs or [None]):
            tasks.append(_CellTask(
                kind=kind, dgp=cfg, break_spec=spec,
                detectors=tuple(detectors), alpha=alpha, seed=seed,
                digest=digest, null_reps=null_reps, null_grid=null_grid,
                xi_reps=xi_reps, conservative=conservative,
                lr_config=lr_config or LongRunConfig(),
            ))

    workers = _resolve_workers(workers)
    rows = []
    if workers == 1:
        for task in tasks:
            rows.extend(_cell_rows(task, _run_chunk(task, 0, reps)))
    else:
        chunk = max(1, -(-reps // (workers * 4)))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {}
            for t_idx, task in enumerate(tasks):
                for start in range(0, reps, chunk):
                    fut = pool.submit(_run_chunk, task, start, min(start + chunk, reps))
                    futures[fut] = (t_idx, start)
            pieces = {}
            for fut, (t_idx, start) in futures.items():
                pieces.setdefault(t_idx, []).append((start, fut.result()))
            for t_idx, task in enumerate(tasks):
                ordered = []
                for _, part in sorted(pieces[t_idx]):
                    ordered.extend(part)
                rows.extend(_cell_rows(task, ordered))
    return ExperimentResult(rows)
