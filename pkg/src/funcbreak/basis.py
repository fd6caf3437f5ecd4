"""Fourier-basis representation of functional observations.

Curves on [0, 1] are stored as coefficient vectors with respect to an
orthonormal Fourier basis (constant function first, then sin/cos pairs at
increasing frequency). Orthonormality makes every L2 inner product, norm and
kernel operator a finite-dimensional linear-algebra computation on the
coefficients, which is also how daily observations smoothed over 21 basis
functions are handled in practice.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DegenerateFitError",
    "FourierBasis",
    "Curve",
    "CurveSeries",
    "KernelMatrix",
    "EigenSystem",
    "project_to_basis",
    "fit_curve",
    "inner_product",
    "evaluate",
    "eigen_decompose",
]

DEFAULT_BASIS_SIZE = 21
DEFAULT_GRID_SIZE = 365


class DegenerateFitError(ValueError):
    """A curve has fewer usable sample points than basis functions."""


def _midpoint_grid(num: int) -> np.ndarray:
    return (np.arange(num) + 0.5) / num


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FourierBasis:
    """Orthonormal Fourier basis v_1, ..., v_D on [0, 1].

    v_1 is the constant function 1; for j >= 1 the pair
    v_{2j}(t) = sqrt(2) sin(2 pi j t), v_{2j+1}(t) = sqrt(2) cos(2 pi j t)
    follows. ``grid`` is the default evaluation/projection grid, 365 cell
    midpoints unless specified.
    """

    n_basis: int = DEFAULT_BASIS_SIZE
    grid: np.ndarray | None = None

    def __post_init__(self):
        if self.n_basis < 1:
            raise ValueError("basis needs at least one function")
        grid = self.grid if self.grid is not None else _midpoint_grid(DEFAULT_GRID_SIZE)
        grid = np.asarray(grid, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("grid must be a 1-d array with at least two points")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if grid[0] < 0.0 or grid[-1] > 1.0:
            raise ValueError("grid must lie within [0, 1]")
        object.__setattr__(self, "grid", _readonly(grid))

    def design_matrix(self, t) -> np.ndarray:
        """Evaluate all basis functions at points ``t``; shape (len(t), D)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((t.size, self.n_basis))
        out[:, 0] = 1.0
        for col in range(1, self.n_basis):
            freq = (col + 1) // 2
            arg = 2.0 * np.pi * freq * t
            out[:, col] = np.sqrt(2.0) * (np.sin(arg) if col % 2 == 1 else np.cos(arg))
        return out

    def same_as(self, other: "FourierBasis") -> bool:
        return self is other or (
            self.n_basis == other.n_basis and np.array_equal(self.grid, other.grid)
        )


@dataclass(frozen=True, eq=False)
class Curve:
    """A single function, stored as coefficients w.r.t. a FourierBasis."""

    coeffs: np.ndarray
    basis: FourierBasis

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float).ravel()
        if c.size != self.basis.n_basis:
            raise ValueError("coefficient length does not match basis size")
        if not np.all(np.isfinite(c)):
            raise ValueError("curve coefficients must be finite")
        object.__setattr__(self, "coeffs", _readonly(c))

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))


@dataclass(frozen=True, eq=False)
class CurveSeries:
    """n observed curves sharing one basis; coefficient rows, shape (n, D)."""

    data: np.ndarray
    basis: FourierBasis

    def __post_init__(self):
        d = np.asarray(self.data, dtype=float)
        if d.ndim != 2 or d.shape[0] < 2:
            raise ValueError("series needs a 2-d array with at least two curves")
        if d.shape[1] != self.basis.n_basis:
            raise ValueError("coefficient columns do not match basis size")
        if not np.all(np.isfinite(d)):
            raise ValueError("series coefficients must be finite")
        object.__setattr__(self, "data", _readonly(d))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def curve(self, i: int) -> Curve:
        return Curve(self.data[i], self.basis)


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """A bivariate kernel on [0,1]^2 in basis coordinates, shape (D, D).

    Holds covariance-type kernels as well as (possibly asymmetric) lagged
    autocovariances; symmetry is enforced only where an operation needs it.
    """

    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise ValueError("kernel entries must form a square matrix")
        if not np.all(np.isfinite(e)):
            raise ValueError("kernel entries must be finite")
        object.__setattr__(self, "entries", _readonly(e))

    def symmetrized(self) -> "KernelMatrix":
        return KernelMatrix((self.entries + self.entries.T) / 2.0)

    def max_asymmetry(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.T)))


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Descending eigenvalues and orthonormal eigenvector columns."""

    values: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        w = np.asarray(self.vectors, dtype=float)
        if w.shape != (v.size, v.size):
            raise ValueError("vectors must be square with one column per value")
        if np.any(np.diff(v) > 0):
            raise ValueError("eigenvalues must be non-increasing")
        object.__setattr__(self, "values", _readonly(v))
        object.__setattr__(self, "vectors", _readonly(w))


def fit_curve(basis: FourierBasis, t, values) -> np.ndarray:
    """Least-squares coefficients for samples ``values`` at points ``t``.

    NaN values are treated as missing and excluded from the fit. Raises
    DegenerateFitError when fewer than D usable points remain.
    """
    t = np.asarray(t, dtype=float).ravel()
    y = np.asarray(values, dtype=float).ravel()
    if t.size != y.size:
        raise ValueError("t and values must have equal length")
    mask = np.isfinite(y)
    if mask.sum() < basis.n_basis:
        raise DegenerateFitError(
            f"only {int(mask.sum())} usable points for {basis.n_basis} basis functions"
        )
    design = basis.design_matrix(t[mask])
    coeffs, *_ = np.linalg.lstsq(design, y[mask], rcond=None)
    return coeffs


def project_to_basis(samples, basis: FourierBasis) -> CurveSeries:
    """Project per-curve samples on ``basis.grid`` onto the basis.

    ``samples`` has one row per curve; NaN entries mark missing values and are
    excluded from each curve's least-squares fit.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[None, :]
    if samples.shape[1] != basis.grid.size:
        raise ValueError("sample columns must match the basis grid")
    full_design = basis.design_matrix(basis.grid)
    coeffs = np.empty((samples.shape[0], basis.n_basis))
    for i, row in enumerate(samples):
        mask = np.isfinite(row)
        if mask.sum() < basis.n_basis:
            raise DegenerateFitError(
                f"curve {i}: only {int(mask.sum())} usable points "
                f"for {basis.n_basis} basis functions"
            )
        if mask.all():
            design, y = full_design, row
        else:
            design, y = full_design[mask], row[mask]
        coeffs[i], *_ = np.linalg.lstsq(design, y, rcond=None)
    return CurveSeries(coeffs, basis)


def inner_product(f: Curve, g: Curve) -> float:
    """L2 inner product; equals the coefficient dot product by orthonormality."""
    if not f.basis.same_as(g.basis):
        raise ValueError("curves live in different bases")
    return float(f.coeffs @ g.coeffs)


def evaluate(c: Curve, points) -> np.ndarray:
    """Evaluate the curve at points in [0, 1]."""
    t = np.atleast_1d(np.asarray(points, dtype=float))
    if np.any((t < 0.0) | (t > 1.0)):
        raise ValueError("evaluation points must lie in [0, 1]")
    return c.basis.design_matrix(t) @ c.coeffs


def eigen_decompose(k: KernelMatrix) -> EigenSystem:
    """Full spectral decomposition of a symmetric kernel, values descending.

    Ties keep the underlying decomposition's order (stable sort); each
    eigenvector's sign is fixed by making its largest-magnitude entry positive.
    """
    a = k.entries
    scale = max(1.0, float(np.max(np.abs(a))))
    if k.max_asymmetry() > 1e-8 * scale:
        raise ValueError("kernel is not symmetric")
    a = (a + a.T) / 2.0
    values, vectors = np.linalg.eigh(a)
    order = np.argsort(-values, kind="stable")
    values = values[order]
    vectors = vectors[:, order]
    anchor = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[anchor, np.arange(values.size)])
    signs[signs == 0] = 1.0
    return EigenSystem(values, vectors * signs)
