"""Uniform cell-centered grids and homogeneous-Neumann calculus.

The spatial operators live here: the divergence-form Laplacian with mirror
ghost cells (zero boundary flux), means and integrals, the inverse Neumann
operator on zero-mean data, and the H / V / sup / dual norms built on it.

Fields are cell values flattened in C order. All cells have the same measure,
so the measure-weighted mean is the plain arithmetic average.
"""

from __future__ import annotations

import dataclasses
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import splu

from .errors import NonZeroMean, ShapeMismatch, SolverDivergence

__all__ = [
    "Grid",
    "Field",
    "TimeGrid",
    "FieldNorms",
    "laplacian_neumann",
    "mean",
    "inverse_neumann",
    "dual_norm",
    "norms",
]

#: Default relative tolerance on |mean(f)| for the inverse Neumann operator.
MEAN_RTOL = 1.0e-12

#: Relative residual bound above which a direct solve is declared broken.
LINEAR_RTOL = 1.0e-10


def _axis_laplacian(n: int, h: float) -> sps.csr_matrix:
    """1D cell-centered Neumann Laplacian: zero flux through the boundary faces."""
    main = np.full(n, -2.0)
    main[0] = main[-1] = -1.0
    off = np.ones(n - 1)
    return sps.diags([off, main, off], [-1, 0, 1], format="csr") / h**2


class Grid:
    """Uniform tensor-product grid over a 1D interval or 2D box.

    Args:
        cells: cells per axis, an int (1D) or a pair (2D); at least 2 per axis.
        lengths: axis lengths; defaults to the unit interval/square.
    """

    def __init__(self, cells: int | Sequence[int], lengths: float | Sequence[float] | None = None):
        if isinstance(cells, (int, np.integer)):
            cells = (int(cells),)
        self.cells: tuple[int, ...] = tuple(int(c) for c in cells)
        self.dim = len(self.cells)
        if self.dim not in (1, 2):
            raise ValueError(f"grid must be 1D or 2D, got {self.dim} axes")
        if any(c < 2 for c in self.cells):
            raise ValueError(f"need at least 2 cells per axis, got {self.cells}")
        if lengths is None:
            lengths = (1.0,) * self.dim
        elif isinstance(lengths, (int, float, np.floating)):
            lengths = (float(lengths),) * self.dim
        self.lengths: tuple[float, ...] = tuple(float(L) for L in lengths)
        if len(self.lengths) != self.dim:
            raise ValueError("lengths must match the number of axes")
        if any(L <= 0 for L in self.lengths):
            raise ValueError(f"axis lengths must be positive, got {self.lengths}")
        self.spacing: tuple[float, ...] = tuple(L / n for L, n in zip(self.lengths, self.cells))
        self.cell_measure: float = float(np.prod(self.spacing))
        self.ncells: int = int(np.prod(self.cells))
        self.volume: float = float(np.prod(self.lengths))

    def __repr__(self) -> str:
        return f"Grid(cells={self.cells}, lengths={self.lengths})"

    # -- geometry -----------------------------------------------------------

    def axis_centers(self) -> tuple[np.ndarray, ...]:
        """Cell-center coordinates along each axis."""
        return tuple(
            (np.arange(n) + 0.5) * h for n, h in zip(self.cells, self.spacing)
        )

    def coords(self) -> np.ndarray:
        """Cell-center coordinates, shape (ncells, dim), C-order flattening."""
        axes = self.axis_centers()
        if self.dim == 1:
            return axes[0][:, None]
        X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    # -- operators ----------------------------------------------------------

    @cached_property
    def laplacian(self) -> sps.csr_matrix:
        """Divergence-form Neumann Laplacian on flattened cell values."""
        ax = [_axis_laplacian(n, h) for n, h in zip(self.cells, self.spacing)]
        if self.dim == 1:
            return ax[0]
        ix = sps.identity(self.cells[0], format="csr")
        iy = sps.identity(self.cells[1], format="csr")
        return (sps.kron(ax[0], iy) + sps.kron(ix, ax[1])).tocsr()

    @cached_property
    def _neumann_lu(self):
        # Saddle-point augmentation of -Laplacian with the mean constraint;
        # symmetric indefinite but nonsingular, factorized once per grid.
        a = (-self.laplacian).tocoo()
        n = self.ncells
        ones = np.ones(n)
        k = sps.bmat(
            [[a, ones[:, None]], [ones[None, :], None]], format="csc"
        )
        return splu(k)

    @cached_property
    def _riesz_lu(self):
        # (I - Laplacian), the Riesz map of the discrete V inner product.
        return splu((sps.identity(self.ncells) - self.laplacian).tocsc())

    @cached_property
    def _helmholtz_cache(self) -> dict:
        return {}

    def _check(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.ncells,):
            raise ShapeMismatch(
                f"expected flat field of length {self.ncells}, got shape {values.shape}"
            )
        return values

    def apply_laplacian(self, values: np.ndarray) -> np.ndarray:
        return self.laplacian @ self._check(values)

    def mean(self, values: np.ndarray) -> float:
        """Measure-weighted mean; uniform cells make it the arithmetic average."""
        return float(np.sum(self._check(values)) / self.ncells)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(self._check(values)) * self.cell_measure)

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        """Discrete L2(Omega) inner product."""
        return float(np.dot(self._check(u), self._check(v)) * self.cell_measure)

    def helmholtz_solve(self, rhs: np.ndarray, coef: float) -> np.ndarray:
        """Solve (I - coef * Laplacian) w = rhs. Factorization cached per coef."""
        rhs = self._check(rhs)
        if coef < 0:
            raise ValueError("helmholtz coefficient must be nonnegative")
        if coef == 0.0:
            return rhs.copy()
        key = float(coef)
        lu = self._helmholtz_cache.get(key)
        if lu is None:
            op = sps.identity(self.ncells) - key * self.laplacian
            lu = splu(op.tocsc())
            self._helmholtz_cache[key] = lu
        w = lu.solve(rhs)
        self._residual_guard(rhs - (w - key * (self.laplacian @ w)), rhs, "helmholtz solve")
        return w

    def _residual_guard(self, residual: np.ndarray, rhs: np.ndarray, what: str) -> None:
        scale = float(np.linalg.norm(rhs))
        if scale == 0.0:
            scale = 1.0
        rel = float(np.linalg.norm(residual)) / scale
        if not np.isfinite(rel) or rel > LINEAR_RTOL:
            raise SolverDivergence(f"{what}: relative residual {rel:.3e} exceeds {LINEAR_RTOL:.1e}")

    def inverse_neumann(self, values: np.ndarray, mean_rtol: float = MEAN_RTOL) -> np.ndarray:
        """Solve -Laplacian g = f with zero-flux boundary and mean(g) = 0.

        The data must have (numerically) zero mean: |mean(f)| is allowed up to
        mean_rtol * ||f||_inf. The solution mean is removed by post-projection.
        """
        f = self._check(values)
        scale = float(np.max(np.abs(f))) if f.size else 0.0
        m = self.mean(f)
        if abs(m) > mean_rtol * scale:
            raise NonZeroMean(
                f"inverse Neumann needs zero-mean data: |mean| = {abs(m):.3e} "
                f"> {mean_rtol:.1e} * ||f||_inf = {mean_rtol * scale:.3e}"
            )
        if scale == 0.0:
            return np.zeros_like(f)
        rhs = np.concatenate([f - m, [0.0]])
        sol = self._neumann_lu.solve(rhs)
        g = sol[:-1]
        self._residual_guard(
            (f - m) - (-(self.laplacian @ g)) - sol[-1], f, "inverse Neumann solve"
        )
        g = g - np.sum(g) / self.ncells
        return g

    # -- norms ----------------------------------------------------------------

    def h_norm(self, values: np.ndarray) -> float:
        v = self._check(values)
        return float(np.sqrt(np.sum(v * v) * self.cell_measure))

    def sup_norm(self, values: np.ndarray) -> float:
        return float(np.max(np.abs(self._check(values))))

    def grad_sq(self, values: np.ndarray) -> float:
        """Squared discrete Dirichlet energy, sum over interior faces."""
        v = self._check(values).reshape(self.cells)
        total = 0.0
        for axis, h in enumerate(self.spacing):
            d = np.diff(v, axis=axis)
            total += float(np.sum(d * d)) * self.cell_measure / h**2
        return total

    def v_norm(self, values: np.ndarray) -> float:
        return float(np.sqrt(self.h_norm(values) ** 2 + self.grad_sq(values)))

    def vprime_norm(self, values: np.ndarray) -> float:
        """Dual V' norm via the (I - Laplacian) Riesz map (independent of N)."""
        f = self._check(values)
        w = self._riesz_lu.solve(f)
        return float(np.sqrt(max(self.inner(f, w), 0.0)))

    def dual_norm(self, values: np.ndarray, mean_rtol: float = MEAN_RTOL) -> float:
        """Norm induced by the inverse Neumann operator on zero-mean data."""
        f = self._check(values)
        g = self.inverse_neumann(f, mean_rtol=mean_rtol)
        return float(np.sqrt(max(self.inner(f, g), 0.0)))


@dataclasses.dataclass(frozen=True)
class Field:
    """A single-time-level scalar field: flattened cell values bound to a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.shape != (self.grid.ncells,):
            raise ShapeMismatch(
                f"field has {vals.shape}, grid wants ({self.grid.ncells},)"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("field entries must be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "Field":
        return cls(grid, np.full(grid.ncells, float(value)))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "Field":
        pts = grid.coords()
        return cls(grid, np.asarray(fn(*(pts[:, k] for k in range(grid.dim))), dtype=float))


@dataclasses.dataclass(frozen=True)
class FieldNorms:
    h: float
    v: float
    sup: float


@dataclasses.dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of (0, horizon] into steps backward-Euler intervals."""

    horizon: float
    steps: int

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("time horizon must be positive")
        if self.steps < 1:
            raise ValueError("need at least one time step")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    def times(self) -> np.ndarray:
        """All Nt+1 level times; endpoint exactly the horizon."""
        return np.linspace(0.0, self.horizon, self.steps + 1)


# -- functional wrappers over Field ------------------------------------------


def laplacian_neumann(f: Field) -> Field:
    """Divergence-form Laplacian with zero boundary flux."""
    return Field(f.grid, f.grid.apply_laplacian(f.values))


def mean(f: Field) -> float:
    return f.grid.mean(f.values)


def inverse_neumann(f: Field, mean_rtol: float = MEAN_RTOL) -> Field:
    return Field(f.grid, f.grid.inverse_neumann(f.values, mean_rtol=mean_rtol))


def dual_norm(f: Field, mean_rtol: float = MEAN_RTOL) -> float:
    return f.grid.dual_norm(f.values, mean_rtol=mean_rtol)


def norms(f: Field) -> FieldNorms:
    g = f.grid
    return FieldNorms(h=g.h_norm(f.values), v=g.v_norm(f.values), sup=g.sup_norm(f.values))
