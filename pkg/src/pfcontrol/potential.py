"""Double-well potentials split into a convex part and a smooth remainder.

Each potential W = w_convex + w_rest, with w_convex convex and possibly
singular on an open interval, and w_rest smooth with bounded curvature.
The time stepper treats the derivative of the convex part implicitly and the
derivative of the remainder explicitly, which is what makes the scheme
unconditionally energy stable.

For singular convex parts the derivative can be replaced by its Yosida
regularization with parameter eps: dw_eps(r) = (r - resolvent(r)) / eps where
resolvent(r) solves x + eps * dw_convex(x) = r. The regularization is globally
defined, Lipschitz with constant 1/eps, and satisfies |dw_eps| <= |dw_convex|
pointwise on the domain.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable

import numpy as np
from scipy.special import xlogy

from .errors import OutOfDomain, RootSolveFailure

__all__ = [
    "Potential",
    "SplitValues",
    "PotentialValues",
    "quartic_double_well",
    "log_double_well",
    "log_linear",
    "eval_w",
    "eval_split",
    "yosida",
]

#: Relative step tolerance of the resolvent root solve; a few ulps, because
#: the root error is amplified by 1/eps in the Yosida values built from it.
ROOT_XTOL = 1.0e-15
_ROOT_MAX_ITER = 200


@dataclasses.dataclass(frozen=True)
class PotentialValues:
    w: np.ndarray
    w_convex: np.ndarray
    w_rest: np.ndarray


@dataclasses.dataclass(frozen=True)
class SplitValues:
    """First and second derivatives of both parts; third of the remainder."""

    dw_convex: np.ndarray
    d2w_convex: np.ndarray
    dw_rest: np.ndarray
    d2w_rest: np.ndarray
    d3w_rest: np.ndarray


@dataclasses.dataclass(frozen=True)
class Potential:
    """A split potential with optional Yosida regularization of the convex part.

    Attributes:
        kind: short tag ("quartic", "logarithmic", "loglinear", "custom").
        lo, hi: open domain of the convex part's derivative (+-inf if entire).
        yosida_eps: regularization parameter; 0 means exact evaluation.
    """

    kind: str
    lo: float
    hi: float
    yosida_eps: float
    _w_convex: Callable[[np.ndarray], np.ndarray]
    _dw_convex: Callable[[np.ndarray], np.ndarray]
    _d2w_convex: Callable[[np.ndarray], np.ndarray]
    _w_rest: Callable[[np.ndarray], np.ndarray]
    _dw_rest: Callable[[np.ndarray], np.ndarray]
    _d2w_rest: Callable[[np.ndarray], np.ndarray]
    _d3w_rest: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        if self.yosida_eps < 0:
            raise ValueError("yosida_eps must be nonnegative")
        if not self.lo < self.hi:
            raise ValueError("domain must be a nonempty open interval")

    # -- domain ---------------------------------------------------------------

    @property
    def is_singular(self) -> bool:
        return math.isfinite(self.lo) or math.isfinite(self.hi)

    def contains(self, r: np.ndarray, margin: float = 0.0) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return (r > self.lo + margin) & (r < self.hi - margin)

    def distance_to_boundary(self, r: np.ndarray) -> np.ndarray:
        """Pointwise distance to the nearest domain endpoint (inf if entire)."""
        r = np.asarray(r, dtype=float)
        d = np.full(r.shape, np.inf)
        if math.isfinite(self.lo):
            d = np.minimum(d, r - self.lo)
        if math.isfinite(self.hi):
            d = np.minimum(d, self.hi - r)
        return d

    def _require_inside(self, r: np.ndarray, closure: bool = False) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if closure:
            ok = (r >= self.lo) & (r <= self.hi)
        else:
            ok = self.contains(r)
        if not np.all(ok):
            bad = float(np.asarray(r)[~ok].flat[0])
            raise OutOfDomain(
                f"value {bad!r} outside domain ({self.lo}, {self.hi}) of the convex part"
            )
        return r

    # -- exact evaluation -------------------------------------------------------

    def w_convex(self, r: np.ndarray) -> np.ndarray:
        """Convex part; finite on the domain closure for the stock kinds."""
        return self._w_convex(self._require_inside(r, closure=True))

    def dw_convex(self, r: np.ndarray) -> np.ndarray:
        return self._dw_convex(self._require_inside(r))

    def d2w_convex(self, r: np.ndarray) -> np.ndarray:
        return self._d2w_convex(self._require_inside(r))

    def w_rest(self, r: np.ndarray) -> np.ndarray:
        return self._w_rest(np.asarray(r, dtype=float))

    def dw_rest(self, r: np.ndarray) -> np.ndarray:
        return self._dw_rest(np.asarray(r, dtype=float))

    def d2w_rest(self, r: np.ndarray) -> np.ndarray:
        return self._d2w_rest(np.asarray(r, dtype=float))

    def d3w_rest(self, r: np.ndarray) -> np.ndarray:
        return self._d3w_rest(np.asarray(r, dtype=float))

    def w(self, r: np.ndarray) -> np.ndarray:
        return self.w_convex(r) + self.w_rest(r)

    # -- Yosida regularization ---------------------------------------------------

    def with_eps(self, eps: float) -> "Potential":
        return dataclasses.replace(self, yosida_eps=float(eps))

    def resolvent(self, r: np.ndarray, eps: float) -> np.ndarray:
        """Solve x + eps * dw_convex(x) = r for x in the open domain.

        Bracketed Newton with bisection fallback; the map is strictly
        increasing, so the root is unique.
        """
        if eps <= 0:
            raise ValueError("resolvent needs eps > 0")
        r = np.atleast_1d(np.asarray(r, dtype=float))
        lo = np.full(r.shape, self.lo)
        hi = np.full(r.shape, self.hi)
        if math.isfinite(self.lo):
            lo = np.nextafter(lo, np.inf)
        else:
            lo = np.minimum(r, 0.0)
            width = 1.0
            with np.errstate(over="ignore"):
                while True:
                    g = lo + eps * self._dw_convex(lo) - r
                    if np.all(g <= 0):
                        break
                    lo = np.where(g > 0, lo - width, lo)
                    width *= 2.0
        if math.isfinite(self.hi):
            hi = np.nextafter(hi, -np.inf)
        else:
            hi = np.maximum(r, 0.0)
            width = 1.0
            with np.errstate(over="ignore"):
                while True:
                    g = hi + eps * self._dw_convex(hi) - r
                    if np.all(g >= 0):
                        break
                    hi = np.where(g < 0, hi + width, hi)
                    width *= 2.0
        x = np.clip(r, lo, hi)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            for _ in range(_ROOT_MAX_ITER):
                g = x + eps * self._dw_convex(x) - r
                lo = np.where(g <= 0, x, lo)
                hi = np.where(g > 0, x, hi)
                dg = 1.0 + eps * self._d2w_convex(x)
                step = g / dg
                x_new = x - step
                outside = ~np.isfinite(x_new) | (x_new <= lo) | (x_new >= hi)
                x_new = np.where(outside, 0.5 * (lo + hi), x_new)
                done = np.abs(x_new - x) <= ROOT_XTOL * (1.0 + np.abs(x_new))
                x = x_new
                if np.all(done):
                    break
            else:
                raise RootSolveFailure("resolvent iteration did not converge")
        return x

    def yosida(self, r: np.ndarray, eps: float | None = None) -> np.ndarray:
        """Yosida regularization of dw_convex."""
        eps = self.yosida_eps if eps is None else eps
        r = np.asarray(r, dtype=float)
        return (r - self.resolvent(r, eps)) / eps

    def yosida_prime(self, r: np.ndarray, eps: float | None = None) -> np.ndarray:
        """Derivative of the Yosida regularization (implicit differentiation)."""
        eps = self.yosida_eps if eps is None else eps
        j = self.resolvent(r, eps)
        b = self._d2w_convex(j)
        return b / (1.0 + eps * b)

    def w_convex_envelope(self, r: np.ndarray, eps: float | None = None) -> np.ndarray:
        """Moreau envelope of the convex part (the Lyapunov density at eps > 0)."""
        eps = self.yosida_eps if eps is None else eps
        j = self.resolvent(r, eps)
        y = (np.asarray(r, dtype=float) - j) / eps
        return self._w_convex(j) + 0.5 * eps * y * y

    # -- effective (mode-respecting) evaluation -----------------------------------

    def dw_convex_eff(self, r: np.ndarray) -> np.ndarray:
        """Derivative of the convex part as driven by the dynamics (exact or Yosida)."""
        if self.yosida_eps > 0:
            return self.yosida(r)
        return self.dw_convex(r)

    def d2w_convex_eff(self, r: np.ndarray) -> np.ndarray:
        if self.yosida_eps > 0:
            return self.yosida_prime(r)
        return self.d2w_convex(r)

    def w_convex_eff(self, r: np.ndarray) -> np.ndarray:
        if self.yosida_eps > 0:
            return self.w_convex_envelope(r)
        return self.w_convex(r)


# -- stock kinds ------------------------------------------------------------------


def quartic_double_well(yosida_eps: float = 0.0) -> Potential:
    """W(r) = (r^2 - 1)^2 / 4 split as r^4/4 + (1 - 2 r^2)/4; entire domain."""
    return Potential(
        kind="quartic",
        lo=-math.inf,
        hi=math.inf,
        yosida_eps=yosida_eps,
        _w_convex=lambda r: 0.25 * r**4,
        _dw_convex=lambda r: r**3,
        _d2w_convex=lambda r: 3.0 * r**2,
        _w_rest=lambda r: 0.25 * (1.0 - 2.0 * r**2),
        _dw_rest=lambda r: -r,
        _d2w_rest=lambda r: -np.ones_like(r),
        _d3w_rest=lambda r: np.zeros_like(r),
    )


def log_double_well(c: float = 2.0, yosida_eps: float = 0.0) -> Potential:
    """W(r) = (1+r)ln(1+r) + (1-r)ln(1-r) - c r^2 on (-1, 1).

    The logarithmic part is the convex piece (finite on the closure); the
    quadratic -c r^2 is the remainder. c > 1 makes the origin concave.
    """
    if c <= 0:
        raise ValueError("quadratic coefficient c must be positive")

    def w_convex(r):
        return xlogy(1.0 + r, 1.0 + r) + xlogy(1.0 - r, 1.0 - r)

    return Potential(
        kind="logarithmic",
        lo=-1.0,
        hi=1.0,
        yosida_eps=yosida_eps,
        _w_convex=w_convex,
        _dw_convex=lambda r: np.log1p(r) - np.log1p(-r),
        _d2w_convex=lambda r: 1.0 / (1.0 + r) + 1.0 / (1.0 - r),
        _w_rest=lambda r: -c * r**2,
        _dw_rest=lambda r: -2.0 * c * r,
        _d2w_rest=lambda r: np.full_like(r, -2.0 * c),
        _d3w_rest=lambda r: np.zeros_like(r),
    )


def log_linear(yosida_eps: float = 0.0) -> Potential:
    """Convex part r - ln(1+r) on (-1, inf): singular at -1, linear growth at +inf.

    No remainder for this kind; the potential is the convex part alone.
    """
    return Potential(
        kind="loglinear",
        lo=-1.0,
        hi=math.inf,
        yosida_eps=yosida_eps,
        _w_convex=lambda r: r - np.log1p(r),
        _dw_convex=lambda r: r / (1.0 + r),
        _d2w_convex=lambda r: 1.0 / (1.0 + r) ** 2,
        _w_rest=lambda r: np.zeros_like(r),
        _dw_rest=lambda r: np.zeros_like(r),
        _d2w_rest=lambda r: np.zeros_like(r),
        _d3w_rest=lambda r: np.zeros_like(r),
    )


# -- functional wrappers ------------------------------------------------------------


def eval_w(pot: Potential, r: np.ndarray) -> PotentialValues:
    """Exact potential values; raises OutOfDomain outside the domain closure."""
    r = np.asarray(r, dtype=float)
    return PotentialValues(w=pot.w(r), w_convex=pot.w_convex(r), w_rest=pot.w_rest(r))


def eval_split(pot: Potential, r: np.ndarray) -> SplitValues:
    """Exact derivatives of the split; raises OutOfDomain outside the open domain."""
    r = np.asarray(r, dtype=float)
    return SplitValues(
        dw_convex=pot.dw_convex(r),
        d2w_convex=pot.d2w_convex(r),
        dw_rest=pot.dw_rest(r),
        d2w_rest=pot.d2w_rest(r),
        d3w_rest=pot.d3w_rest(r),
    )


def yosida(pot: Potential, eps: float, r: np.ndarray) -> np.ndarray:
    return pot.yosida(r, eps)
