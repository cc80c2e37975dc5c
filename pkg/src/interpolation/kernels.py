"""
One-dimensional interpolation kernels used to move spectra between wavelength grids.

Four methods are available: linear, quadratic (3-point Lagrange on a sliding window),
cubic spline (not-a-knot or natural boundary) and PCHIP (monotone cubic Hermite with
Fritsch-Carlson derivatives).

All kernels take knots ``xs`` of shape (n,) and ordinates ``ys`` of shape (n,) or (n, m);
with a 2-D ``ys`` every column is an independent signal sharing the same knots, which is how a
whole cube is resampled in one call. Nothing ever extrapolates: a query outside
[xs[0], xs[-1]] raises ExtrapolationError.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np

from src.data_preparation.cube import Violation, WavelengthGrid
from src.exceptions import ArityError, CubeValidationError, ExtrapolationError


class MethodKind(str, Enum):
    LINEAR = 'linear'
    QUADRATIC = 'quadratic'
    CUBIC_SPLINE = 'cubic'
    PCHIP = 'pchip'


class SplineBoundary(str, Enum):
    NOT_A_KNOT = 'notaknot'
    NATURAL = 'natural'


_MIN_KNOTS = {
    MethodKind.LINEAR: 2,
    MethodKind.QUADRATIC: 3,
    MethodKind.PCHIP: 2,
}


@dataclass(frozen=True)
class InterpolationMethod:
    """Selected kernel; the boundary only matters for the cubic spline."""
    kind: MethodKind
    boundary: SplineBoundary = SplineBoundary.NOT_A_KNOT

    def __post_init__(self):
        object.__setattr__(self, 'kind', MethodKind(self.kind))
        object.__setattr__(self, 'boundary', SplineBoundary(self.boundary))

    @classmethod
    def parse(cls, name: str, boundary: str = 'notaknot') -> 'InterpolationMethod':
        try:
            kind = MethodKind(name.lower())
        except ValueError:
            raise ValueError(f"unknown method {name!r}, expected one of {[k.value for k in MethodKind]}")
        try:
            spline_boundary = SplineBoundary(boundary.lower())
        except ValueError:
            raise ValueError(f"unknown boundary {boundary!r}, expected one of {[b.value for b in SplineBoundary]}")
        return cls(kind, spline_boundary)

    @property
    def min_knots(self) -> int:
        if self.kind is MethodKind.CUBIC_SPLINE:
            return 4 if self.boundary is SplineBoundary.NOT_A_KNOT else 3
        return _MIN_KNOTS[self.kind]

    @property
    def label(self) -> str:
        if self.kind is MethodKind.CUBIC_SPLINE and self.boundary is SplineBoundary.NATURAL:
            return 'cubic-natural'
        return self.kind.value

    def __str__(self):
        return self.label


LINEAR = InterpolationMethod(MethodKind.LINEAR)
QUADRATIC = InterpolationMethod(MethodKind.QUADRATIC)
CUBIC_SPLINE = InterpolationMethod(MethodKind.CUBIC_SPLINE)
NATURAL_SPLINE = InterpolationMethod(MethodKind.CUBIC_SPLINE, SplineBoundary.NATURAL)
PCHIP = InterpolationMethod(MethodKind.PCHIP)
ALL_METHODS = (LINEAR, QUADRATIC, CUBIC_SPLINE, PCHIP)


def _prepare_knots(xs, ys, min_knots: int):
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.ndim != 1:
        raise ValueError(f"Knots must be one-dimensional, got shape {xs.shape}")
    if ys.shape[:1] != xs.shape:
        raise ValueError(f"Ordinates shape {ys.shape} does not match {xs.size} knots")
    if xs.size < min_knots:
        raise ArityError(f"Need at least {min_knots} knots, got {xs.size}")
    steps = np.diff(xs)
    if not np.all(steps > 0):
        i = int(np.flatnonzero(~(steps > 0))[0]) + 1
        raise CubeValidationError([Violation('strictly increasing', i, f"{xs[i - 1]:g} followed by {xs[i]:g}")])
    return xs, ys


def _prepare_queries(xs: np.ndarray, queries) -> np.ndarray:
    queries = np.atleast_1d(np.asarray(queries, dtype=np.float64))
    outside = ~((queries >= xs[0]) & (queries <= xs[-1]))
    if np.any(outside):
        raise ExtrapolationError(float(queries[outside][0]), (float(xs[0]), float(xs[-1])))
    return queries


def _locate(xs: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Index i of the interval [xs[i], xs[i + 1]] holding each query; the last knot maps to the last interval."""
    return np.clip(np.searchsorted(xs, queries, side='right') - 1, 0, xs.size - 2)


def _column(values: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Reshape a per-query vector so it broadcasts against rows of ys."""
    return values.reshape(values.shape + (1,) * (ys.ndim - 1))


def _snap_to_knots(xs, ys, queries, out):
    position = np.minimum(np.searchsorted(xs, queries), xs.size - 1)
    hit = xs[position] == queries
    out[hit] = ys[position[hit]]
    return out


def _linear(xs, ys, queries):
    i = _locate(xs, queries)
    x1, x2 = xs[i], xs[i + 1]
    y1, y2 = ys[i], ys[i + 1]
    return y1 + _column(queries - x1, ys) * (y2 - y1) / _column(x2 - x1, ys)


def _quadratic_window_starts(xs: np.ndarray, queries: np.ndarray) -> np.ndarray:
    last = xs.size - 1
    i = _locate(xs, queries)
    left = xs[np.maximum(i - 1, 0)]
    right = xs[np.minimum(i + 2, last)]
    # Ties go left
    starts = np.where(right - queries < queries - left, i, i - 1)
    starts = np.where(i == 0, 0, starts)
    starts = np.where(i == last - 1, last - 2, starts)
    return starts


def select_quadratic_window(xs, query: float) -> tuple:
    """
    Indices of the three consecutive knots used by the quadratic kernel for one query.

    The bracketing interval is extended by the closer of its two outer neighbours; ties extend to
    the left, and the first and last intervals extend towards the interior.
    """
    xs, _ = _prepare_knots(xs, np.zeros(np.size(xs)), 3)
    start = int(_quadratic_window_starts(xs, _prepare_queries(xs, query))[0])
    return start, start + 1, start + 2


def _quadratic(xs, ys, queries):
    s = _quadratic_window_starts(xs, queries)
    x0, x1, x2 = xs[s], xs[s + 1], xs[s + 2]
    l0 = (queries - x1) / (x0 - x1) * (queries - x2) / (x0 - x2)
    l1 = (queries - x0) / (x1 - x0) * (queries - x2) / (x1 - x2)
    l2 = (queries - x0) / (x2 - x0) * (queries - x1) / (x2 - x1)
    return ys[s] * _column(l0, ys) + ys[s + 1] * _column(l1, ys) + ys[s + 2] * _column(l2, ys)


@dataclass(frozen=True, eq=False)
class SplineCoefficients:
    """
    Piecewise cubic on ``knots``.

    Piece i is stored in the shifted basis around its left knot,
    C_i(x) = a[i] + b[i] t + c[i] t^2 + d[i] t^3 with t = x - knots[i];
    ``to_monomial`` gives the same pieces in powers of x.
    """
    knots: WavelengthGrid
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    @property
    def intervals(self) -> int:
        return self.a.shape[0]

    def __call__(self, queries) -> np.ndarray:
        xs = self.knots.wavelengths
        queries = _prepare_queries(xs, queries)
        i = _locate(xs, queries)
        t = _column(queries - xs[i], self.a)
        out = self.a[i] + t * (self.b[i] + t * (self.c[i] + t * self.d[i]))
        # Right end of the last piece
        last = queries == xs[-1]
        if np.any(last):
            h = xs[-1] - xs[-2]
            out[last] = self.a[-1] + h * (self.b[-1] + h * (self.c[-1] + h * self.d[-1]))
        return out

    def knot_derivatives(self):
        """
        First and second derivatives at every interior knot, seen from the piece on its left and on its right.

        Returns ``(left_first, right_first, left_second, right_second)``.
        """
        h = _column(np.diff(self.knots.wavelengths), self.a)[:-1]
        b, c, d = self.b[:-1], self.c[:-1], self.d[:-1]
        left_first = b + 2 * c * h + 3 * d * h ** 2
        left_second = 2 * c + 6 * d * h
        return left_first, self.b[1:], left_second, 2 * self.c[1:]

    def to_monomial(self) -> np.ndarray:
        """Coefficients (a_i, b_i, c_i, d_i) of a_i + b_i x + c_i x^2 + d_i x^3, one row per piece."""
        s = _column(self.knots.wavelengths[:-1], self.a)
        a, b, c, d = self.a, self.b, self.c, self.d
        return np.stack([
            a - b * s + c * s ** 2 - d * s ** 3,
            b - 2 * c * s + 3 * d * s ** 2,
            c - 3 * d * s,
            d,
        ], axis=1)


def _solve_tridiagonal(lower, diag, upper, rhs):
    """
    Thomas algorithm, vectorised over the columns of ``rhs``.

    The spline systems built below need no pivoting, and every column is eliminated with the same
    scalar sequence, so a column's result does not depend on which other columns are solved with it.
    """
    n = diag.size
    diag = diag.astype(np.float64)
    rhs = rhs.astype(np.float64)
    for i in range(1, n):
        w = lower[i] / diag[i - 1]
        diag[i] = diag[i] - w * upper[i - 1]
        rhs[i] = rhs[i] - w * rhs[i - 1]
    solution = np.empty_like(rhs)
    solution[-1] = rhs[-1] / diag[-1]
    for i in range(n - 2, -1, -1):
        solution[i] = (rhs[i] - upper[i] * solution[i + 1]) / diag[i]
    return solution


def fit_cubic_spline(xs, ys, boundary=SplineBoundary.NOT_A_KNOT) -> SplineCoefficients:
    """
    Fit the interpolating cubic spline.

    The interpolation and C1/C2 continuity conditions leave two equations free; they are closed
    with not-a-knot (third-derivative continuity at the second and penultimate knots) or natural
    (zero second derivative at both ends) conditions. The system is solved for the knot slopes.
    """
    boundary = SplineBoundary(boundary)
    method = InterpolationMethod(MethodKind.CUBIC_SPLINE, boundary)
    xs, ys = _prepare_knots(xs, ys, method.min_knots)
    n = xs.size
    h = np.diff(xs)
    delta = np.diff(ys, axis=0) / _column(h, ys)

    lower = np.zeros(n)
    diag = np.zeros(n)
    upper = np.zeros(n)
    rhs = np.zeros((n,) + ys.shape[1:])

    lower[1:-1] = h[1:]
    diag[1:-1] = 2 * (h[:-1] + h[1:])
    upper[1:-1] = h[:-1]
    rhs[1:-1] = 3 * (_column(h[1:], ys) * delta[:-1] + _column(h[:-1], ys) * delta[1:])

    if boundary is SplineBoundary.NATURAL:
        diag[0], upper[0] = 2.0, 1.0
        rhs[0] = 3 * delta[0]
        lower[-1], diag[-1] = 1.0, 2.0
        rhs[-1] = 3 * delta[-1]
    else:
        span = h[0] + h[1]
        diag[0], upper[0] = h[1], span
        rhs[0] = ((h[0] + 2 * span) * h[1] * delta[0] + h[0] ** 2 * delta[1]) / span
        span = h[-1] + h[-2]
        lower[-1], diag[-1] = span, h[-2]
        rhs[-1] = (h[-1] ** 2 * delta[-2] + (2 * span + h[-1]) * h[-2] * delta[-1]) / span

    slopes = _solve_tridiagonal(lower, diag, upper, rhs)
    hh = _column(h, ys)
    c = (3 * delta - 2 * slopes[:-1] - slopes[1:]) / hh
    d = (slopes[:-1] + slopes[1:] - 2 * delta) / hh ** 2
    return SplineCoefficients(WavelengthGrid(xs), ys[:-1].copy(), slopes[:-1].copy(), c, d)


def _pchip_edge(h0, h1, m0, m1):
    """One-sided three-point derivative, clamped so the end interval stays shape preserving."""
    d = ((2 * h0 + h1) * m0 - h0 * m1) / (h0 + h1)
    d = np.where(np.sign(d) != np.sign(m0), 0.0, d)
    overshoot = (np.sign(m0) != np.sign(m1)) & (np.abs(d) > np.abs(3 * m0))
    return np.where(overshoot, 3 * m0, d)


def pchip_derivatives(xs, ys) -> np.ndarray:
    """
    Knot derivatives of the monotone cubic Hermite interpolant (Fritsch-Carlson).

    Interior derivatives are the weighted harmonic mean of the neighbouring secant slopes, or zero
    where the slopes change sign or either one vanishes.
    """
    xs, ys = _prepare_knots(xs, ys, 2)
    h = np.diff(xs)
    delta = np.diff(ys, axis=0) / _column(h, ys)
    if xs.size == 2:
        return np.concatenate([delta, delta], axis=0)

    derivatives = np.zeros_like(ys)
    w1 = _column(2 * h[1:] + h[:-1], ys)
    w2 = _column(h[1:] + 2 * h[:-1], ys)
    same_sign = np.sign(delta[:-1]) * np.sign(delta[1:]) > 0
    with np.errstate(divide='ignore', invalid='ignore'):
        harmonic = (w1 + w2) / (w1 / delta[:-1] + w2 / delta[1:])
    derivatives[1:-1] = np.where(same_sign, harmonic, 0.0)
    derivatives[0] = _pchip_edge(h[0], h[1], delta[0], delta[1])
    derivatives[-1] = _pchip_edge(h[-1], h[-2], delta[-1], delta[-2])
    return derivatives


def _hermite(xs, ys, derivatives, queries):
    i = _locate(xs, queries)
    h = xs[i + 1] - xs[i]
    t = (queries - xs[i]) / h
    h00 = (1 + 2 * t) * (1 - t) ** 2
    h10 = t * (1 - t) ** 2
    h01 = t ** 2 * (3 - 2 * t)
    h11 = t ** 2 * (t - 1)
    col = lambda v: _column(v, ys)
    return (col(h00) * ys[i] + col(h10 * h) * derivatives[i]
            + col(h01) * ys[i + 1] + col(h11 * h) * derivatives[i + 1])


def interpolate_1d(xs, ys, method: InterpolationMethod, queries) -> np.ndarray:
    """
    Evaluate the interpolant of (xs, ys) at ``queries``.

    Queries equal to a knot return that knot's ordinate exactly. Returns float64 values of shape
    (len(queries),) + ys.shape[1:].
    """
    xs, ys = _prepare_knots(xs, ys, method.min_knots)
    queries = _prepare_queries(xs, queries)

    if method.kind is MethodKind.LINEAR:
        out = _linear(xs, ys, queries)
    elif method.kind is MethodKind.QUADRATIC:
        out = _quadratic(xs, ys, queries)
    elif method.kind is MethodKind.CUBIC_SPLINE:
        out = fit_cubic_spline(xs, ys, method.boundary)(queries)
    else:
        out = _hermite(xs, ys, pchip_derivatives(xs, ys), queries)
    return _snap_to_knots(xs, ys, queries, out)
