import numpy as np
import pytest

from src.exceptions import ArityError, CubeValidationError, ExtrapolationError
from src.interpolation.kernels import (
    ALL_METHODS,
    CUBIC_SPLINE,
    LINEAR,
    NATURAL_SPLINE,
    PCHIP,
    QUADRATIC,
    InterpolationMethod,
    fit_cubic_spline,
    interpolate_1d,
    pchip_derivatives,
    select_quadratic_window,
)


def _random_knots(rng, n, low=0.0, high=10.0, min_gap=0.05):
    gaps = min_gap + rng.random(n - 1)
    xs = np.concatenate([[0.0], np.cumsum(gaps)])
    return low + (high - low) * xs / xs[-1]


@pytest.mark.parametrize('method', ALL_METHODS, ids=lambda m: m.label)
def test_knot_exactness(method, rng):
    for _ in range(200):
        n = int(rng.integers(4, 30))
        xs = 400 + _random_knots(rng, n, 0, 300)
        ys = rng.normal(100, 30, size=n)
        np.testing.assert_allclose(interpolate_1d(xs, ys, method, xs), ys, rtol=1e-12)


@pytest.mark.parametrize('method, degree', [
    (LINEAR, 1),
    (QUADRATIC, 2),
    (CUBIC_SPLINE, 3),
    (PCHIP, 1),
], ids=lambda p: p.label if isinstance(p, InterpolationMethod) else None)
def test_polynomial_reproduction(method, degree, rng):
    for _ in range(100):
        xs = _random_knots(rng, int(rng.integers(5, 20)))
        coefficients = rng.normal(size=degree + 1)
        queries = np.sort(rng.uniform(xs[0], xs[-1], size=50))
        expected = np.polyval(coefficients, queries)
        actual = interpolate_1d(xs, np.polyval(coefficients, xs), method, queries)
        scale = np.max(np.abs(expected))
        np.testing.assert_allclose(actual, expected, rtol=1e-9, atol=1e-9 * scale)


def test_linear_midpoint():
    np.testing.assert_allclose(interpolate_1d([400, 410], [1.0, 3.0], LINEAR, [405]), [2.0])


@pytest.mark.parametrize('query, window', [
    (0.5, (0, 1, 2)),
    (1.4, (0, 1, 2)),
    (1.5, (0, 1, 2)),
    (1.6, (1, 2, 3)),
    (3.5, (2, 3, 4)),
    (4.0, (2, 3, 4)),
])
def test_quadratic_window(query, window):
    assert select_quadratic_window([0.0, 1.0, 2.0, 3.0, 4.0], query) == window


def test_quadratic_matches_lagrange_on_window():
    xs = np.array([400.0, 410.0, 420.0, 430.0])
    ys = np.array([1.0, 4.0, 2.0, 5.0])
    # 413 is nearer 400 than 430, so the window is 400..420
    expected = np.polyval(np.polyfit(xs[:3] - 400.0, ys[:3], 2), 13.0)
    np.testing.assert_allclose(interpolate_1d(xs, ys, QUADRATIC, [413.0]), [expected], rtol=1e-10)


@pytest.mark.parametrize('boundary', ['notaknot', 'natural'])
def test_spline_continuity(boundary, rng):
    for _ in range(50):
        xs = _random_knots(rng, int(rng.integers(5, 15)))
        spline = fit_cubic_spline(xs, rng.normal(size=xs.size), boundary)
        left_first, right_first, left_second, right_second = spline.knot_derivatives()
        scale_first = np.max(np.abs(right_first)) + 1.0
        scale_second = np.max(np.abs(right_second)) + 1.0
        np.testing.assert_allclose(left_first, right_first, rtol=1e-6, atol=1e-6 * scale_first)
        np.testing.assert_allclose(left_second, right_second, rtol=1e-6, atol=1e-6 * scale_second)


def test_natural_spline_has_zero_end_curvature(rng):
    xs = _random_knots(rng, 8)
    spline = fit_cubic_spline(xs, rng.normal(size=8), 'natural')
    h_last = xs[-1] - xs[-2]
    np.testing.assert_allclose(2 * spline.c[0], 0.0, atol=1e-10)
    np.testing.assert_allclose(2 * spline.c[-1] + 6 * spline.d[-1] * h_last, 0.0, atol=1e-9)


def test_spline_monomial_form_matches_shifted_form(rng):
    xs = _random_knots(rng, 6)
    spline = fit_cubic_spline(xs, rng.normal(size=6))
    monomial = spline.to_monomial()
    for i in range(spline.intervals):
        query = 0.5 * (xs[i] + xs[i + 1])
        np.testing.assert_allclose(np.polyval(monomial[i][::-1], query), spline(query)[0], rtol=1e-8, atol=1e-8)


def test_spline_fits_columns_independently(rng):
    xs = _random_knots(rng, 7)
    ys = rng.normal(size=(7, 3))
    queries = np.linspace(xs[0], xs[-1], 11)
    together = interpolate_1d(xs, ys, CUBIC_SPLINE, queries)
    for j in range(3):
        np.testing.assert_array_equal(together[:, j], interpolate_1d(xs, ys[:, j], CUBIC_SPLINE, queries))


def test_pchip_preserves_monotonicity(rng):
    violations = 0
    for _ in range(100):
        n = int(rng.integers(3, 15))
        xs = _random_knots(rng, n)
        ys = np.cumsum(rng.exponential(size=n) * (rng.random(n) < 0.7))
        dense = np.linspace(xs[0], xs[-1], 2000)
        values = interpolate_1d(xs, ys, PCHIP, dense)
        violations += int(np.sum(np.diff(values) < -1e-12))
        i = np.clip(np.searchsorted(xs, dense, side='right') - 1, 0, n - 2)
        low, high = np.minimum(ys[i], ys[i + 1]), np.maximum(ys[i], ys[i + 1])
        violations += int(np.sum((values < low - 1e-12) | (values > high + 1e-12)))
    assert violations == 0


def test_pchip_flat_interval_has_zero_slopes():
    derivatives = pchip_derivatives([0.0, 1.0, 2.0, 3.0], [0.0, 1.0, 1.0, 2.0])
    np.testing.assert_array_equal(derivatives[1:3], [0.0, 0.0])


@pytest.mark.parametrize('method', ALL_METHODS, ids=lambda m: m.label)
def test_extrapolation_is_refused(method):
    with pytest.raises(ExtrapolationError, match='Query 395 nm outside knot span'):
        interpolate_1d([400, 410, 420, 430], [1.0, 2.0, 3.0, 4.0], method, [405, 395])


@pytest.mark.parametrize('method, n', [(LINEAR, 1), (QUADRATIC, 2), (CUBIC_SPLINE, 3), (PCHIP, 1)],
                         ids=lambda p: p.label if isinstance(p, InterpolationMethod) else None)
def test_too_few_knots(method, n):
    xs = 400.0 + 10 * np.arange(n)
    with pytest.raises(ArityError):
        interpolate_1d(xs, np.ones(n), method, xs[:1])


def test_natural_spline_accepts_three_knots():
    values = interpolate_1d([400, 410, 420], [1.0, 2.0, 3.0], NATURAL_SPLINE, [405])
    np.testing.assert_allclose(values, [1.5])


def test_non_increasing_knots_rejected():
    with pytest.raises(CubeValidationError, match='strictly increasing'):
        interpolate_1d([400, 410, 410, 420], [1.0, 2.0, 3.0, 4.0], LINEAR, [405])


def test_parse_method():
    assert InterpolationMethod.parse('Cubic', 'natural') == NATURAL_SPLINE
    assert NATURAL_SPLINE.label == 'cubic-natural'
    with pytest.raises(ValueError, match='unknown method'):
        InterpolationMethod.parse('lanczos')


@pytest.mark.parametrize('method', [LINEAR, QUADRATIC, CUBIC_SPLINE, NATURAL_SPLINE], ids=lambda m: m.label)
def test_linear_in_ordinates(method, rng):
    for _ in range(100):
        n = int(rng.integers(4, 20))
        xs = _random_knots(rng, n)
        ys1, ys2 = rng.normal(size=n), rng.normal(size=n)
        a, b = rng.normal(size=2) * 5
        queries = rng.uniform(xs[0], xs[-1], size=40)
        combined = interpolate_1d(xs, a * ys1 + b * ys2, method, queries)
        expected = a * interpolate_1d(xs, ys1, method, queries) + b * interpolate_1d(xs, ys2, method, queries)
        scale = np.max(np.abs(expected)) + 1.0
        np.testing.assert_allclose(combined, expected, rtol=1e-9, atol=1e-9 * scale)


def _dense_spline(xs, ys, boundary):
    """Solve the full 4(n-1) coefficient system of the interpolating cubic, shifted basis per piece."""
    m = xs.size - 1
    h = np.diff(xs)
    system = np.zeros((4 * m, 4 * m))
    rhs = np.zeros(4 * m)
    row = 0

    def put(piece, values):
        system[row, 4 * piece:4 * piece + 4] += values

    for i in range(m):
        put(i, [1, 0, 0, 0])
        rhs[row] = ys[i]
        row += 1
        put(i, [1, h[i], h[i] ** 2, h[i] ** 3])
        rhs[row] = ys[i + 1]
        row += 1
    for i in range(m - 1):
        put(i, [0, 1, 2 * h[i], 3 * h[i] ** 2])
        put(i + 1, [0, -1, 0, 0])
        row += 1
        put(i, [0, 0, 2, 6 * h[i]])
        put(i + 1, [0, 0, -2, 0])
        row += 1
    if boundary == 'natural':
        put(0, [0, 0, 2, 0])
        row += 1
        put(m - 1, [0, 0, 2, 6 * h[-1]])
    else:
        put(0, [0, 0, 0, 1])
        put(1, [0, 0, 0, -1])
        row += 1
        put(m - 2, [0, 0, 0, 1])
        put(m - 1, [0, 0, 0, -1])
    return np.linalg.solve(system, rhs).reshape(m, 4)


@pytest.mark.parametrize('boundary', ['notaknot', 'natural'])
def test_spline_matches_dense_solve(boundary, rng):
    for _ in range(50):
        n = int(rng.integers(5, 15))
        xs = _random_knots(rng, n)
        ys = rng.normal(size=n)
        spline = fit_cubic_spline(xs, ys, boundary)
        expected = _dense_spline(xs, ys, boundary)
        actual = np.stack([spline.a, spline.b, spline.c, spline.d], axis=1)
        scale = np.max(np.abs(expected)) + 1.0
        np.testing.assert_allclose(actual, expected, rtol=1e-7, atol=1e-7 * scale)


def test_natural_spline_midpoint_matches_dense_solve():
    xs, ys = np.array([0.0, 1.0, 2.0]), np.array([0.0, 1.0, 0.0])
    a, b, c, d = _dense_spline(xs, ys, 'natural')[0]
    dense = a + 0.5 * b + 0.25 * c + 0.125 * d
    value = fit_cubic_spline(xs, ys, 'natural')(0.5)[0]
    assert value == pytest.approx(dense, abs=1e-12)
    assert value == pytest.approx(0.6875, abs=1e-12)


def test_not_a_knot_reproduces_cubic_polynomial():
    xs, ys = [0.0, 1.0, 2.0, 3.0], [0.0, 1.0, 8.0, 27.0]
    spline = fit_cubic_spline(xs, ys)
    np.testing.assert_allclose(spline.to_monomial(), np.tile([0.0, 0.0, 0.0, 1.0], (3, 1)), atol=1e-12)
    np.testing.assert_allclose(interpolate_1d(xs, ys, CUBIC_SPLINE, [1.5]), [3.375], rtol=1e-12)


@pytest.mark.parametrize('boundary', ['notaknot', 'natural'])
def test_spline_numerical_derivatives_continuous_at_knots(boundary, rng):
    # Four-point one-sided differences are exact on a cubic piece up to rounding
    for _ in range(50):
        xs = _random_knots(rng, int(rng.integers(5, 15)))
        spline = fit_cubic_spline(xs, rng.normal(size=xs.size), boundary)
        step = np.min(np.diff(xs)) / 4
        interior = xs[1:-1]
        left = [spline(interior - k * step) for k in range(4)]
        right = [spline(interior + k * step) for k in range(4)]
        left_first = (11 * left[0] - 18 * left[1] + 9 * left[2] - 2 * left[3]) / (6 * step)
        right_first = -(11 * right[0] - 18 * right[1] + 9 * right[2] - 2 * right[3]) / (6 * step)
        left_second = (2 * left[0] - 5 * left[1] + 4 * left[2] - left[3]) / step ** 2
        right_second = (2 * right[0] - 5 * right[1] + 4 * right[2] - right[3]) / step ** 2
        scale_first = np.max(np.abs(right_first)) + 1.0
        scale_second = np.max(np.abs(right_second)) + 1.0
        np.testing.assert_allclose(left_first, right_first, rtol=1e-6, atol=1e-6 * scale_first)
        np.testing.assert_allclose(left_second, right_second, rtol=1e-6, atol=1e-6 * scale_second)


def test_pchip_flat_right_interval():
    np.testing.assert_allclose(interpolate_1d([0.0, 1.0, 2.0], [0.0, 1.0, 1.0], PCHIP, [1.5]), [1.0])


def test_pchip_stays_within_interval_bounds(rng):
    for _ in range(100):
        n = int(rng.integers(3, 15))
        xs = _random_knots(rng, n)
        ys = rng.normal(size=n)
        dense = np.linspace(xs[0], xs[-1], 2000)
        values = interpolate_1d(xs, ys, PCHIP, dense)
        i = np.clip(np.searchsorted(xs, dense, side='right') - 1, 0, n - 2)
        low, high = np.minimum(ys[i], ys[i + 1]), np.maximum(ys[i], ys[i + 1])
        assert np.all(values >= low - 1e-12) and np.all(values <= high + 1e-12)
