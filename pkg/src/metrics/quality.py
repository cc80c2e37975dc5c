"""
Quality measures for interpolated spectra.

* ``mse`` - plain mean squared error between two equally long vectors.
* ``cmse_pixel`` / ``cmse_cube`` - round-trip error: interpolate forward onto the target grid,
  back onto the source wavelengths inside the target span, and average the squared differences.
* ``trapezoid_area`` / ``surface_avg_difference`` - area under each pixel's spectrum and the
  average absolute area difference between a reference and its interpolation.
* ``ndvi_map`` / ``ndvi_mse`` - vegetation index from the nearest red and near-infrared bands.

Cube-level reductions use numpy's pairwise summation over a fixed pixel order.
"""
from dataclasses import dataclass
import logging

import numpy as np
import pandas as pd

from src.data_preparation.cube import SpectralCube, SpectralPixel, WavelengthGrid
from src.exceptions import NoCommonRangeError, ShapeMismatchError, SpectralCoverageError
from src.interpolation.kernels import ALL_METHODS, InterpolationMethod, interpolate_1d
from src.interpolation.resampling import resample_cube

logger = logging.getLogger(__name__)

NORMALIZATIONS = ('span', 'raw')

# Interpretation intervals of NDVI values, upper bounds inclusive
NDVI_CATEGORIES = ('water_or_inanimate', 'bare_soil', 'sparse_vegetation', 'dense_vegetation')
NDVI_BOUNDS = (0.0, 0.33, 0.66)


def mse(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.size != b.size:
        raise ShapeMismatchError(f"Cannot compare vectors of length {a.size} and {b.size}")
    if a.size == 0:
        raise ShapeMismatchError("Cannot compute the MSE of empty vectors")
    return float(np.mean((a - b) ** 2))


def _round_trip_errors(grid: WavelengthGrid, values: np.ndarray, target: WavelengthGrid,
                       method: InterpolationMethod) -> np.ndarray:
    """Per-column CMSE of ``values`` (bands[, pixels]) sampled on ``grid``."""
    forward = interpolate_1d(grid.wavelengths, values, method, target.wavelengths)
    inside = (grid.wavelengths >= target.min) & (grid.wavelengths <= target.max)
    if not np.any(inside):
        raise SpectralCoverageError(f"No source wavelength of {grid!r} lies inside the target span {target.span}")
    backward = interpolate_1d(target.wavelengths, forward, method, grid.wavelengths[inside])
    return np.mean((values[inside] - backward) ** 2, axis=0)


def cmse_pixel(pixel: SpectralPixel, target: WavelengthGrid, method: InterpolationMethod) -> float:
    """
    Custom MSE of one pixel: (p - I_b(I_f(p)))^2 averaged over the nw compared wavelengths.

    The backward pass only targets source wavelengths inside the target span, since the ones
    outside could only be reached by extrapolating.
    """
    values = np.asarray(pixel.values, dtype=np.float64)
    return float(_round_trip_errors(pixel.grid, values, target, method))


def cmse_per_pixel(cube: SpectralCube, target: WavelengthGrid, method: InterpolationMethod) -> np.ndarray:
    values = cube.pixels().astype(np.float64)
    return _round_trip_errors(cube.grid, values, target, method).reshape(cube.height, cube.width)


def cmse_cube(cube: SpectralCube, target: WavelengthGrid, method: InterpolationMethod) -> float:
    value = float(np.mean(cmse_per_pixel(cube, target, method)))
    logger.info("CMSE %s on %r: %.6g", method, target, value)
    return value


def trapezoid_area(grid, values) -> float | np.ndarray:
    """Area under a sampled curve with the trapezoidal rule; columns of a 2-D ``values`` are integrated separately."""
    xs = grid.wavelengths if isinstance(grid, WavelengthGrid) else np.asarray(grid, dtype=np.float64)
    ys = np.asarray(values, dtype=np.float64)
    if ys.shape[:1] != xs.shape:
        raise ShapeMismatchError(f"{ys.shape[0] if ys.ndim else 0} values for {xs.size} wavelengths")
    if xs.size < 2:
        raise ShapeMismatchError("The trapezoidal rule needs at least 2 points")
    h = np.diff(xs).reshape((-1,) + (1,) * (ys.ndim - 1))
    area = np.sum(h * (ys[:-1] + ys[1:]) / 2, axis=0)
    return float(area) if ys.ndim == 1 else area


def _common_span(ref: SpectralCube, other: SpectralCube) -> tuple:
    lower = max(ref.grid.min, other.grid.min)
    upper = min(ref.grid.max, other.grid.max)
    if not lower < upper:
        raise NoCommonRangeError({'reference': ref.grid.span, 'interpolated': other.grid.span})
    return lower, upper


def _clipped_areas(cube: SpectralCube, lower: float, upper: float) -> np.ndarray:
    keep = (cube.grid.wavelengths >= lower) & (cube.grid.wavelengths <= upper)
    if np.count_nonzero(keep) < 2:
        raise NoCommonRangeError({'clipped': (lower, upper)})
    return trapezoid_area(cube.grid.wavelengths[keep], cube.pixels()[keep].astype(np.float64))


def surface_avg_difference(ref: SpectralCube, interp: SpectralCube, normalization: str = 'span') -> float:
    """
    Mean over pixels of |area(ref pixel) - area(interpolated pixel)| on the common wavelength span.

    With ``normalization='span'`` the mean is divided by the span length in nm, which puts it in
    intensity units; ``'raw'`` keeps intensity x nm.
    """
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"Unknown normalization {normalization!r}, expected one of {NORMALIZATIONS}")
    if (ref.width, ref.height) != (interp.width, interp.height):
        raise ShapeMismatchError(
            f"Reference is {ref.width}x{ref.height} but interpolation is {interp.width}x{interp.height}")
    lower, upper = _common_span(ref, interp)
    difference = np.mean(np.abs(_clipped_areas(ref, lower, upper) - _clipped_areas(interp, lower, upper)))
    if normalization == 'span':
        difference = difference / (upper - lower)
    return float(difference)


@dataclass(frozen=True)
class NdviConfig:
    red_target_nm: float = 665.0
    nir_target_nm: float = 830.0
    # Farthest a selected band may sit from its target wavelength
    max_offset_nm: float = 10.0

    def __post_init__(self):
        if not self.nir_target_nm > self.red_target_nm:
            raise ValueError(
                f"NIR target ({self.nir_target_nm} nm) must exceed RED target ({self.red_target_nm} nm)")
        if self.max_offset_nm < 0:
            raise ValueError("max_offset_nm must be >= 0")

    def to_dict(self) -> dict:
        return {'red_target_nm': self.red_target_nm, 'nir_target_nm': self.nir_target_nm,
                'max_offset_nm': self.max_offset_nm, 'selection': 'nearest-band'}


@dataclass(frozen=True, eq=False)
class NdviMap:
    width: int
    height: int
    values: np.ndarray
    red_nm: float = float('nan')
    nir_nm: float = float('nan')


def _select_band(grid: WavelengthGrid, target_nm: float, max_offset_nm: float, role: str) -> int:
    index = grid.nearest_index(target_nm)
    offset = abs(grid.wavelengths[index] - target_nm)
    if offset > max_offset_nm:
        raise SpectralCoverageError(
            f"No {role} band within {max_offset_nm:g} nm of {target_nm:g} nm "
            f"(grid spans {grid.min:g}-{grid.max:g} nm, nearest {grid.wavelengths[index]:g} nm)")
    return index


def ndvi_map(cube: SpectralCube, config: NdviConfig = NdviConfig()) -> NdviMap:
    """NDVI = (NIR - RED) / (NIR + RED) per pixel, using the bands nearest to the configured targets; 0 where NIR + RED = 0."""
    red_index = _select_band(cube.grid, config.red_target_nm, config.max_offset_nm, 'RED')
    nir_index = _select_band(cube.grid, config.nir_target_nm, config.max_offset_nm, 'NIR')
    red = cube.data[red_index].astype(np.float64)
    nir = cube.data[nir_index].astype(np.float64)
    numerator = nir - red
    denominator = nir + red
    safe = denominator != 0
    values = np.zeros_like(denominator)
    np.divide(numerator, denominator, out=values, where=safe)
    return NdviMap(cube.width, cube.height, values,
                   float(cube.grid.wavelengths[red_index]), float(cube.grid.wavelengths[nir_index]))


def ndvi_mse(ref: SpectralCube, interp: SpectralCube, config: NdviConfig = NdviConfig()) -> float:
    if (ref.width, ref.height) != (interp.width, interp.height):
        raise ShapeMismatchError(
            f"Reference is {ref.width}x{ref.height} but interpolation is {interp.width}x{interp.height}")
    return mse(ndvi_map(ref, config).values, ndvi_map(interp, config).values)


def classify_ndvi(values) -> np.ndarray:
    """Category index into NDVI_CATEGORIES for every value."""
    return np.digitize(np.asarray(values, dtype=np.float64), NDVI_BOUNDS, right=True)


def ndvi_summary(ndvi: NdviMap) -> dict:
    categories = classify_ndvi(ndvi.values)
    counts = np.bincount(categories.reshape(-1), minlength=len(NDVI_CATEGORIES))
    total = categories.size
    return {
        'red_nm': ndvi.red_nm,
        'nir_nm': ndvi.nir_nm,
        'mean': float(np.mean(ndvi.values)),
        'min': float(np.min(ndvi.values)),
        'max': float(np.max(ndvi.values)),
        'fractions': {name: float(count / total) for name, count in zip(NDVI_CATEGORIES, counts)},
    }


def compare_methods(cube: SpectralCube, target: WavelengthGrid, metric: str = 'cmse',
                    methods=ALL_METHODS, normalization: str = 'span',
                    ndvi_config: NdviConfig = NdviConfig()) -> pd.DataFrame:
    """
    One metric for every interpolation method on a single cube, one row per method.

    The cube on its native grid is the reference; 'surface' and 'mse-ndvi' compare it to its
    resampled version.
    """
    rows = []
    for method in methods:
        if metric == 'cmse':
            value = cmse_cube(cube, target, method)
        elif metric == 'surface':
            value = surface_avg_difference(cube, resample_cube(cube, target, method), normalization)
        elif metric == 'mse-ndvi':
            value = ndvi_mse(cube, resample_cube(cube, target, method), ndvi_config)
        else:
            raise ValueError(f"Unknown metric {metric!r}")
        rows.append({'method': method.label, 'metric': metric, 'value': value})
    return pd.DataFrame(rows, columns=['method', 'metric', 'value'])
