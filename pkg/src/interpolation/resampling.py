import logging

import numpy as np
from joblib import Parallel, delayed

from src.config import resolve_workers
from src.data_preparation.cube import SpectralCube, SpectralPixel, WavelengthGrid
from src.exceptions import ExtrapolationError
from src.interpolation.kernels import InterpolationMethod, interpolate_1d

logger = logging.getLogger(__name__)


def resample_pixel(pixel: SpectralPixel, target: WavelengthGrid, method: InterpolationMethod) -> SpectralPixel:
    """Interpolate one spectral signature onto the target wavelengths."""
    values = interpolate_1d(pixel.grid.wavelengths, pixel.values, method, target.wavelengths)
    return SpectralPixel(target, values.astype(np.float32))


def _resample_chunk(xs, columns, method, target, first_pixel, width):
    try:
        return interpolate_1d(xs, columns, method, target)
    except ExtrapolationError as e:
        row, col = divmod(first_pixel, width)
        raise ExtrapolationError(e.query, e.span, pixel=(row, col)) from e


def resample_cube(cube: SpectralCube, target: WavelengthGrid, method: InterpolationMethod,
                  workers: int | None = None) -> SpectralCube:
    """
    Resample every pixel of a cube onto the target grid.

    Pixels are split into contiguous chunks handled by a joblib thread pool. Each pixel is
    computed with the same elementwise operations whatever chunk it lands in, so the output does
    not depend on the worker count.
    """
    workers = resolve_workers(workers)
    pixels = cube.pixels()
    n_pixels = pixels.shape[1]
    bounds = np.linspace(0, n_pixels, min(workers, n_pixels) + 1).astype(int)
    chunks = [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    logger.debug("Resampling %s onto %r with %s in %d chunks", cube, target, method, len(chunks))

    xs = cube.grid.wavelengths
    results = Parallel(n_jobs=len(chunks), prefer='threads')(
        delayed(_resample_chunk)(xs, pixels[:, lo:hi], method, target.wavelengths, lo, cube.width)
        for lo, hi in chunks
    )
    data = np.concatenate(results, axis=1).astype(np.float32)
    return SpectralCube(cube.width, cube.height, target, data.reshape(len(target), cube.height, cube.width))
