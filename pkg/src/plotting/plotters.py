from dataclasses import dataclass, field
import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd
import plotly.graph_objects as go

from src.data_preparation.cube import SpectralCube, checked_cube, pixel_at

logger = logging.getLogger(__name__)

PIXEL_2D = 'pixel2d'
SURFACE_3D = 'surface3d'
REDUCTIONS = ('sum', 'mean')


@dataclass(frozen=True, eq=False)
class PlotSeries:
    name: str
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class PlotBundle:
    """Plot-ready data: named 2-D pixel curves or a single 3-D surface."""
    kind: str
    series: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in (PIXEL_2D, SURFACE_3D):
            raise ValueError(f"Unknown plot kind {self.kind!r}")
        for s in self.series:
            if self.kind == PIXEL_2D and len(s.x) != len(s.y):
                raise ValueError(f"Series {s.name}: {len(s.x)} x values, {len(s.y)} y values")
            if self.kind == SURFACE_3D and s.z.shape != (len(s.y), len(s.x)):
                raise ValueError(f"Series {s.name}: z shape {s.z.shape} does not match ({len(s.y)}, {len(s.x)})")

    def to_dict(self) -> dict:
        series = []
        for s in self.series:
            entry = {'name': s.name, 'x': np.asarray(s.x, dtype=np.float64).tolist(),
                     'y': np.asarray(s.y, dtype=np.float64).tolist()}
            if s.z is not None:
                entry['z'] = np.asarray(s.z, dtype=np.float64).tolist()
            series.append(entry)
        return {'kind': self.kind, 'metadata': self.metadata, 'series': series}

    def to_frame(self) -> pd.DataFrame:
        """Long table: ``series, x, y`` for pixel plots, ``series, row, col, z`` for surfaces."""
        frames = []
        for s in self.series:
            if self.kind == PIXEL_2D:
                frames.append(pd.DataFrame({'series': s.name,
                                            'x': np.asarray(s.x, dtype=np.float64),
                                            'y': np.asarray(s.y, dtype=np.float64)}))
            else:
                rows, cols = np.meshgrid(s.y, s.x, indexing='ij')
                frames.append(pd.DataFrame({'series': s.name, 'row': rows.ravel().astype(np.int64),
                                            'col': cols.ravel().astype(np.int64),
                                            'z': np.asarray(s.z, dtype=np.float64).ravel()}))
        return pd.concat(frames, ignore_index=True)


def export_pixel_plot(pixels: list, metadata: dict | None = None) -> PlotBundle:
    """
    One curve per named pixel (reference first, then each interpolation): wavelength vs intensity.

    Args:
        pixels (list): (name, SpectralPixel) pairs
    """
    if not pixels:
        raise ValueError("Need at least one pixel to plot")
    series = tuple(PlotSeries(name, pixel.grid.wavelengths, np.asarray(pixel.values)) for name, pixel in pixels)
    return PlotBundle(PIXEL_2D, series, dict(metadata or {}))


def export_surface_plot(cube: SpectralCube, band_reduction: str = 'sum', name: str = 'surface',
                        metadata: dict | None = None) -> PlotBundle:
    """
    Per-pixel intensity reduced over the bands, shaped (height, width).
    """
    if band_reduction not in REDUCTIONS:
        raise ValueError(f"band_reduction must be one of {REDUCTIONS}, got {band_reduction!r}")
    checked_cube(cube)
    data = cube.data.astype(np.float64)
    z = data.sum(axis=0) if band_reduction == 'sum' else data.mean(axis=0)
    series = PlotSeries(name, np.arange(cube.width), np.arange(cube.height), z)
    return PlotBundle(SURFACE_3D, (series,), {'band_reduction': band_reduction, **(metadata or {})})


def select_random_pixel(cube: SpectralCube, seed: int) -> tuple:
    """Seeded (row, col) pick."""
    rng = np.random.Generator(np.random.PCG64(seed))
    return int(rng.integers(cube.height)), int(rng.integers(cube.width))


def write_bundle(bundle: PlotBundle, path) -> Path:
    """Write as CSV or JSON depending on the suffix."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == '.csv':
        bundle.to_frame().to_csv(path, index=False)
    elif path.suffix == '.json':
        path.write_text(json.dumps(bundle.to_dict(), sort_keys=True, indent=2) + '\n', encoding='utf-8')
    else:
        raise ValueError(f"Plot output must end in .csv or .json, got {path.name}")
    logger.info("Wrote %s plot data to %s", bundle.kind, path)
    return path


def read_bundle_frame(path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision='round_trip')


def plot_pixel_bundle(bundle: PlotBundle) -> go.Figure:
    """
    Reference and interpolated spectra of one pixel as line traces.
    """
    fig = go.Figure()
    for s in bundle.series:
        fig.add_trace(go.Scatter(x=s.x, y=s.y, mode='lines+markers', name=s.name))
    title = 'Reference and Interpolated Pixel'
    if 'row' in bundle.metadata and 'col' in bundle.metadata:
        title += f" (row {bundle.metadata['row']}, col {bundle.metadata['col']})"
    fig.update_layout(title=title, xaxis_title='Wavelength (nm)', yaxis_title='Intensity',
                      plot_bgcolor='white', hovermode='x unified')
    return fig


def plot_surface_bundle(bundle: PlotBundle) -> go.Figure:
    s = bundle.series[0]
    fig = go.Figure(data=[go.Surface(x=s.x, y=s.y, z=s.z, colorscale='Viridis')])
    fig.update_layout(title=f"Pixels Surface ({s.name}, {bundle.metadata.get('band_reduction', 'sum')})",
                      scene=dict(xaxis_title='Column', yaxis_title='Row', zaxis_title='Intensity'))
    return fig


def plot_bundle(bundle: PlotBundle) -> go.Figure:
    return plot_pixel_bundle(bundle) if bundle.kind == PIXEL_2D else plot_surface_bundle(bundle)


def pixel_series(named_cubes: list, row: int, col: int) -> list:
    """(name, SpectralPixel) pairs for the same pixel across several cubes."""
    return [(name, pixel_at(cube, row, col)) for name, cube in named_cubes]
