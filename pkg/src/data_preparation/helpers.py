from dataclasses import dataclass, field
import logging

import numpy as np
import pandas as pd

from src.config import UNKNOWN
from src.data_preparation.cube import DatasetManifest, LabelMap, SpectralCube, WavelengthGrid
from src.exceptions import NoCommonRangeError, ShapeMismatchError
from src.interpolation.kernels import CUBIC_SPLINE, InterpolationMethod

logger = logging.getLogger(__name__)

FEATURE_PREFIX = 'band_'


@dataclass(frozen=True)
class FromReference:
    """Use the reference dataset's own wavelengths."""


@dataclass(frozen=True)
class ExplicitGrid:
    start: float
    step: float
    stop: float

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"Grid step must be > 0, got {self.step}")
        if self.stop < self.start:
            raise ValueError(f"Grid stop {self.stop} lies below start {self.start}")

    @classmethod
    def parse(cls, text: str) -> 'ExplicitGrid':
        """Parse ``START:STEP:STOP``, e.g. ``430:4:690``."""
        parts = text.split(':')
        if len(parts) != 3:
            raise ValueError(f"Grid must be START:STEP:STOP, got {text!r}")
        try:
            start, step, stop = (float(p) for p in parts)
        except ValueError:
            raise ValueError(f"Grid must be START:STEP:STOP with numbers, got {text!r}")
        return cls(start, step, stop)

    def to_grid(self) -> WavelengthGrid:
        return WavelengthGrid.from_range(self.start, self.step, self.stop)


@dataclass(frozen=True)
class FusionConfig:
    method: InterpolationMethod = CUBIC_SPLINE
    grid_rule: FromReference | ExplicitGrid = field(default_factory=FromReference)
    max_wavelength_cap: float | None = None
    seed: int = 0
    train_fraction: float = 0.8
    # Min-max rescaling of each dataset after resampling; off unless asked for
    normalize: bool = False
    workers: int | None = None

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    def describe(self) -> dict:
        rule = self.grid_rule
        return {
            'method': self.method.kind.value,
            'boundary': self.method.boundary.value,
            'grid_rule': 'reference' if isinstance(rule, FromReference)
            else {'start': rule.start, 'step': rule.step, 'stop': rule.stop},
            'cap': self.max_wavelength_cap,
            'seed': self.seed,
            'train_fraction': self.train_fraction,
            'normalize': self.normalize,
        }


def common_span(grids: dict, cap: float | None = None) -> tuple:
    """
    Wavelength range shared by every dataset, optionally capped from above.

    Raises NoCommonRangeError listing each dataset's span when the intersection is empty.
    """
    lower = max(g.min for g in grids.values())
    upper = min(g.max for g in grids.values())
    if cap is not None:
        upper = min(upper, cap)
    if lower > upper:
        raise NoCommonRangeError({name: g.span for name, g in grids.items()})
    return lower, upper


def derive_reference_grid(manifest: DatasetManifest, config: FusionConfig, grids: dict | None = None) -> WavelengthGrid:
    """
    Common wavelength grid every dataset is resampled onto.

    The base grid (the reference dataset's wavelengths, or the explicit arithmetic grid) is clipped
    to [max of dataset minima, min(cap, min of dataset maxima)] so no dataset has to extrapolate.
    ``grids`` maps dataset names to their wavelength grids; by default they are read from the cube headers.
    """
    if grids is None:
        from src.data_preparation.dataloader import read_cube_grid
        grids = {e.name: read_cube_grid(e.cube_path) for e in manifest.entries}

    lower, upper = common_span(grids, config.max_wavelength_cap)
    if isinstance(config.grid_rule, ExplicitGrid):
        base = config.grid_rule.to_grid()
    else:
        base = grids[manifest.reference_name]
    grid = base.clip(lower, upper)
    if len(grid) == 0:
        raise NoCommonRangeError({name: g.span for name, g in grids.items()})
    logger.info("Reference grid: %d wavelengths, %g-%g nm", len(grid), grid.min, grid.max)
    return grid


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Labeled pixels pooled from one or more fused datasets, one row per pixel."""
    grid: WavelengthGrid
    features: np.ndarray
    labels: np.ndarray
    provenance: np.ndarray

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float32).reshape(-1, len(self.grid))
        labels = np.asarray(self.labels, dtype=np.int32).reshape(-1)
        provenance = np.asarray(self.provenance, dtype=object).reshape(-1)
        if not features.shape[0] == labels.size == provenance.size:
            raise ShapeMismatchError(
                f"{features.shape[0]} feature rows, {labels.size} labels, {provenance.size} provenance entries")
        if np.any(labels == UNKNOWN):
            raise ValueError("Sample sets cannot hold unknown (class 0) pixels")
        object.__setattr__(self, 'features', features)
        object.__setattr__(self, 'labels', labels)
        object.__setattr__(self, 'provenance', provenance)

    def __len__(self):
        return self.labels.size

    def subset(self, indices) -> 'SampleSet':
        indices = np.asarray(indices, dtype=np.int64)
        return SampleSet(self.grid, self.features[indices], self.labels[indices], self.provenance[indices])

    def provenance_counts(self) -> dict:
        names, counts = np.unique(self.provenance.astype(str), return_counts=True)
        return dict(zip(names.tolist(), counts.tolist()))

    def to_frame(self) -> pd.DataFrame:
        columns = [FEATURE_PREFIX + np.format_float_positional(w, trim='-') for w in self.grid.wavelengths]
        frame = pd.DataFrame(self.features, columns=columns)
        frame['label'] = self.labels
        frame['dataset'] = self.provenance
        return frame

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> 'SampleSet':
        band_columns = [c for c in frame.columns if c.startswith(FEATURE_PREFIX)]
        if not band_columns or 'label' not in frame.columns:
            raise ShapeMismatchError("Sample table needs band_<nm> columns and a label column")
        grid = WavelengthGrid([float(c[len(FEATURE_PREFIX):]) for c in band_columns])
        provenance = frame['dataset'].astype(str).to_numpy() if 'dataset' in frame.columns \
            else np.full(len(frame), 'unknown', dtype=object)
        return cls(grid, frame[band_columns].to_numpy(dtype=np.float32),
                   frame['label'].to_numpy(dtype=np.int32), provenance)


@dataclass(frozen=True, eq=False)
class FusedDataset:
    name: str
    cube: SpectralCube
    labels: LabelMap | None = None


def build_sample_set(fused: list, datasets_selected) -> SampleSet:
    """
    Pool every labeled (class != 0) pixel of the selected fused datasets, recording where each came from.
    """
    selected = list(datasets_selected)
    if not selected:
        raise ValueError("No datasets selected for the sample set")
    by_name = {f.name: f for f in fused}
    missing = [name for name in selected if name not in by_name]
    if missing:
        raise ValueError(f"Unknown datasets selected: {missing}")

    chosen = [f for f in fused if f.name in selected]
    grid = chosen[0].cube.grid
    features, labels, provenance = [], [], []
    for dataset in chosen:
        if dataset.cube.grid != grid:
            raise ShapeMismatchError(f"Dataset {dataset.name} is not on the shared fused grid")
        if dataset.labels is None:
            raise ValueError(f"Dataset {dataset.name} has no labels")
        classes = dataset.labels.classes.reshape(-1)
        labeled = np.flatnonzero(classes != UNKNOWN)
        features.append(dataset.cube.pixels()[:, labeled].T)
        labels.append(classes[labeled])
        provenance.append(np.full(labeled.size, dataset.name, dtype=object))
        logger.info("%s: %d labeled pixels", dataset.name, labeled.size)

    sample_set = SampleSet(grid, np.concatenate(features), np.concatenate(labels), np.concatenate(provenance))
    if len(sample_set) == 0:
        raise ValueError(f"Selected datasets {selected} have no labeled pixels")
    return sample_set
