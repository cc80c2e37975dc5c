"""
Shared data types for spectral fusion: wavelength grids, cubes, pixels, label maps and manifests.

Every other module consumes these. Objects are immutable once built; arrays are stored
read-only so that several workers can read the same cube concurrently.
"""
from dataclasses import dataclass, field
from types import MappingProxyType
import logging

import numpy as np

from src.config import UNKNOWN, VEGETATION, NON_VEGETATION, MERGED_CLASSES
from src.exceptions import (
    ContainerFormatError,
    CubeValidationError,
    PixelIndexError,
    UnmappedClassError,
)

logger = logging.getLogger(__name__)

# Colors of the merged ground truth: black unknown, green vegetation, red non-vegetation
MERGED_CLASS_COLORS = {
    UNKNOWN: (0, 0, 0),
    VEGETATION: (0, 255, 0),
    NON_VEGETATION: (255, 0, 0),
}

# Merge tables for the public labeled scenes. 0 is the unlabeled background everywhere.
KNOWN_MERGE_TABLES = {
    # Asphalt, Meadows, Gravel, Trees, Painted metal sheets, Bare soil, Bitumen, Bricks, Shadows
    'pavia_university': {0: 0, 1: 2, 2: 1, 3: 2, 4: 1, 5: 2, 6: 2, 7: 2, 8: 2, 9: 2},
    # Scrub ... Salt marsh are vegetated; Mud flats and Water are not
    'ksc': {0: 0, **{i: 1 for i in range(1, 12)}, 12: 2, 13: 2},
    # Water, Firescar and Exposed soils are the only non-vegetated classes
    'botswana': {0: 0, **{i: 1 for i in range(1, 15)}, 1: 2, 7: 2, 14: 2},
    # Buildings-Grass-Trees-Drives is mixed, so it stays unknown
    'indian_pines': {0: 0, **{i: 1 for i in range(1, 15)}, 15: 0, 16: 2},
}


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class Violation:
    """One broken invariant, with the first offending index when there is one."""
    invariant: str
    index: object = None
    detail: str = ''

    def __str__(self):
        where = f" at index {self.index}" if self.index is not None else ''
        extra = f": {self.detail}" if self.detail else ''
        return f"{self.invariant}{where}{extra}"


@dataclass(frozen=True, eq=False)
class WavelengthGrid:
    """Ordered wavelengths in nanometers."""
    wavelengths: np.ndarray

    def __post_init__(self):
        values = np.array(self.wavelengths, dtype=np.float64).reshape(-1)
        object.__setattr__(self, 'wavelengths', _frozen(values))

    @classmethod
    def arithmetic(cls, start: float, step: float, count: int) -> 'WavelengthGrid':
        return cls(start + step * np.arange(count, dtype=np.float64))

    @classmethod
    def from_range(cls, start: float, step: float, stop: float) -> 'WavelengthGrid':
        """Arithmetic grid from start to stop inclusive (stop is included when it lies on the grid)."""
        if step <= 0:
            raise ValueError(f"Grid step must be > 0, got {step}")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return cls.arithmetic(start, step, max(count, 0))

    def __len__(self):
        return self.wavelengths.size

    def __iter__(self):
        return iter(self.wavelengths.tolist())

    def __eq__(self, other):
        if not isinstance(other, WavelengthGrid):
            return NotImplemented
        return np.array_equal(self.wavelengths, other.wavelengths)

    def __hash__(self):
        return hash(self.wavelengths.tobytes())

    def __repr__(self):
        if len(self) == 0:
            return 'WavelengthGrid([])'
        return f"WavelengthGrid({len(self)} bands, {self.min:g}-{self.max:g} nm)"

    @property
    def min(self) -> float:
        return float(self.wavelengths[0])

    @property
    def max(self) -> float:
        return float(self.wavelengths[-1])

    @property
    def span(self) -> tuple:
        return self.min, self.max

    def clip(self, lower: float, upper: float) -> 'WavelengthGrid':
        """Wavelengths inside [lower, upper]."""
        keep = (self.wavelengths >= lower) & (self.wavelengths <= upper)
        return WavelengthGrid(self.wavelengths[keep])

    def nearest_index(self, wavelength: float) -> int:
        return int(np.argmin(np.abs(self.wavelengths - wavelength)))

    def to_list(self) -> list:
        return self.wavelengths.tolist()


def validate_grid(grid: WavelengthGrid) -> list:
    report = []
    values = grid.wavelengths
    if values.size < 2:
        report.append(Violation('grid length >= 2', None, f"got {values.size} wavelengths"))
    bad = np.flatnonzero(~np.isfinite(values) | (values <= 0))
    if bad.size:
        report.append(Violation('finite positive wavelengths', int(bad[0]), f"value {values[bad[0]]}"))
    if values.size >= 2:
        steps = np.diff(values)
        not_increasing = np.flatnonzero(~(steps > 0))
        if not_increasing.size:
            i = int(not_increasing[0]) + 1
            report.append(Violation('strictly increasing', i, f"{values[i - 1]:g} followed by {values[i]:g}"))
    return report


@dataclass(frozen=True, eq=False)
class SpectralPixel:
    grid: WavelengthGrid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'values', _frozen(np.array(self.values).reshape(-1)))

    def __len__(self):
        return self.values.size


@dataclass(frozen=True, eq=False)
class SpectralCube:
    """
    A width x height x bands image with its wavelength axis.

    Intensities are stored as float32, band-major then row-major: the flat position of
    (band, row, col) is band * (width * height) + row * width + col.
    """
    width: int
    height: int
    grid: WavelengthGrid
    data: np.ndarray

    def __post_init__(self):
        if not isinstance(self.grid, WavelengthGrid):
            object.__setattr__(self, 'grid', WavelengthGrid(self.grid))
        data = np.array(self.data, dtype=np.float32)
        if data.size == self.width * self.height * len(self.grid):
            data = data.reshape(len(self.grid), self.height, self.width)
        object.__setattr__(self, 'data', _frozen(data))

    @property
    def bands(self) -> int:
        return len(self.grid)

    @property
    def shape(self) -> tuple:
        return self.bands, self.height, self.width

    def pixels(self) -> np.ndarray:
        """Intensities as a (bands, height * width) matrix, one column per pixel."""
        return self.data.reshape(self.bands, self.height * self.width)

    def with_data(self, grid: WavelengthGrid, data: np.ndarray) -> 'SpectralCube':
        return SpectralCube(self.width, self.height, grid, data)

    def __repr__(self):
        return f"SpectralCube({self.width}x{self.height}, {self.grid!r})"


def validate_cube(cube: SpectralCube) -> list:
    """
    Check every cube invariant and report the violations; never raises.

    An empty list means the cube is well formed.
    """
    report = validate_grid(cube.grid)
    if cube.width < 1 or cube.height < 1:
        report.append(Violation('positive dimensions', None, f"width={cube.width}, height={cube.height}"))
    expected = cube.width * cube.height * len(cube.grid)
    if cube.data.size != expected:
        report.append(Violation('data length', None, f"expected {expected} values, got {cube.data.size}"))
    not_finite = np.flatnonzero(~np.isfinite(cube.data.reshape(-1)))
    if not_finite.size:
        report.append(Violation('finite intensities', int(not_finite[0])))
    return report


def checked_cube(cube: SpectralCube) -> SpectralCube:
    report = validate_cube(cube)
    if report:
        raise CubeValidationError(report)
    return cube


def pixel_at(cube: SpectralCube, row: int, col: int) -> SpectralPixel:
    if not 0 <= row < cube.height:
        raise PixelIndexError('row', row, cube.height)
    if not 0 <= col < cube.width:
        raise PixelIndexError('col', col, cube.width)
    return SpectralPixel(cube.grid, cube.data[:, row, col].copy())


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Per-pixel class raster with the table that merges source classes into {0, 1, 2}."""
    width: int
    height: int
    classes: np.ndarray
    merge_table: dict = field(default_factory=dict)

    def __post_init__(self):
        classes = np.array(self.classes, dtype=np.int32).reshape(self.height, self.width)
        object.__setattr__(self, 'classes', _frozen(classes))
        table = {int(k): int(v) for k, v in dict(self.merge_table).items()}
        object.__setattr__(self, 'merge_table', MappingProxyType(table))

    def __eq__(self, other):
        if not isinstance(other, LabelMap):
            return NotImplemented
        return (self.width == other.width and self.height == other.height
                and np.array_equal(self.classes, other.classes)
                and dict(self.merge_table) == dict(other.merge_table))

    __hash__ = None


IDENTITY_MERGE_TABLE = {c: c for c in MERGED_CLASSES}


def validate_labels(labels: LabelMap) -> list:
    report = []
    for class_id in np.unique(labels.classes).tolist():
        if class_id not in labels.merge_table:
            report.append(Violation('class id in merge table', class_id, f"unmapped class {class_id}"))
    for source, target in labels.merge_table.items():
        if target not in MERGED_CLASSES:
            report.append(Violation('merged values in {0, 1, 2}', source, f"maps to {target}"))
    return report


def merge_labels(labels: LabelMap) -> LabelMap:
    """Collapse source classes into unknown / vegetation / non-vegetation using the merge table."""
    ids, inverse = np.unique(labels.classes, return_inverse=True)
    for class_id in ids.tolist():
        if class_id not in labels.merge_table:
            raise UnmappedClassError(class_id)
    lookup = np.array([labels.merge_table[i] for i in ids.tolist()], dtype=np.int32)
    bad = [v for v in lookup.tolist() if v not in MERGED_CLASSES]
    if bad:
        raise CubeValidationError([Violation('merged values in {0, 1, 2}', None, f"got {bad[0]}")])
    merged = lookup[inverse.reshape(-1)].reshape(labels.height, labels.width)
    return LabelMap(labels.width, labels.height, merged, IDENTITY_MERGE_TABLE)


def merged_label_rgb(labels: LabelMap) -> np.ndarray:
    """RGB rendering (height, width, 3) of a merged label map."""
    merged = merge_labels(labels).classes
    palette = np.array([MERGED_CLASS_COLORS[c] for c in MERGED_CLASSES], dtype=np.uint8)
    return palette[merged]


@dataclass(frozen=True)
class ManifestEntry:
    cube_path: str
    name: str
    native_resolution_nm: float
    label_path: str | None = None


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple
    reference_name: str

    def __post_init__(self):
        object.__setattr__(self, 'entries', tuple(self.entries))
        if not self.entries:
            raise ContainerFormatError('entries', 'manifest lists no datasets')
        for i, entry in enumerate(self.entries):
            if not isinstance(entry.cube_path, str) or not entry.cube_path:
                raise ContainerFormatError(f'entries[{i}].cube_path', 'must be a non-empty string')
            if entry.label_path is not None and (not isinstance(entry.label_path, str) or not entry.label_path):
                raise ContainerFormatError(f'entries[{i}].label_path', 'must be a non-empty string')
        matches = [e for e in self.entries if e.name == self.reference_name]
        if len(matches) != 1:
            raise ContainerFormatError(
                'reference_name',
                f"{self.reference_name!r} matches {len(matches)} entries, expected exactly one")

    @property
    def reference(self) -> ManifestEntry:
        return next(e for e in self.entries if e.name == self.reference_name)

    @property
    def names(self) -> list:
        return [e.name for e in self.entries]


_ENTRY_FIELDS = {'cube_path', 'label_path', 'name', 'native_resolution_nm'}
_MANIFEST_FIELDS = {'entries', 'reference_name'}


def manifest_from_dict(document: dict) -> DatasetManifest:
    """
    Build a manifest from its parsed JSON document.

    The field set is closed: unknown fields anywhere are rejected, naming the field.
    """
    if not isinstance(document, dict):
        raise ContainerFormatError('manifest', 'expected a JSON object')
    unknown = sorted(set(document) - _MANIFEST_FIELDS)
    if unknown:
        raise ContainerFormatError(unknown[0], 'unknown manifest field')
    for required in sorted(_MANIFEST_FIELDS):
        if required not in document:
            raise ContainerFormatError(required, 'missing manifest field')
    if not isinstance(document['entries'], list):
        raise ContainerFormatError('entries', 'expected a list')

    entries = []
    for i, raw in enumerate(document['entries']):
        if not isinstance(raw, dict):
            raise ContainerFormatError(f'entries[{i}]', 'expected an object')
        unknown = sorted(set(raw) - _ENTRY_FIELDS)
        if unknown:
            raise ContainerFormatError(f'entries[{i}].{unknown[0]}', 'unknown entry field')
        for required in ('cube_path', 'name', 'native_resolution_nm'):
            if required not in raw:
                raise ContainerFormatError(f'entries[{i}].{required}', 'missing entry field')
        resolution = raw['native_resolution_nm']
        if isinstance(resolution, bool) or not isinstance(resolution, (int, float)) or resolution <= 0:
            raise ContainerFormatError(f'entries[{i}].native_resolution_nm', 'must be a positive number')
        entries.append(ManifestEntry(
            cube_path=raw['cube_path'],
            name=raw['name'],
            native_resolution_nm=float(resolution),
            label_path=raw.get('label_path'),
        ))
    if not isinstance(document['reference_name'], str):
        raise ContainerFormatError('reference_name', 'must be a string')
    return DatasetManifest(tuple(entries), document['reference_name'])
