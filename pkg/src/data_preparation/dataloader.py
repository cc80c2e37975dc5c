from dataclasses import replace
import hashlib
import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from src.data_preparation.cube import (
    LabelMap,
    SpectralCube,
    WavelengthGrid,
    checked_cube,
    manifest_from_dict,
    validate_cube,
    validate_grid,
)
from src.exceptions import ContainerFormatError

logger = logging.getLogger(__name__)

FUSED_DATA_DIR = Path('data/fused')

CUBE_SUFFIX = '.scube'
LABEL_SUFFIX = '.slabel'

_CUBE_HEADER_FIELDS = {'width', 'height', 'wavelengths', 'dtype', 'layout', 'byte_order'}
_LABEL_HEADER_FIELDS = {'width', 'height', 'dtype', 'byte_order', 'merge_table'}


def _container_paths(path, suffix: str) -> tuple:
    """
    Header and payload paths of a container.

    Accepts the base name or either of the two files: ``scene``, ``scene.scube.json`` and
    ``scene.scube.bin`` all name the same cube.
    """
    path = Path(path)
    name = path.name
    for ending in (f'{suffix}.json', f'{suffix}.bin', suffix):
        if name.endswith(ending):
            name = name[:-len(ending)]
            break
    base = path.with_name(name)
    return base.with_name(name + f'{suffix}.json'), base.with_name(name + f'{suffix}.bin')


def _dump_json(document: dict) -> str:
    return json.dumps(document, sort_keys=True, indent=2)


def _read_header(header_path: Path, fields: set) -> dict:
    try:
        header = json.loads(header_path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as e:
        raise ContainerFormatError('header', f"invalid JSON in {header_path}: {e}")
    if not isinstance(header, dict):
        raise ContainerFormatError('header', 'expected a JSON object')
    unknown = sorted(set(header) - fields)
    if unknown:
        raise ContainerFormatError(unknown[0], 'unknown header field')
    missing = sorted(fields - set(header))
    if missing:
        raise ContainerFormatError(missing[0], 'missing header field')
    for name in ('width', 'height'):
        value = header[name]
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            raise ContainerFormatError(name, f"must be a positive integer, got {value!r}")
    if header['byte_order'] != 'little-endian':
        raise ContainerFormatError('byte_order', f"unsupported byte order {header['byte_order']!r}")
    return header


def _read_payload(payload_path: Path, expected_bytes: int) -> bytes:
    payload = payload_path.read_bytes()
    if len(payload) != expected_bytes:
        raise ContainerFormatError(
            'payload', f"payload length mismatch: expected {expected_bytes} bytes, got {len(payload)}")
    return payload


def write_cube(cube: SpectralCube, path) -> Path:
    """
    Write a cube as ``<name>.scube.json`` (header) plus ``<name>.scube.bin`` (little-endian float32,
    band-major then row-major). Returns the header path.
    """
    checked_cube(cube)
    header_path, payload_path = _container_paths(path, CUBE_SUFFIX)
    header_path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        'width': cube.width,
        'height': cube.height,
        'wavelengths': cube.grid.to_list(),
        'dtype': 'f32',
        'layout': 'band-sequential',
        'byte_order': 'little-endian',
    }
    header_path.write_text(_dump_json(header), encoding='utf-8')
    payload_path.write_bytes(np.ascontiguousarray(cube.data, dtype='<f4').tobytes())
    logger.info("Wrote %r to %s", cube, header_path)
    return header_path


def read_cube(path) -> SpectralCube:
    header_path, payload_path = _container_paths(path, CUBE_SUFFIX)
    header = _read_header(header_path, _CUBE_HEADER_FIELDS)
    if header['dtype'] != 'f32':
        raise ContainerFormatError('dtype', f"unsupported dtype {header['dtype']!r}")
    if header['layout'] != 'band-sequential':
        raise ContainerFormatError('layout', f"unsupported layout {header['layout']!r}")
    wavelengths = header['wavelengths']
    if not isinstance(wavelengths, list) or not all(
            isinstance(w, (int, float)) and not isinstance(w, bool) for w in wavelengths):
        raise ContainerFormatError('wavelengths', 'expected a list of numbers')
    grid = WavelengthGrid(wavelengths)
    grid_report = validate_grid(grid)
    if grid_report:
        raise ContainerFormatError('wavelengths', str(grid_report[0]))

    width, height = header['width'], header['height']
    payload = _read_payload(payload_path, 4 * width * height * len(grid))
    data = np.frombuffer(payload, dtype='<f4').astype(np.float32)
    cube = SpectralCube(width, height, grid, data.reshape(len(grid), height, width))
    report = validate_cube(cube)
    if report:
        raise ContainerFormatError('payload', str(report[0]))
    logger.info("Loaded %r from %s", cube, header_path)
    return cube


def write_labels(labels: LabelMap, path) -> Path:
    header_path, payload_path = _container_paths(path, LABEL_SUFFIX)
    header_path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        'width': labels.width,
        'height': labels.height,
        'dtype': 'i32',
        'byte_order': 'little-endian',
        'merge_table': {str(k): v for k, v in sorted(labels.merge_table.items())},
    }
    header_path.write_text(_dump_json(header), encoding='utf-8')
    payload_path.write_bytes(np.ascontiguousarray(labels.classes, dtype='<i4').tobytes())
    return header_path


def read_labels(path) -> LabelMap:
    header_path, payload_path = _container_paths(path, LABEL_SUFFIX)
    header = _read_header(header_path, _LABEL_HEADER_FIELDS)
    if header['dtype'] != 'i32':
        raise ContainerFormatError('dtype', f"unsupported dtype {header['dtype']!r}")
    table = header['merge_table']
    if not isinstance(table, dict):
        raise ContainerFormatError('merge_table', 'expected an object')
    try:
        merge_table = {int(k): int(v) for k, v in table.items()}
    except (TypeError, ValueError):
        raise ContainerFormatError('merge_table', 'keys and values must be integers')
    width, height = header['width'], header['height']
    payload = _read_payload(payload_path, 4 * width * height)
    classes = np.frombuffer(payload, dtype='<i4').astype(np.int32).reshape(height, width)
    return LabelMap(width, height, classes, merge_table)


def load_manifest(path):
    """
    Parse a dataset manifest. Relative cube and label paths are resolved against the manifest's directory.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Manifest {path} not found")
    try:
        document = json.loads(path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as e:
        raise ContainerFormatError('manifest', f"invalid JSON: {e}")
    manifest = manifest_from_dict(document)
    base = path.parent

    def resolve(entry_path):
        if entry_path is None:
            return None
        p = Path(entry_path)
        return str(p if p.is_absolute() else base / p)

    entries = [replace(e, cube_path=resolve(e.cube_path), label_path=resolve(e.label_path))
               for e in manifest.entries]
    return replace(manifest, entries=tuple(entries))


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_json(document: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_dump_json(document) + '\n', encoding='utf-8')
    return path


def name_fused_dataset(name: str, method_label: str) -> str:
    """
    Generate a name for a fused dataset based on the dataset name and the interpolation method.
    """
    return f'{name}_{method_label}'


def save_fused_dataset(cube: SpectralCube, labels: LabelMap | None, out_dir, name: str, method_label: str) -> Path:
    """
    Save a fused cube (and its merged labels, when present) in the output directory.
    """
    base = Path(out_dir) / name_fused_dataset(name, method_label)
    header_path = write_cube(cube, base)
    if labels is not None:
        write_labels(labels, base)
    return header_path


def load_fused_dataset(out_dir, name: str, method_label: str) -> tuple:
    """
    Load a fused cube and its labels (None when the dataset had no ground truth).
    """
    base = Path(out_dir) / name_fused_dataset(name, method_label)
    label_header, _ = _container_paths(base, LABEL_SUFFIX)
    labels = read_labels(base) if label_header.exists() else None
    return read_cube(base), labels


def save_sample_set(sample_set, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sample_set.to_frame().to_csv(path, index=False)
    logger.info("Wrote %d samples to %s", len(sample_set), path)
    return path


def load_sample_set(path):
    from src.data_preparation.helpers import SampleSet

    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Sample set {path} not found")
    return SampleSet.from_frame(pd.read_csv(path))


def read_cube_grid(path) -> WavelengthGrid:
    """Wavelength axis of a stored cube, read from its header only."""
    header_path, _ = _container_paths(path, CUBE_SUFFIX)
    header = _read_header(header_path, _CUBE_HEADER_FIELDS)
    grid = WavelengthGrid(header['wavelengths'])
    grid_report = validate_grid(grid)
    if grid_report:
        raise ContainerFormatError('wavelengths', str(grid_report[0]))
    return grid


def container_stem(path) -> str:
    """Base name of a container or sample file: ``out/ksc_linear.scube.json`` -> ``ksc_linear``."""
    name = Path(path).name
    for suffix in (CUBE_SUFFIX, LABEL_SUFFIX, '.csv'):
        if suffix in name:
            return name[:name.index(suffix)]
    return Path(name).stem
