import json

import numpy as np
import pytest

from src.data_preparation.cube import LabelMap, WavelengthGrid
from src.data_preparation.dataloader import write_cube, write_labels
from synthetic import SCENE_MERGE_TABLE, SENSOR_A_GRID, SENSOR_B_GRID, scene_classes, sensor_cube, smooth_cube


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_cube():
    grid = WavelengthGrid.from_range(400.0, 10.0, 700.0)
    return smooth_cube(grid, width=4, height=3)


@pytest.fixture
def sensor_pair():
    """Two sensors looking at the same 16x16 scene: (classes, cube A, cube B)."""
    classes = scene_classes(16, 16, seed=7)
    return classes, sensor_cube(classes, SENSOR_A_GRID, seed=1), sensor_cube(classes, SENSOR_B_GRID, seed=2)


@pytest.fixture
def write_manifest(tmp_path):
    """Write cubes (and labels) to tmp_path and return the path of a manifest listing them."""

    def _write(datasets, reference_name, with_labels=True):
        entries = []
        for name, (cube, classes) in datasets.items():
            write_cube(cube, tmp_path / name)
            entry = {
                'name': name,
                'cube_path': f'{name}.scube.json',
                'native_resolution_nm': float(np.min(np.diff(cube.grid.wavelengths))),
            }
            if with_labels and classes is not None:
                write_labels(LabelMap(cube.width, cube.height, classes, SCENE_MERGE_TABLE), tmp_path / name)
                entry['label_path'] = f'{name}.slabel.json'
            entries.append(entry)
        path = tmp_path / 'manifest.json'
        path.write_text(json.dumps({'reference_name': reference_name, 'entries': entries}), encoding='utf-8')
        return path

    return _write


@pytest.fixture
def sensor_manifest(sensor_pair, write_manifest):
    classes, cube_a, cube_b = sensor_pair
    return write_manifest({'sensor_a': (cube_a, classes), 'sensor_b': (cube_b, classes)}, 'sensor_b')
