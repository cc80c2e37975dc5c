import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from src.config import MLFLOW_URI_ENV
from src.data_preparation.cube import WavelengthGrid
from src.data_preparation.dataloader import load_manifest
from src.data_preparation.helpers import FusionConfig, SampleSet, build_sample_set
from src.data_preparation.pipelines import fuse_datasets
from src.exceptions import ShapeMismatchError
from src.training.fcnn import HISTORY_COLUMNS, cross_evaluate, evaluate, train, train_with_tracking
from src.training.ml_utils import split_shuffle
from src.training.mlp import MlpArchitecture, MlpModel, TrainConfig, init_model
from synthetic import SENSOR_A_GRID, SENSOR_B_GRID, scene_classes, sensor_cube

BLOB_CONFIG = TrainConfig(epochs=50, learning_rate=1e-3, batch_size=64, seed=3)


def _blobs(n=2000, bands=66, seed=0):
    rng = np.random.default_rng(seed)
    labels = rng.integers(1, 3, size=n)
    centers = np.where(labels[:, None] == 1, 1.0, -1.0)
    features = centers + 0.5 * rng.normal(size=(n, bands))
    grid = WavelengthGrid.from_range(430, 4, 430 + 4 * (bands - 1))
    return SampleSet(grid, features, labels, np.full(n, 'blobs', dtype=object))


def test_blobs_are_linearly_separable():
    samples = _blobs()
    oracle = LogisticRegression(max_iter=1000).fit(samples.features, samples.labels)
    assert oracle.score(samples.features, samples.labels) == 1.0


def test_training_separates_blobs():
    samples = _blobs()
    model = init_model(MlpArchitecture(66, (32, 16)), seed=1)
    model, history = train(model, samples, BLOB_CONFIG)
    assert list(history.columns) == HISTORY_COLUMNS
    assert history['epoch'].tolist() == list(range(1, 51))
    assert history['loss'].iloc[-1] < history['loss'].iloc[0]
    assert evaluate(model, samples).accuracy >= 0.99


def test_training_is_deterministic():
    samples = _blobs(n=300, bands=8)
    cfg = TrainConfig(epochs=5, learning_rate=1e-3, batch_size=32, seed=7)
    first, history = train(init_model(MlpArchitecture(8, (6,)), seed=2), samples, cfg)
    again, history_again = train(init_model(MlpArchitecture(8, (6,)), seed=2), samples, cfg)
    assert history.equals(history_again)
    for a, b in zip(first.parameters(), again.parameters()):
        np.testing.assert_array_equal(a, b)
    assert first.step == again.step == 5 * 10


def test_training_rejects_wrong_width():
    with pytest.raises(ShapeMismatchError, match='model expects 4 bands, data has 8'):
        train(init_model(MlpArchitecture(4, (3,))), _blobs(n=10, bands=8), BLOB_CONFIG)


def _constant_model(bands):
    """Always predicts vegetation."""
    arch = MlpArchitecture(bands, ())
    return MlpModel(arch, [np.zeros((2, bands), dtype=np.float32)], [np.array([1.0, 0.0], dtype=np.float32)])


def _samples(features, labels):
    features = np.asarray(features, dtype=np.float32)
    grid = WavelengthGrid.from_range(400, 10, 400 + 10 * (features.shape[1] - 1))
    return SampleSet(grid, features, labels, np.full(len(labels), 'x', dtype=object))


def test_constant_prediction_on_balanced_set():
    result = evaluate(_constant_model(2), _samples(np.ones((4, 2)), [1, 1, 2, 2]))
    assert result.accuracy == 0.5
    np.testing.assert_array_equal(result.confusion, [[2, 0], [2, 0]])
    assert result.n_samples == 4


def test_accuracy_agrees_with_confusion():
    # first feature larger means vegetation
    model = MlpModel(MlpArchitecture(2, ()), [np.eye(2, dtype=np.float32)], [np.zeros(2, dtype=np.float32)])
    features = [[2.0, 1.0], [0.0, 1.0], [1.0, 3.0], [5.0, 0.0], [1.0, 0.5]]
    result = evaluate(model, _samples(features, [1, 1, 2, 2, 1]))
    confusion = result.confusion
    assert result.accuracy == pytest.approx(np.trace(confusion) / confusion.sum())
    np.testing.assert_array_equal(confusion, [[2, 1], [1, 1]])
    assert result.to_dict()['confusion'] == [[2, 1], [1, 1]]


def test_cross_evaluate_table():
    model = _constant_model(2)
    table = cross_evaluate(model, [
        ('ksc', 'linear', _samples(np.ones((4, 2)), [1, 1, 1, 2])),
        ('botswana', 'pchip', _samples(np.ones((2, 2)), [2, 2])),
    ])
    assert table.columns.tolist() == ['testing_dataset', 'method', 'accuracy', 'n_samples', 'confusion']
    assert table['accuracy'].tolist() == [0.75, 0.0]
    assert table['n_samples'].tolist() == [4, 2]
    assert table['confusion'].iloc[0] == [[3, 0], [1, 0]]


def test_tracking_is_skipped_without_experiment(monkeypatch):
    monkeypatch.delenv(MLFLOW_URI_ENV, raising=False)
    samples = _blobs(n=100, bands=4)
    train_set, test_set = split_shuffle(samples, FusionConfig(seed=1))
    cfg = TrainConfig(epochs=2, learning_rate=1e-3, batch_size=16)
    model, history, evaluation = train_with_tracking(init_model(MlpArchitecture(4, (3,))), train_set, test_set, cfg)
    assert len(history) == 2
    assert evaluation.n_samples == 20


def test_tracking_logs_to_mlflow(monkeypatch, tmp_path):
    monkeypatch.setenv(MLFLOW_URI_ENV, (tmp_path / 'mlruns').as_uri())
    samples = _blobs(n=60, bands=4)
    cfg = TrainConfig(epochs=2, learning_rate=1e-3, batch_size=16)
    _, history, evaluation = train_with_tracking(init_model(MlpArchitecture(4, (3,))), samples, None, cfg,
                                                 experiment='unit-test', run_name='blobs')
    assert len(history) == 2 and evaluation is None
    assert (tmp_path / 'mlruns').exists()


@pytest.mark.slow
def test_fused_sensors_train_a_vegetation_classifier(write_manifest):
    classes = scene_classes(64, 64, seed=21)
    manifest = load_manifest(write_manifest({
        'sensor_a': (sensor_cube(classes, SENSOR_A_GRID, seed=22), classes),
        'sensor_b': (sensor_cube(classes, SENSOR_B_GRID, seed=23), classes),
    }, 'sensor_b'))
    config = FusionConfig(max_wavelength_cap=690.0, seed=0)
    grid, fused = fuse_datasets(manifest, config)
    assert len(grid) == 66

    samples = build_sample_set(fused, ['sensor_a', 'sensor_b'])
    train_set, test_set = split_shuffle(samples, config)
    model = init_model(MlpArchitecture.for_bands(len(grid)), seed=0)
    model, history = train(model, train_set, TrainConfig())
    assert len(history) == 150
    assert evaluate(model, test_set).accuracy >= 0.95

