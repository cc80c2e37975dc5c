from dataclasses import dataclass
import logging
import os
from pathlib import Path
import tempfile

import mlflow
import numpy as np
import pandas as pd
from sklearn.metrics import accuracy_score, confusion_matrix

from src.config import NON_VEGETATION, VEGETATION, mlflow_tracking_uri
from src.data_preparation.helpers import SampleSet
from src.exceptions import ShapeMismatchError
from src.training.mlp import (
    MlpModel,
    TrainConfig,
    adam_step,
    backward,
    cross_entropy,
    forward,
    predict,
)

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ['epoch', 'loss', 'accuracy']
CROSS_EVAL_COLUMNS = ['testing_dataset', 'method', 'accuracy', 'n_samples', 'confusion']


def _check_width(model: MlpModel, sample_set: SampleSet):
    expected = model.architecture.input_size
    actual = sample_set.features.shape[1]
    if actual != expected:
        raise ShapeMismatchError(f"model expects {expected} bands, data has {actual}")


def train(model: MlpModel, train_set: SampleSet, cfg: TrainConfig, on_epoch=None) -> tuple:
    """
    Mini-batch training: every epoch reshuffles the samples, then runs forward, backward and
    an Adam step per batch.

    Args:
        model (MlpModel): updated in place
        train_set (SampleSet): non-empty training pixels
        cfg (TrainConfig): epochs, batch size, learning rate and shuffle seed
        on_epoch (callable): optional hook called with each history row

    Returns:
        tuple: (model, DataFrame with one row per epoch: epoch, loss, accuracy)
    """
    n = len(train_set)
    if n == 0:
        raise ValueError("Cannot train on an empty sample set")
    _check_width(model, train_set)

    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    features, labels = train_set.features, train_set.labels
    rows = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        loss_sum, correct = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            probabilities, cache = forward(model, features[batch])
            batch_labels = labels[batch]
            loss_sum += cross_entropy(probabilities, batch_labels) * batch.size
            correct += int(np.sum(probabilities.argmax(axis=1) + 1 == batch_labels))
            adam_step(model, backward(model, cache, batch_labels), cfg)

        row = {'epoch': epoch, 'loss': loss_sum / n, 'accuracy': correct / n}
        if not np.isfinite(row['loss']):
            raise FloatingPointError(f"Training loss became non-finite at epoch {epoch}")
        rows.append(row)
        log = logger.info if epoch % 10 == 0 else logger.debug
        log("Epoch %d: loss %.6f, accuracy %.4f", epoch, row['loss'], row['accuracy'])
        if on_epoch is not None:
            on_epoch(row)

    history = pd.DataFrame(rows, columns=HISTORY_COLUMNS)
    logger.info("Trained %d epochs: final loss %.6f, accuracy %.4f",
                cfg.epochs, history['loss'].iloc[-1], history['accuracy'].iloc[-1])
    return model, history


@dataclass(frozen=True, eq=False)
class Evaluation:
    accuracy: float
    confusion: np.ndarray
    n_samples: int

    def to_dict(self) -> dict:
        return {'accuracy': self.accuracy, 'confusion': self.confusion.tolist(), 'n_samples': self.n_samples}


def evaluate(model: MlpModel, sample_set: SampleSet) -> Evaluation:
    """
    Accuracy and 2x2 confusion counts (rows true class, columns predicted; vegetation first).
    """
    _check_width(model, sample_set)
    if len(sample_set) == 0:
        raise ValueError("Cannot evaluate on an empty sample set")
    predicted = predict(model, sample_set.features)
    accuracy = accuracy_score(sample_set.labels, predicted)
    confusion = confusion_matrix(sample_set.labels, predicted, labels=[VEGETATION, NON_VEGETATION])
    return Evaluation(float(accuracy), confusion, len(sample_set))


def cross_evaluate(model: MlpModel, test_sets) -> pd.DataFrame:
    """
    Test one trained model against several fused datasets.

    Args:
        test_sets: iterable of (testing_dataset, method, SampleSet)

    Returns:
        pd.DataFrame: one row per test set with testing_dataset, method, accuracy, n_samples, confusion
    """
    rows = []
    for dataset, method, sample_set in test_sets:
        result = evaluate(model, sample_set)
        logger.info("%s (%s): accuracy %.4f on %d samples", dataset, method, result.accuracy, result.n_samples)
        rows.append({'testing_dataset': dataset, 'method': method,
                     'accuracy': result.accuracy, 'n_samples': result.n_samples,
                     'confusion': result.confusion.tolist()})
    return pd.DataFrame(rows, columns=CROSS_EVAL_COLUMNS)


def train_with_tracking(model: MlpModel, train_set: SampleSet, test_set: SampleSet | None, cfg: TrainConfig,
                        experiment: str | None = None, run_name: str | None = None) -> tuple:
    """
    Train and (optionally) evaluate, logging to mlflow when an experiment name or tracking URI is set.

    Returns:
        tuple: (model, history, Evaluation or None)
    """
    uri = mlflow_tracking_uri()
    if experiment is None and uri is None:
        model, history = train(model, train_set, cfg)
        return model, history, evaluate(model, test_set) if test_set is not None else None

    if uri is not None:
        mlflow.set_tracking_uri(uri=uri)
    mlflow.set_experiment(experiment or 'spectral-fusion')
    with mlflow.start_run(run_name=run_name):
        mlflow.log_params({**cfg.to_dict(), **{f'arch_{k}': v for k, v in model.architecture.to_dict().items()},
                           'train_samples': len(train_set)})

        def log_epoch(row):
            mlflow.log_metric('train_loss', row['loss'], step=row['epoch'])
            mlflow.log_metric('train_accuracy', row['accuracy'], step=row['epoch'])

        model, history = train(model, train_set, cfg, on_epoch=log_epoch)
        evaluation = None
        if test_set is not None:
            evaluation = evaluate(model, test_set)
            mlflow.log_metric('test_accuracy', evaluation.accuracy)

        with tempfile.TemporaryDirectory() as tmp:
            history_path = Path(tmp) / 'history.csv'
            history.to_csv(history_path, index=False)
            mlflow.log_artifact(os.fspath(history_path))
    return model, history, evaluation
