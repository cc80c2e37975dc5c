from dataclasses import replace
import logging

from sklearn.base import BaseEstimator, TransformerMixin
import numpy as np

from src.data_preparation.cube import checked_cube, merge_labels
from src.exceptions import DatasetError, ShapeMismatchError, SpectralFusionError
from src.interpolation.kernels import CUBIC_SPLINE
from src.interpolation.resampling import resample_cube

logger = logging.getLogger(__name__)


class LabelMergeTransformer(BaseEstimator, TransformerMixin):
    """Collapses each dataset's ground truth into unknown / vegetation / non-vegetation"""

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        """
        Args:
            X (list): FusedDataset records; records without labels pass through untouched

        Returns:
            list: the same records with merged label maps
        """
        merged = []
        for dataset in X:
            if dataset.labels is None:
                merged.append(dataset)
                continue
            labels = dataset.labels
            if (labels.width, labels.height) != (dataset.cube.width, dataset.cube.height):
                raise DatasetError(dataset.name, ShapeMismatchError(
                    f"labels are {labels.width}x{labels.height}, cube is {dataset.cube.width}x{dataset.cube.height}"))
            try:
                merged.append(replace(dataset, labels=merge_labels(labels)))
            except SpectralFusionError as e:
                raise DatasetError(dataset.name, e) from e
        return merged


class SpectralResampleTransformer(BaseEstimator, TransformerMixin):
    """Resamples every dataset's cube onto the common wavelength grid"""

    def __init__(self, target_grid=None, method=CUBIC_SPLINE, workers=None):
        self.target_grid = target_grid
        self.method = method
        self.workers = workers

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        if self.target_grid is None:
            raise ValueError("SpectralResampleTransformer needs a target_grid")
        resampled = []
        for dataset in X:
            try:
                cube = resample_cube(checked_cube(dataset.cube), self.target_grid, self.method, self.workers)
            except SpectralFusionError as e:
                raise DatasetError(dataset.name, e) from e
            logger.info("Fused %s: %d -> %d bands (%s)", dataset.name, dataset.cube.bands, cube.bands, self.method)
            resampled.append(replace(dataset, cube=cube))
        return resampled


class MinMaxNormalizeTransformer(BaseEstimator, TransformerMixin):
    """Rescales each dataset's intensities to [0, 1]; a no-op unless enabled"""

    def __init__(self, enabled=False):
        self.enabled = enabled

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        if not self.enabled:
            return list(X)
        normalized = []
        for dataset in X:
            data = dataset.cube.data.astype(np.float64)
            low, high = data.min(), data.max()
            scale = high - low
            data = (data - low) / scale if scale > 0 else np.zeros_like(data)
            normalized.append(replace(dataset, cube=dataset.cube.with_data(dataset.cube.grid, data)))
        return normalized
