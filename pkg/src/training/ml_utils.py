import logging
from fractions import Fraction
import math

import numpy as np

from src.data_preparation.helpers import SampleSet

logger = logging.getLogger(__name__)


def shuffle_indices(n: int, seed: int) -> np.ndarray:
    """
    Seeded permutation of ``range(n)``.

    Uses numpy's PCG64 bit generator; ``Generator.permutation`` is a Fisher-Yates shuffle,
    so the same seed always gives the same order.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.permutation(n)


def split_shuffle(sample_set: SampleSet, config) -> tuple:
    """
    Shuffle a sample set and split it into training and testing sets.

    Args:
        sample_set (SampleSet): pooled labeled pixels
        config: anything carrying ``seed`` and ``train_fraction`` (e.g. FusionConfig)

    Returns:
        tuple: (train, test), with ``len(train) == floor(train_fraction * n)``
    """
    n = len(sample_set)
    if n < 2:
        raise ValueError(f"Need at least 2 samples to split, got {n}")
    order = shuffle_indices(n, config.seed)
    # Decimal fraction taken exactly, so 0.29 of 100 is 29
    n_train = math.floor(Fraction(str(float(config.train_fraction))) * n)
    train, test = sample_set.subset(order[:n_train]), sample_set.subset(order[n_train:])
    logger.info("Split %d samples: %d train, %d test (seed %d)", n, len(train), len(test), config.seed)
    return train, test
