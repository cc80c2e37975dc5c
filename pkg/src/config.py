import os
import logging

# Upper wavelength caps of the common 430 nm + 4 nm grid: 66 or 103 bands
VISIBLE_CAP_NM = 690.0
EXTENDED_CAP_NM = 838.0

DEFAULT_HIDDEN_66 = (128, 256, 512, 256)
DEFAULT_HIDDEN_103 = (256, 512, 256, 128)

# Class codes after label merging
UNKNOWN = 0
VEGETATION = 1
NON_VEGETATION = 2
MERGED_CLASSES = (UNKNOWN, VEGETATION, NON_VEGETATION)

WORKERS_ENV = 'SPECTRAL_FUSION_WORKERS'
MLFLOW_URI_ENV = 'SPECTRAL_FUSION_MLFLOW_URI'


def resolve_workers(workers: int | None = None) -> int:
    """
    Number of workers used for cube-scale work.

    An explicit value wins, then the SPECTRAL_FUSION_WORKERS environment variable,
    then the available parallelism of the machine.
    """
    if workers is None:
        env_value = os.environ.get(WORKERS_ENV)
        if env_value:
            try:
                workers = int(env_value)
            except ValueError:
                raise ValueError(f"{WORKERS_ENV} must be an integer, got {env_value!r}")
        else:
            workers = os.cpu_count() or 1
    if workers < 1:
        raise ValueError(f"Worker count must be >= 1, got {workers}")
    return workers


def mlflow_tracking_uri() -> str | None:
    return os.environ.get(MLFLOW_URI_ENV) or None


def configure_logging(verbosity: int = 0) -> None:
    """Configure global logging level."""
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(levelname)s - %(message)s",
        datefmt="%H:%M:%S",
    )
