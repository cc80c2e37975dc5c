from datetime import datetime, timezone
import logging

from sklearn.pipeline import Pipeline

from src.data_preparation.cube import DatasetManifest
from src.data_preparation.helpers import FusedDataset, FusionConfig, derive_reference_grid
from src.data_preparation.transformers import (
    LabelMergeTransformer,
    MinMaxNormalizeTransformer,
    SpectralResampleTransformer,
)
from src.exceptions import DatasetError, SpectralFusionError

logger = logging.getLogger(__name__)


def build_fusion_pipeline() -> Pipeline:
    return Pipeline([
        ('merge_labels', LabelMergeTransformer()),
        ('resample', SpectralResampleTransformer()),
        ('normalize', MinMaxNormalizeTransformer()),
    ])


def load_datasets(manifest: DatasetManifest) -> list:
    """Read every cube (and label map, when listed) named by the manifest, in manifest order."""
    from src.data_preparation.dataloader import read_cube, read_labels

    datasets = []
    for entry in manifest.entries:
        try:
            cube = read_cube(entry.cube_path)
            labels = read_labels(entry.label_path) if entry.label_path else None
        except SpectralFusionError as e:
            raise DatasetError(entry.name, e) from e
        datasets.append(FusedDataset(entry.name, cube, labels))
    return datasets


def fuse_datasets(manifest: DatasetManifest, config: FusionConfig, datasets: list | None = None) -> tuple:
    """
    Resample every dataset of the manifest onto the derived reference grid and merge its labels.

    Returns ``(grid, fused)`` where ``fused`` holds one FusedDataset per manifest entry, in manifest order.
    Already loaded ``datasets`` may be passed in instead of reading them from disk.
    """
    if datasets is None:
        datasets = load_datasets(manifest)
    grids = {d.name: d.cube.grid for d in datasets}
    grid = derive_reference_grid(manifest, config, grids)

    fusion_pipeline = build_fusion_pipeline()
    fusion_pipeline.set_params(
        resample__target_grid=grid,
        resample__method=config.method,
        resample__workers=config.workers,
        normalize__enabled=config.normalize,
    )
    fused = fusion_pipeline.fit_transform(datasets)
    return grid, fused


def provenance_record(config: FusionConfig | None, grid, manifest_hash: str | None = None, **extra) -> dict:
    """JSON-ready record of how a fused dataset, report or model was produced."""
    record = {
        'manifest_hash': manifest_hash,
        'grid': grid.to_list() if grid is not None else None,
        **(config.describe() if config is not None else {}),
        'created_at': datetime.now(timezone.utc).isoformat(),
    }
    record.update(extra)
    return record
