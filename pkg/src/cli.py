import argparse
import json
import logging
from pathlib import Path
import sys

from src.config import VISIBLE_CAP_NM, configure_logging
from src.data_preparation.dataloader import (
    container_stem,
    file_sha256,
    load_manifest,
    load_sample_set,
    read_cube,
    save_fused_dataset,
    save_json,
    save_sample_set,
)
from src.data_preparation.helpers import ExplicitGrid, FromReference, FusionConfig, build_sample_set
from src.data_preparation.pipelines import fuse_datasets, provenance_record
from src.exceptions import SpectralFusionError
from src.interpolation.kernels import ALL_METHODS, InterpolationMethod
from src.interpolation.resampling import resample_cube
from src.metrics.quality import (
    NORMALIZATIONS,
    NdviConfig,
    cmse_cube,
    compare_methods,
    ndvi_map,
    ndvi_mse,
    ndvi_summary,
    surface_avg_difference,
)
from src.metrics.reports import MetricReport, validate_report
from src.plotting.plotters import (
    REDUCTIONS,
    export_pixel_plot,
    export_surface_plot,
    pixel_series,
    plot_bundle,
    select_random_pixel,
    write_bundle,
)
from src.training.fcnn import cross_evaluate, train_with_tracking
from src.training.ml_utils import split_shuffle
from src.training.mlp import MlpArchitecture, TrainConfig, init_model, load_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USER = 2

METHOD_CHOICES = ('linear', 'quadratic', 'cubic', 'pchip')


def _provenance_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.name + '.provenance.json')


def _finish(provenance: dict, path) -> int:
    """Write the provenance record and print its path as the last stdout line."""
    save_json(provenance, path)
    print(path)
    return EXIT_OK


def _method(args) -> InterpolationMethod:
    return InterpolationMethod.parse(args.method, args.boundary)


def cmd_fuse(args) -> int:
    method = _method(args)
    manifest = load_manifest(args.manifest)
    config = FusionConfig(
        method=method,
        grid_rule=ExplicitGrid.parse(args.grid) if args.grid else FromReference(),
        max_wavelength_cap=args.cap,
        seed=args.seed,
        normalize=args.normalize,
        workers=args.workers,
    )
    grid, fused = fuse_datasets(manifest, config)

    out_dir = Path(args.out)
    outputs = [str(save_fused_dataset(f.cube, f.labels, out_dir, f.name, config.method.label)) for f in fused]
    extra = {'outputs': outputs}
    if args.samples:
        labeled = [f.name for f in fused if f.labels is not None]
        extra['samples'] = str(save_sample_set(build_sample_set(fused, labeled), args.samples))

    print(f"Fused {len(fused)} datasets onto {len(grid)} wavelengths ({grid.min:g}-{grid.max:g} nm)")
    record = provenance_record(config, grid, file_sha256(args.manifest), **extra)
    return _finish(record, out_dir / 'provenance.json')


def _metric_value(args, cube, method, target, against, ndvi_config) -> float:
    if args.metric == 'cmse':
        return cmse_cube(cube, target, method)
    interp = against if against is not None else resample_cube(cube, target, method, args.workers)
    if args.metric == 'surface':
        return surface_avg_difference(cube, interp, args.normalization)
    return ndvi_mse(cube, interp, ndvi_config)


def cmd_metrics(args) -> int:
    cube = read_cube(args.cube)
    against = read_cube(args.against) if args.against else None
    if args.grid:
        target = ExplicitGrid.parse(args.grid).to_grid()
    elif against is not None:
        target = against.grid
    else:
        raise ValueError("metrics needs --grid or --against to define the target grid")
    ndvi_config = NdviConfig(args.red, args.nir)
    normalization = args.normalization if args.metric == 'surface' else None
    dataset = container_stem(args.cube)

    if args.method == 'all':
        if against is not None and args.metric != 'cmse':
            raise ValueError("--method all resamples the cube itself; drop --against or pass --grid only")
        table = compare_methods(cube, target, args.metric, ALL_METHODS, args.normalization, ndvi_config)
        print(table.to_string(index=False))
        reports = [MetricReport(dataset, row.method, args.metric, row.value, normalization, {'grid': target.to_list()})
                   for row in table.itertuples()]
    else:
        method = _method(args)
        value = _metric_value(args, cube, method, target, against, ndvi_config)
        print(f"{args.metric} ({method.label}): {value:.10g}")
        reports = [MetricReport(dataset, method.label, args.metric, value, normalization,
                                {'grid': target.to_list(), 'against': args.against})]

    documents = [r.to_dict() for r in reports]
    for document in documents:
        problems = validate_report(document)
        if problems:
            raise SpectralFusionError(f"Report does not match its schema: {problems}")
    save_json(documents[0] if len(documents) == 1 else {'reports': documents}, args.out)
    record = provenance_record(None, target, None, metric=args.metric, method=args.method,
                               cube=str(args.cube), against=args.against, report=str(args.out))
    return _finish(record, _provenance_path(args.out))


def cmd_ndvi(args) -> int:
    cube = read_cube(args.cube)
    config = NdviConfig(args.red, args.nir, args.max_offset)
    summary = ndvi_summary(ndvi_map(cube, config))
    print(json.dumps(summary, sort_keys=True, indent=2))
    save_json(summary, args.out)
    record = provenance_record(None, cube.grid, None, cube=str(args.cube), ndvi=config.to_dict(),
                               report=str(args.out))
    return _finish(record, _provenance_path(args.out))


def cmd_plot(args) -> int:
    cube = read_cube(args.cube)
    if args.kind == 'surface':
        if args.against:
            raise ValueError("--against only applies to pixel plots")
        bundle = export_surface_plot(cube, args.reduction, container_stem(args.cube),
                                     {'dataset': container_stem(args.cube)})
    else:
        if args.row is not None and args.col is not None:
            row, col = args.row, args.col
        elif args.row is None and args.col is None:
            row, col = select_random_pixel(cube, args.seed)
        else:
            raise ValueError("Pass both --row and --col, or neither to pick a pixel by --seed")
        named = [(container_stem(args.cube), cube)] + [(container_stem(p), read_cube(p)) for p in args.against or []]
        pixels = pixel_series(named, row, col)
        bundle = export_pixel_plot(pixels, {'dataset': container_stem(args.cube), 'row': row, 'col': col})

    write_bundle(bundle, args.out)
    if args.html:
        Path(args.html).parent.mkdir(parents=True, exist_ok=True)
        plot_bundle(bundle).write_html(args.html)
    record = provenance_record(None, cube.grid, None, cube=str(args.cube), kind=args.kind,
                               metadata=bundle.metadata, output=str(args.out))
    return _finish(record, _provenance_path(args.out))


def cmd_train(args) -> int:
    samples = load_sample_set(args.train_data)
    bands = len(samples.grid)
    arch = MlpArchitecture.parse(args.arch, bands) if args.arch else MlpArchitecture.for_bands(bands)
    cfg = TrainConfig(epochs=args.epochs, learning_rate=args.lr, batch_size=args.batch, seed=args.seed)
    train_set, test_set = split_shuffle(samples, FusionConfig(seed=args.seed, train_fraction=args.train_fraction))

    model = init_model(arch, args.seed)
    model, history, evaluation = train_with_tracking(model, train_set, test_set, cfg,
                                                     args.mlflow_experiment, container_stem(args.out))
    ckpt = save_checkpoint(model, cfg, args.out, extra={'grid': samples.grid.to_list()})
    history_path = ckpt.with_name(ckpt.name + '.history.csv')
    history.to_csv(history_path, index=False)

    print(f"train accuracy: {history['accuracy'].iloc[-1]:.4f}")
    print(f"test accuracy: {evaluation.accuracy:.4f}")
    print(f"confusion: {evaluation.confusion.tolist()}")
    record = provenance_record(None, samples.grid, None, train_data=str(args.train_data),
                               architecture=arch.to_dict(), train=cfg.to_dict(),
                               train_fraction=args.train_fraction, checkpoint=str(ckpt),
                               history=str(history_path), test_accuracy=evaluation.accuracy)
    return _finish(record, _provenance_path(ckpt))


def cmd_eval(args) -> int:
    model, cfg, extra = load_checkpoint(args.checkpoint)
    test_sets = []
    for path in args.data:
        dataset, _, method = container_stem(path).rpartition('_')
        if not dataset:
            dataset, method = method, ''
        test_sets.append((dataset, method, load_sample_set(path)))

    table = cross_evaluate(model, test_sets)
    for row in table.itertuples():
        print(f"{row.testing_dataset} ({row.method or 'n/a'}): accuracy {row.accuracy:.4f}, confusion {row.confusion}")

    report = Path(args.report) if args.report else Path(args.checkpoint).with_suffix('.eval.csv')
    report.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(report, index=False)
    grid = extra.get('grid')
    record = provenance_record(None, None, None, checkpoint=str(args.checkpoint), grid_nm=grid,
                               data=[str(p) for p in args.data], report=str(report),
                               accuracy=table['accuracy'].tolist())
    return _finish(record, _provenance_path(report))


class JsonErrorParser(argparse.ArgumentParser):
    """Usage errors end with the same JSON line on stderr as every other input error."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(json.dumps({'error': 'UsageError', 'message': message}), file=sys.stderr)
        self.exit(EXIT_USER)


def _add_method_flags(parser, allow_all=False):
    # Parsed by InterpolationMethod.parse
    names = '|'.join(METHOD_CHOICES + (('all',) if allow_all else ()))
    parser.add_argument('--method', default='cubic', help=names)
    parser.add_argument('--boundary', default='notaknot', help='notaknot|natural (cubic only)')


def build_parser() -> argparse.ArgumentParser:
    parser = JsonErrorParser(prog='spectral-fusion',
                                     description='Fuse multisource spectral images and validate the result.')
    parser.add_argument('-v', '--verbose', action='count', default=0, help='-v for info, -vv for debug logs')
    subparsers = parser.add_subparsers(dest='command', required=True)

    fuse = subparsers.add_parser('fuse', help='resample every dataset of a manifest onto a common grid')
    fuse.add_argument('--manifest', required=True)
    _add_method_flags(fuse)
    fuse.add_argument('--grid', help='explicit START:STEP:STOP grid in nm, e.g. 430:4:690')
    fuse.add_argument('--cap', type=float, help=f'upper wavelength cap in nm, e.g. {VISIBLE_CAP_NM:g}')
    fuse.add_argument('--seed', type=int, default=0)
    fuse.add_argument('--normalize', action='store_true', help='min-max rescale each dataset after resampling')
    fuse.add_argument('--workers', type=int)
    fuse.add_argument('--samples', help='also write the labeled pixels of all datasets to this CSV')
    fuse.add_argument('--out', required=True)
    fuse.set_defaults(handler=cmd_fuse)

    metrics = subparsers.add_parser('metrics', help='interpolation quality metrics')
    metrics.add_argument('--cube', required=True)
    metrics.add_argument('--against')
    metrics.add_argument('--metric', required=True, choices=('cmse', 'surface', 'mse-ndvi'))
    _add_method_flags(metrics, allow_all=True)
    metrics.add_argument('--grid')
    metrics.add_argument('--normalization', default='span', choices=NORMALIZATIONS)
    metrics.add_argument('--red', type=float, default=NdviConfig.red_target_nm)
    metrics.add_argument('--nir', type=float, default=NdviConfig.nir_target_nm)
    metrics.add_argument('--workers', type=int)
    metrics.add_argument('--out', required=True)
    metrics.set_defaults(handler=cmd_metrics)

    ndvi = subparsers.add_parser('ndvi', help='NDVI map statistics and interpretation')
    ndvi.add_argument('--cube', required=True)
    ndvi.add_argument('--red', type=float, default=NdviConfig.red_target_nm)
    ndvi.add_argument('--nir', type=float, default=NdviConfig.nir_target_nm)
    ndvi.add_argument('--max-offset', type=float, default=NdviConfig.max_offset_nm)
    ndvi.add_argument('--out', required=True)
    ndvi.set_defaults(handler=cmd_ndvi)

    plot = subparsers.add_parser('plot', help='export pixel or surface plot data')
    plot.add_argument('--cube', required=True)
    plot.add_argument('--kind', required=True, choices=('pixel', 'surface'))
    plot.add_argument('--against', nargs='+')
    plot.add_argument('--row', type=int)
    plot.add_argument('--col', type=int)
    plot.add_argument('--seed', type=int, default=0)
    plot.add_argument('--reduction', default='sum', choices=REDUCTIONS)
    plot.add_argument('--out', required=True)
    plot.add_argument('--html')
    plot.set_defaults(handler=cmd_plot)

    train = subparsers.add_parser('train', help='train the pixel classifier')
    train.add_argument('--train-data', required=True)
    train.add_argument('--arch', help='66, 103 or custom:H1,H2,...; defaults to the band count')
    train.add_argument('--epochs', type=int, default=TrainConfig.epochs)
    train.add_argument('--lr', type=float, default=TrainConfig.learning_rate)
    train.add_argument('--batch', type=int, default=TrainConfig.batch_size)
    train.add_argument('--seed', type=int, default=0)
    train.add_argument('--train-fraction', type=float, default=0.8)
    train.add_argument('--mlflow-experiment')
    train.add_argument('--out', required=True)
    train.set_defaults(handler=cmd_train)

    evaluate_parser = subparsers.add_parser('eval', help='test a checkpoint on one or more sample sets')
    evaluate_parser.add_argument('--checkpoint', required=True)
    evaluate_parser.add_argument('--data', required=True, action='append')
    evaluate_parser.add_argument('--report')
    evaluate_parser.set_defaults(handler=cmd_eval)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return e.code
    configure_logging(args.verbose)
    try:
        return args.handler(args)
    except (SpectralFusionError, ValueError, KeyError, FileNotFoundError) as e:
        logger.debug("User error", exc_info=True)
        print(json.dumps({'error': type(e).__name__, 'message': str(e)}), file=sys.stderr)
        return EXIT_USER
    except Exception as e:
        logger.exception("Internal error")
        print(json.dumps({'error': 'InternalError', 'message': str(e)}), file=sys.stderr)
        return EXIT_INTERNAL
