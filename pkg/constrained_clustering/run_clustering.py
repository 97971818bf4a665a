import argparse
import logging
import os
import sys

import polars as pl
from dotenv import dotenv_values, load_dotenv

from constrained_clustering import settings
from constrained_clustering.cluster_core import init_centroids
from constrained_clustering.constraints.oracles import gen_difficulty, gen_pairwise, gen_triplets
from constrained_clustering.constraints.sets import ConstraintSet
from constrained_clustering.datasets import (
    load_delimited,
    load_idx,
    make_blobs,
    normalize,
    train_test_split,
)
from constrained_clustering.exceptions import ConfigError, ConstrainedClusteringError, DatasetError
from constrained_clustering.experiments import (
    CONSTRAINT_KINDS,
    ExperimentReport,
    cluster_size_report,
    difficulty_study,
    global_size_study,
    negative_ratio_study,
    prepare_shared_model,
    sweep_constraints,
    trivial_solution_study,
)
from constrained_clustering.metrics import evaluate_labels
from constrained_clustering.network import (
    ArchitectureSpec,
    ClusteringModel,
    NetworkParams,
    PretrainConfig,
    embed,
    load_model,
    pretrain_sdae,
    save_model,
    save_params,
)
from constrained_clustering.pipelines import write_history, write_report
from constrained_clustering.trainer import TrainConfig, evaluate_model, train
from constrained_clustering.utils.export import export_embedding, export_predictions, export_sizes
from constrained_clustering.utils.general import configure_logging, convert_config
from constrained_clustering.utils.parsing_helper import read_constraint_file, write_constraint_file

load_dotenv()

logger = logging.getLogger(__name__)

ENV_PREFIX = "DCC_"
LOSS_FLAGS = {"difficulty": "use_difficulty", "global": "use_global"}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    data = common.add_argument_group("data")
    data.add_argument('--data', help='Feature file (IDX images or delimited text)')
    data.add_argument('--labels', help='IDX label file')
    data.add_argument('--data-format', choices=['idx', 'csv', 'blobs'], default='idx', help='Input format')
    data.add_argument('--has-labels', action='store_true', help='Last csv column holds the class label')
    data.add_argument('--scaling', choices=['none', 'minmax', 'global'], help='Rescale features after loading')
    data.add_argument('--test-fraction', type=float, help='Hold out this fraction of rows (train fits, evaluate scores it)')
    data.add_argument('--blob-clusters', type=int, default=4, help='Number of synthetic blobs')
    data.add_argument('--blob-per-cluster', type=int, default=500, help='Points per blob')
    data.add_argument('--blob-dim', type=int, default=10, help='Blob feature dimension')
    data.add_argument('--blob-separation', type=float, default=6.0, help='Minimum centre distance in sigmas')
    data.add_argument('--blob-sigma', type=float, default=1.0, help='Blob standard deviation')

    model = common.add_argument_group("model and training")
    model.add_argument('--constraints', help='Constraint file (one JSON record per line)')
    model.add_argument('--model-in', help='Model file to start from')
    model.add_argument('--model-out', help='Where to write the resulting model')
    model.add_argument('--k', type=int, help='Number of clusters (defaults to the number of classes)')
    model.add_argument('--epochs', type=int, help='Clustering epochs')
    model.add_argument('--batch-size', type=int, help='Mini-batch size')
    model.add_argument('--constraint-batch-size', type=int, help='Constraint mini-batch size')
    model.add_argument('--learning-rate', type=float, help='Adam learning rate')
    model.add_argument('--seed', type=int, help='Master seed')
    model.add_argument('--ml-weight', type=float, help='Must-link penalty weight')
    model.add_argument('--theta', type=float, help='Triplet margin')
    model.add_argument('--loss-flags', help='Extra clustering-branch losses: difficulty,global')
    model.add_argument('--literal-difficulty', '--eq6-literal', dest='literal_difficulty', action='store_true', default=None, help='Use -|M| weights in the difficulty loss')
    model.add_argument('--delta-label-tol', type=float, help='Stop once fewer than this fraction of labels change')
    model.add_argument('--init', choices=['sdae', 'raw'], help='Pretrain the autoencoder or keep it freshly initialized')
    model.add_argument('--hidden-dims', help='Comma separated hidden layer widths')
    model.add_argument('--embedding-dim', type=int, help='Embedding width')
    model.add_argument('--layer-epochs', type=int, help='Denoising epochs per layer')
    model.add_argument('--finetune-epochs', type=int, help='Autoencoder finetuning epochs')
    model.add_argument('--noise-rate', type=float, help='Zero-masking probability during pretraining')

    output = common.add_argument_group("output")
    output.add_argument('--report-out', help='Line-delimited JSON report')
    output.add_argument('--embedding-out', help='Delimited n x embedding export')
    output.add_argument('--config', help='key=value config file, overridden by flags')
    output.add_argument('--workers', type=int, default=settings.WORKERS, help='Parallel paired runs')
    output.add_argument('--log-level', help='Logging level')

    parser = argparse.ArgumentParser(description='Deep constrained clustering')
    subparsers = parser.add_subparsers(dest='command', required=True)

    subparsers.add_parser('pretrain', parents=[common], help='Pretrain the stacked denoising autoencoder')

    gen = subparsers.add_parser('gen-constraints', parents=[common], help='Write a simulated constraint file')
    gen.add_argument('--kind', choices=['pairwise', 'triplet', 'difficulty'], default='pairwise', help='Constraint type')
    gen.add_argument('--count', type=int, default=200, help='Pairs or triplets to draw')
    gen.add_argument('--out', required=True, help='Constraint file to write')

    subparsers.add_parser('train', parents=[common], help='Train with the alternating two-branch procedure')

    evaluate = subparsers.add_parser('evaluate', parents=[common], help='Acc/NMI of a saved model or of a prediction file')
    evaluate.add_argument('--predictions', help='Score these labels (one per line) instead of a model')
    evaluate.add_argument('--predictions-out', help='Write the predicted labels, one per line')

    sweep = subparsers.add_parser('sweep', parents=[common], help='Paired runs over constraint counts')
    sweep.add_argument('--counts', default='0,50,200,800', help='Comma separated constraint counts')
    sweep.add_argument('--sets-per-count', type=int, default=5, help='Constraint sets per count')
    sweep.add_argument('--constraint-kind', choices=CONSTRAINT_KINDS, default='pairwise', help='Pairwise or triplet sets')

    negative = subparsers.add_parser('negative-study', parents=[common], help='Negative ratio over many constraint sets')
    negative.add_argument('--count', type=int, default=200, help='Constraints per set')
    negative.add_argument('--num-sets', type=int, default=20, help='Constraint sets')

    sizes = subparsers.add_parser('size-report', parents=[common], help='Cluster sizes with and without the global size loss')
    sizes.add_argument('--models', nargs='+', help='Report these saved models instead of running the study')
    sizes.add_argument('--seeds', type=int, default=5, help='Unbalanced initializations to try')
    sizes.add_argument('--sizes-out', help='Delimited cluster size table')

    subparsers.add_parser('difficulty-study', parents=[common], help='Paired runs without and with the difficulty loss')

    trivial = subparsers.add_parser('trivial-study', parents=[common], help='Must-link only training with and without reconstruction')
    trivial.add_argument('--count', type=int, default=1000, help='Must-link pairs to draw')
    trivial.add_argument('--study-epochs', type=int, default=settings.TRIVIAL_STUDY_EPOCHS, help='Must-link-only epochs per run')

    return parser


def _config_values(args):
    """Merged key -> value mapping: environment, then config file, then flags"""
    values = {
        key[len(ENV_PREFIX):].lower(): value
        for key, value in os.environ.items()
        if key.startswith(ENV_PREFIX)
    }
    if args.config:
        if not os.path.exists(args.config):
            raise ConfigError(f"config file {args.config} not found")
        for key, value in dotenv_values(args.config).items():
            key = key.lower()
            if key.startswith(ENV_PREFIX.lower()):
                key = key[len(ENV_PREFIX):]
            if value is not None:
                values[key] = value

    flags = {
        "n_clusters": args.k,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "constraint_batch_size": args.constraint_batch_size,
        "learning_rate": args.learning_rate,
        "seed": args.seed,
        "ml_weight": args.ml_weight,
        "margin": args.theta,
        "literal_difficulty": args.literal_difficulty,
        "delta_label_tol": args.delta_label_tol,
        "init_mode": args.init,
        "hidden_dims": args.hidden_dims,
        "embedding_dim": args.embedding_dim,
        "layer_epochs": args.layer_epochs,
        "finetune_epochs": args.finetune_epochs,
        "noise_rate": args.noise_rate,
    }
    values.update({key: value for key, value in flags.items() if value is not None})

    loss_flags = args.loss_flags if args.loss_flags is not None else values.pop("loss_flags", None)
    if loss_flags:
        for name in (part.strip() for part in loss_flags.split(",") if part.strip()):
            if name not in LOSS_FLAGS:
                raise ConfigError(f"unknown loss flag {name!r}, expected one of {sorted(LOSS_FLAGS)}")
            values[LOSS_FLAGS[name]] = True
    return values


def _architecture(values, input_dim):
    hidden = values.get("hidden_dims", settings.HIDDEN_DIMS)
    if isinstance(hidden, str):
        try:
            hidden = [int(dim) for dim in hidden.split(",") if dim.strip()]
        except ValueError:
            raise ConfigError(f"hidden_dims must be comma separated integers, got {hidden!r}") from None
    return convert_config(
        {"input_dim": input_dim, "hidden_dims": hidden, "embedding_dim": values.get("embedding_dim", settings.EMBEDDING_DIM)},
        ArchitectureSpec,
    )


def load_dataset(args, seed):
    if args.data_format == 'blobs':
        dataset = make_blobs(
            args.blob_clusters, args.blob_per_cluster, args.blob_dim,
            args.blob_separation, args.blob_sigma, seed=seed,
        )
    elif args.data_format == 'csv':
        dataset = load_delimited(args.data, has_labels=args.has_labels)
    else:
        dataset = load_idx(args.data, args.labels)

    if args.scaling:
        dataset = normalize(dataset, args.scaling)
    logger.info(f"Dataset {dataset.name}: {dataset.n} rows, {dataset.dim} features, {dataset.num_classes} classes")
    return dataset


def _split(args, dataset, seed):
    if args.test_fraction is None:
        return dataset, None
    fit, held_out = train_test_split(dataset, args.test_fraction, seed=seed)
    logger.info(f"Split {dataset.n} rows into {fit.n} for fitting and {held_out.n} held out")
    return fit, held_out


def _cluster_count(config, dataset):
    k = config.n_clusters or dataset.num_classes
    if k < 1:
        raise ConfigError("--k is required when the dataset has no labels")
    return k


def _shared_model(args, dataset, config, values):
    """Model every run of a study starts from, loaded or prepared from scratch"""
    k = _cluster_count(config, dataset)
    if args.model_in:
        model = load_model(args.model_in)
        if model.centroids is None:
            centroids = init_centroids(
                embed(model.params, dataset.X, config.eval_batch_size), k,
                restarts=config.kmeans_restarts, seed=config.seed,
            )
            model = ClusteringModel(params=model.params, centroids=centroids.numpy())
        return model
    spec = _architecture(values, dataset.dim)
    pretrain_config = convert_config({**values, "seed": config.seed}, PretrainConfig)
    return prepare_shared_model(dataset, k, config, spec=spec, pretrain_config=pretrain_config)


def _print_metrics(metrics):
    if metrics is None:
        print("acc=n/a nmi=n/a")
    else:
        print(f"acc={metrics.acc} nmi={metrics.nmi}")


def _write_report(args, report):
    if args.report_out:
        write_report(report, args.report_out)


def run_pretrain(args, dataset, config, values):
    spec = _architecture(values, dataset.dim)
    pretrain_config = convert_config({**values, "seed": config.seed}, PretrainConfig)
    params = load_model(args.model_in).params if args.model_in else None
    params = pretrain_sdae(spec, dataset.X, pretrain_config, params=params)
    if args.model_out:
        save_params(params, args.model_out)
        logger.info(f"Saved pretrained network to {args.model_out}")
    if args.embedding_out:
        export_embedding(embed(params, dataset.X, config.eval_batch_size), args.embedding_out, dataset.y)
    return 0


def run_gen_constraints(args, dataset, config, values):
    if args.kind == 'triplet':
        reference = (
            embed(load_model(args.model_in).params, dataset.X, config.eval_batch_size)
            if args.model_in
            else dataset.X
        )
        constraints = ConstraintSet(triplets=gen_triplets(reference, args.count, seed=config.seed, margin=config.margin))
    else:
        if not dataset.has_labels:
            raise DatasetError(f"{dataset.name}: {args.kind} constraints are drawn from labels")
        if args.kind == 'pairwise':
            constraints = ConstraintSet(pairwise=gen_pairwise(dataset.y, args.count, seed=config.seed))
        else:
            difficulty = gen_difficulty(
                dataset.X, dataset.y, _cluster_count(config, dataset),
                seed=config.seed, restarts=config.kmeans_restarts,
            )
            constraints = ConstraintSet(difficulty=difficulty)
    write_constraint_file(constraints, args.out)
    return 0


def run_train(args, dataset, config, values):
    if args.constraints and args.test_fraction is not None:
        raise ConfigError("--constraints index the full dataset and cannot be combined with --test-fraction")
    dataset, held_out = _split(args, dataset, config.seed)
    constraints = (
        read_constraint_file(args.constraints, n=dataset.n, margin=config.margin)
        if args.constraints
        else None
    )

    pretrain_config = None
    if args.model_in:
        model = load_model(args.model_in)
    else:
        model = ClusteringModel(params=NetworkParams.initialize(_architecture(values, dataset.dim), seed=config.seed))
        if config.init_mode == "sdae":
            pretrain_config = convert_config({**values, "seed": config.seed}, PretrainConfig)

    config = config.replace(n_clusters=_cluster_count(config, dataset))
    result = train(dataset, constraints, model, config, pretrain_config)
    logger.info(f"Trained {result.epochs_run} epochs")

    if args.model_out:
        save_model(result.model, args.model_out)
        logger.info(f"Saved model to {args.model_out}")
    if args.report_out:
        write_history(result.history, args.report_out)
    if args.embedding_out:
        export_embedding(embed(result.model.params, dataset.X, config.eval_batch_size), args.embedding_out, result.labels)

    _print_metrics(result.metrics)
    if held_out is not None:
        _, held_out_metrics = evaluate_model(result.model, held_out, config.eval_batch_size)
        if held_out_metrics is not None:
            logger.info(f"Held-out acc {held_out_metrics.acc:.4f}, nmi {held_out_metrics.nmi:.4f}")
    return 0


def run_evaluate(args, dataset, config, values):
    _, held_out = _split(args, dataset, config.seed)
    dataset = held_out if held_out is not None else dataset

    if args.predictions:
        labels = pl.read_csv(args.predictions, has_header=False).to_series(0).to_numpy()
        if not dataset.has_labels:
            raise DatasetError(f"{dataset.name}: scoring predictions needs ground-truth labels")
        _print_metrics(evaluate_labels(labels, dataset.y))
        return 0

    if not args.model_in:
        raise ConfigError("evaluate needs --model-in or --predictions")
    model = load_model(args.model_in)
    if model.centroids is None:
        raise ConfigError(f"{args.model_in} holds no centroids, train it first")
    labels, metrics = evaluate_model(model, dataset, config.eval_batch_size)
    if args.predictions_out:
        export_predictions(labels, args.predictions_out)
    if args.embedding_out:
        export_embedding(embed(model.params, dataset.X, config.eval_batch_size), args.embedding_out, labels)
    _print_metrics(metrics)
    return 0


def run_sweep(args, dataset, config, values):
    try:
        counts = [int(count) for count in args.counts.split(",") if count.strip()]
    except ValueError:
        raise ConfigError(f"--counts must be comma separated integers, got {args.counts!r}") from None
    dataset, held_out = _split(args, dataset, config.seed)
    model = _shared_model(args, dataset, config, values)
    report = sweep_constraints(
        dataset, counts, args.sets_per_count, config, model,
        kind=args.constraint_kind, workers=args.workers, test_dataset=held_out,
    )
    for aggregate in report.aggregates:
        logger.info(
            f"count={aggregate.constraint_count} constrained={aggregate.constrained}: "
            f"acc {aggregate.acc_mean:.4f} +- {aggregate.acc_std:.4f}"
            + ("" if aggregate.test_acc_mean is None else f", test acc {aggregate.test_acc_mean:.4f} +- {aggregate.test_acc_std:.4f}")
        )
    _write_report(args, report)
    return 0


def run_negative_study(args, dataset, config, values):
    model = _shared_model(args, dataset, config, values)
    report = negative_ratio_study(dataset, args.count, args.num_sets, config, model, workers=args.workers)
    print(f"negative_ratio={report.negative_ratio}")
    _write_report(args, report)
    return 0


def run_size_report(args, dataset, config, values):
    if args.models:
        records = cluster_size_report({path: load_model(path) for path in args.models}, dataset)
        report = ExperimentReport(study="size_report", sizes=records)
    else:
        report = global_size_study(dataset, config, _shared_model(args, dataset, config, values), seeds=args.seeds)
    if args.sizes_out:
        export_sizes(report.sizes, args.sizes_out)
    _write_report(args, report)
    return 0


def run_difficulty_study(args, dataset, config, values):
    report = difficulty_study(dataset, config, _shared_model(args, dataset, config, values))
    _write_report(args, report)
    return 0


def run_trivial_study(args, dataset, config, values):
    report = trivial_solution_study(
        dataset, args.count, config, _shared_model(args, dataset, config, values), epochs=args.study_epochs
    )
    for run in report.runs:
        print(f"reconstruction={'on' if run.constrained else 'off'} occupied={run.occupied_clusters}")
    _write_report(args, report)
    return 0


COMMANDS = {
    'pretrain': run_pretrain,
    'gen-constraints': run_gen_constraints,
    'train': run_train,
    'evaluate': run_evaluate,
    'sweep': run_sweep,
    'negative-study': run_negative_study,
    'size-report': run_size_report,
    'difficulty-study': run_difficulty_study,
    'trivial-study': run_trivial_study,
}


def cli_main(argv=None):
    """Parse argv, run one subcommand and return the process exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.data_format != 'blobs' and not args.data:
            parser.error(f"--data is required with --data-format {args.data_format}")
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2

    configure_logging(args.log_level)
    try:
        values = _config_values(args)
        config = TrainConfig.from_mapping(values)
        dataset = load_dataset(args, config.seed)
        return COMMANDS[args.command](args, dataset, config, values)
    except ConstrainedClusteringError as e:
        logger.error(f"{args.command} failed: {str(e)}")
        return 1
    except Exception as e:
        logger.error(f"{args.command} failed: {type(e).__name__}: {str(e)}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(cli_main(sys.argv[1:]))
