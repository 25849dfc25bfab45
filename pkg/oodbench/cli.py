"""The ``oodbench`` command line.

Exit codes: ``0`` on success, ``1`` when the library raises an error, ``2`` for
usage errors and missing files. Errors are reported as a single line
``error: <ExceptionClass>: <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from collections.abc import Sequence
from typing import Any

import numpy as np

from oodbench.benchmark import run_benchmark, run_sweep
from oodbench.config import BenchmarkConfig, PoolConfig
from oodbench.csvio import CsvSchema, load_csv, save_csv
from oodbench.dataset import (
    DEFAULT_CLUSTER_SPREAD,
    DatasetSpec,
    OodPool,
    OodPoolSpec,
    PoolMode,
    Split,
    SplitDataset,
    generate_ood_pool,
    generate_synthetic,
)
from oodbench.detectors import (
    DEFAULT_ODIN_EPSILON,
    DEFAULT_ODIN_TEMPERATURE,
    DEFAULT_QUANTILE,
    Detector,
    DetectorKind,
    GbmParams,
    IForestParams,
    OdinParams,
    Verdict,
    calibrate_baseline,
    calibrate_odin,
    fit_gbm_detector,
    fit_iforest_detector,
)
from oodbench.errors import OodBenchError
from oodbench.metrics import (
    DEFAULT_TPR_LEVEL,
    MetricsRow,
    ScorePair,
    evaluate_detector,
    metrics_row,
    tpr_threshold,
)
from oodbench.nn.classifier import SoftmaxClassifier
from oodbench.nn.training import TrainConfig, train, train_with_oe
from oodbench.samples import FeatureVector, LabeledSample, prob_vectors
from oodbench.utils import format_float
from oodbench.version import __version__

logger = logging.getLogger(__name__)

#: Environment variable holding the default log level name.
LOG_LEVEL_ENV = "OODBENCH_LOG_LEVEL"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2

SPLIT_FILES = {split: f"{split.value}.csv" for split in Split}


def pool_file(mode: PoolMode | str) -> str:
    return f"pool_{PoolMode(mode).value}.csv"


def _log_level(verbose: int, quiet: bool) -> int:
    if quiet:
        return logging.ERROR
    if verbose >= 2:
        return logging.DEBUG
    if verbose == 1:
        return logging.INFO
    name = os.environ.get(LOG_LEVEL_ENV, "WARNING").upper()
    level = logging.getLevelName(name)
    return level if isinstance(level, int) else logging.WARNING


def _features(items: Sequence[Any]) -> np.ndarray:
    """Feature rows of labeled or unlabeled feature items."""
    if not items or not isinstance(items[0], (LabeledSample, FeatureVector)):
        raise OodBenchError("Expected a non-empty CSV file of (labeled) features")
    return np.stack(
        [i.features.values if isinstance(i, LabeledSample) else i.values for i in items]
    )


def _probs(href: str) -> np.ndarray:
    items = load_csv(href, CsvSchema.PROBABILITIES)
    return np.stack([p.probs for p in items])  # type: ignore[union-attr]


def _print_row(row: MetricsRow) -> None:
    print(f"method {row.method}")
    print(f"pool {row.pool}")
    print(f"ood_error {format_float(row.ood_error)}")
    print(f"auroc {format_float(row.auroc)}")
    print(f"fpr_at_95_tpr {format_float(row.fpr_at_95_tpr)}")
    threshold = "-" if row.threshold is None else format_float(row.threshold)
    print(f"threshold {threshold}")


def cmd_generate(args: argparse.Namespace) -> int:
    spec = DatasetSpec(
        args.classes, args.dim, args.per_class, args.spread, args.seed
    )
    dataset = generate_synthetic(spec)
    for split, name in SPLIT_FILES.items():
        save_csv(dataset.samples(split), os.path.join(args.out, name))
    pool_seed = args.seed if args.pool_seed is None else args.pool_seed
    for mode in args.pool_mode or list(PoolMode):
        pool_spec = OodPoolSpec(spec.feature_dim, args.pool_size, mode, pool_seed)
        pool = generate_ood_pool(pool_spec, dataset)
        save_csv(pool.samples, os.path.join(args.out, pool_file(mode)))
    logger.info(f"Wrote dataset and pools to {args.out}")
    return EXIT_OK


def _load_dataset(data_dir: str, n_classes: int | None) -> SplitDataset:
    features: dict[Split, np.ndarray] = {}
    labels: dict[Split, np.ndarray] = {}
    for split, name in SPLIT_FILES.items():
        items = load_csv(os.path.join(data_dir, name), CsvSchema.LABELED_FEATURES)
        features[split] = _features(items)
        labels[split] = np.array([s.label for s in items])  # type: ignore[union-attr]
    m = n_classes or int(max(y.max() for y in labels.values() if len(y))) + 1
    return SplitDataset(features, labels, m)


def cmd_train(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args.data, args.classes)
    config = TrainConfig(
        learning_rate=args.learning_rate,
        max_epochs=args.epochs,
        hidden_units=args.hidden,
        oe_weight=args.oe_weight,
        seed=args.seed,
    )
    initial = SoftmaxClassifier.initialize(
        dataset.feature_dim, dataset.n_classes, config.hidden_units, config.seed
    )
    if args.oe_pool:
        pool = OodPool(_features(load_csv(args.oe_pool)), "exposure")
        model, history = train_with_oe(
            initial, dataset, pool, config, ood_seed=args.ood_seed
        )
    else:
        model, history = train(initial, dataset, config)
    model.save_object(args.out)
    logger.info(f"Saved model from epoch {history.best_epoch} to {args.out}")
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    model = SoftmaxClassifier.from_file(args.model)
    probs = model.predict_proba(_features(load_csv(args.input)), args.temperature)
    save_csv(prob_vectors(probs), args.out, CsvSchema.PROBABILITIES)
    return EXIT_OK


def cmd_fit_detector(args: argparse.Namespace) -> int:
    kind = DetectorKind(args.kind)
    if kind == DetectorKind.BASELINE:
        detector = calibrate_baseline(_probs(args.validation), args.quantile)
    elif kind == DetectorKind.ODIN:
        if args.model is None:
            raise OodBenchError("An odin detector needs --model")
        odin = OdinParams(args.odin_temperature, args.odin_epsilon, args.quantile)
        detector = calibrate_odin(
            SoftmaxClassifier.from_file(args.model),
            _features(load_csv(args.validation)),
            odin.temperature,
            odin.epsilon,
            odin.quantile,
        )
    elif kind == DetectorKind.IFOREST:
        detector = fit_iforest_detector(
            _probs(args.validation),
            IForestParams(args.trees, args.subsample_size),
            args.seed,
        )
    else:
        if args.ood is None:
            raise OodBenchError("A gbm detector needs --ood")
        detector = fit_gbm_detector(
            _probs(args.validation),
            _probs(args.ood),
            GbmParams(args.trees, args.max_depth, args.gbm_learning_rate),
            args.seed,
        )
    detector.save_object(args.out)
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    method = args.method
    if args.detector is not None:
        detector = Detector.from_file(args.detector)
        if detector.kind == DetectorKind.ODIN:
            in_inputs: Any = _features(load_csv(args.in_file))
            out_inputs: Any = _features(load_csv(args.out_file))
        else:
            in_inputs, out_inputs = _probs(args.in_file), _probs(args.out_file)
        row = evaluate_detector(detector, in_inputs, out_inputs, method, args.pool)
    else:
        in_scores = np.array(load_csv(args.in_file, CsvSchema.SCORES))
        out_scores = np.array(load_csv(args.out_file, CsvSchema.SCORES))
        sign = -1.0 if args.larger_is_out else 1.0
        sp = ScorePair(sign * in_scores, sign * out_scores)
        # without a threshold, accept everything at or above the 95% TPR cut
        if args.threshold is None:
            cut = tpr_threshold(sp, DEFAULT_TPR_LEVEL)
        else:
            cut = sign * args.threshold
        in_ood, out_ood = sp.in_scores < cut, sp.out_scores < cut

        def _verdicts(ood: np.ndarray) -> list[Verdict]:
            return [
                Verdict.OUT_OF_DISTRIBUTION if o else Verdict.IN_DISTRIBUTION
                for o in ood
            ]

        row = metrics_row(
            method or "scores",
            args.pool,
            sp,
            _verdicts(in_ood),
            _verdicts(out_ood),
            args.threshold,
        )
    _print_row(row)
    return EXIT_OK


def cmd_benchmark(args: argparse.Namespace) -> int:
    if args.config is not None:
        config = BenchmarkConfig.from_file(
            args.config, validate=False if args.no_validate else None
        )
    else:
        config = BenchmarkConfig()
    d = config.to_dict()
    if args.seed is not None:
        d["seed"] = args.seed
    if args.output_dir is not None:
        d["output_dir"] = args.output_dir
    if args.odin_temperature is not None:
        d["detectors"]["odin"]["temperature"] = args.odin_temperature
    if args.odin_epsilon is not None:
        d["detectors"]["odin"]["epsilon"] = args.odin_epsilon
    if args.pools:
        d["evaluation_pools"] = [PoolConfig(m).to_dict() for m in args.pools]
    config = BenchmarkConfig.from_dict(d)
    if args.seeds:
        report = run_sweep(config, args.seeds)
    else:
        report = run_benchmark(config)
    sys.stdout.write(report.to_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oodbench",
        description="Out-of-distribution detection on classifier softmax outputs.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="More logging (-vv: debug)."
    )
    parser.add_argument("-q", "--quiet", action="store_true", help="Only log errors.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="Generate a synthetic dataset and OOD pools.")
    p.add_argument("--out", required=True, help="Output directory.")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--per-class", type=int, default=300)
    p.add_argument("--spread", type=float, default=DEFAULT_CLUSTER_SPREAD)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--pool-mode",
        action="append",
        choices=[m.value for m in PoolMode],
        help="Pool to generate; repeatable. Default: all modes.",
    )
    p.add_argument("--pool-size", type=int, default=600)
    p.add_argument("--pool-seed", type=int, default=None)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="Train a softmax classifier.")
    p.add_argument("--data", required=True, help="Directory of split CSV files.")
    p.add_argument("--out", required=True, help="Model file to write.")
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--oe-pool", default=None, help="Feature CSV for outlier exposure.")
    p.add_argument("--oe-weight", type=float, default=0.5)
    p.add_argument("--ood-seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--learning-rate", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="Write softmax outputs of a model.")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="Feature CSV, labeled or not.")
    p.add_argument("--out", required=True, help="Probability CSV to write.")
    p.add_argument("--temperature", type=float, default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("fit-detector", help="Fit or calibrate a detector.")
    p.add_argument("--kind", required=True, choices=[k.value for k in DetectorKind])
    p.add_argument(
        "--validation",
        required=True,
        help="Validation probabilities; validation features for odin.",
    )
    p.add_argument("--ood", default=None, help="Exposure probabilities (gbm).")
    p.add_argument("--model", default=None, help="Model file (odin).")
    p.add_argument("--out", required=True, help="Detector file to write.")
    p.add_argument("--quantile", type=float, default=DEFAULT_QUANTILE)
    p.add_argument(
        "--odin-temperature", type=float, default=DEFAULT_ODIN_TEMPERATURE
    )
    p.add_argument("--odin-epsilon", type=float, default=DEFAULT_ODIN_EPSILON)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--subsample-size", type=int, default=None)
    p.add_argument("--max-depth", type=int, default=3)
    p.add_argument("--gbm-learning-rate", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fit_detector)

    p = sub.add_parser("evaluate", help="Compute OOD error, AUROC and FPR@95%%TPR.")
    p.add_argument("in_file", help="In-distribution scores, probabilities or features.")
    p.add_argument("out_file", help="OOD scores, probabilities or features.")
    p.add_argument("--detector", default=None, help="Detector file to score with.")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument(
        "--larger-is-out",
        action="store_true",
        help="Score files grow with OOD-ness.",
    )
    p.add_argument("--method", default=None)
    p.add_argument("--pool", default="ood")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="Run the full benchmark.")
    p.add_argument("--config", default=None, help="JSON configuration document.")
    p.add_argument("--output-dir", default=None)
    seeds = p.add_mutually_exclusive_group()
    seeds.add_argument("--seed", type=int, default=None)
    seeds.add_argument("--seeds", type=int, nargs="+", default=None)
    p.add_argument("--odin-temperature", type=float, default=None)
    p.add_argument("--odin-epsilon", type=float, default=None)
    p.add_argument(
        "--pool",
        dest="pools",
        action="append",
        choices=[m.value for m in PoolMode],
        help="Evaluation pool; repeatable.",
    )
    p.add_argument("--no-validate", action="store_true")
    p.set_defaults(func=cmd_benchmark)
    return parser


def _print_error(e: BaseException) -> None:
    message = " ".join(str(e).split())
    print(f"error: {type(e).__name__}: {message}", file=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=_log_level(args.verbose, args.quiet),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return int(args.func(args))
    except FileNotFoundError as e:
        _print_error(e)
        return EXIT_USAGE
    except (OodBenchError, ValueError) as e:
        _print_error(e)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
