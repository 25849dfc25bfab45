"""The end-to-end benchmark: generate data, train the plain and the outlier-exposure
classifier, fit every detector, evaluate all of them on every evaluation pool and
write the models, detectors and reports.

A single master seed determines everything. Stage ``s`` draws from the seed
``master * 1000 + s.index`` (:func:`stage_seed`); evaluation pool ``i`` adds a
further ``100 * i`` to the seed of :attr:`Stage.EVALUATION_POOLS`.
"""

from __future__ import annotations

import logging
import os
from collections.abc import Iterator, Sequence
from contextlib import contextmanager
from datetime import datetime, timedelta
from typing import Any

from oodbench.config import BenchmarkConfig, Method
from oodbench.dataset import (
    OodPool,
    Split,
    SplitDataset,
    generate_ood_pool,
    generate_synthetic,
)
from oodbench.detectors import (
    Detector,
    calibrate_baseline,
    calibrate_odin,
    fit_gbm_detector,
    fit_iforest_detector,
)
from oodbench.errors import BenchmarkStageError
from oodbench.metrics import MetricsRow, evaluate_detector
from oodbench.nn.classifier import SoftmaxClassifier
from oodbench.nn.training import classification_error, train, train_with_oe
from oodbench.ood_io import OodIO
from oodbench.report import EvalReport, Provenance, merge_reports
from oodbench.samples import FloatArray
from oodbench.utils import StringEnum, now_to_rfc3339_str, str_to_datetime
from oodbench.version import __version__

logger = logging.getLogger(__name__)

MODEL_FILE = "model.txt"
OE_MODEL_FILE = "model_oe.txt"
REPORT_TEXT_FILE = "report.txt"
REPORT_CSV_FILE = "report.csv"
MANIFEST_FILE = "run.json"

_POOL_SEED_STRIDE = 100


class Stage(StringEnum):
    DATA = "data"
    EXPOSURE_POOL = "exposure-pool"
    EVALUATION_POOLS = "evaluation-pools"
    TRAIN = "train"
    TRAIN_OE = "train-oe"
    FIT_DETECTORS = "fit-detectors"
    EVALUATE = "evaluate"
    WRITE = "write"

    @property
    def index(self) -> int:
        return list(Stage).index(self)


def stage_seed(master: int, stage: Stage) -> int:
    """The seed of a pipeline stage: ``master * 1000 + stage.index``."""
    return master * 1000 + stage.index


def pool_seed(master: int, position: int) -> int:
    """The seed of the evaluation pool at ``position`` in the configuration."""
    return stage_seed(master, Stage.EVALUATION_POOLS) + _POOL_SEED_STRIDE * position


def detector_file(method: Method | str) -> str:
    return f"detector_{Method(method).value}.txt"


@contextmanager
def _stage(stage: Stage) -> Iterator[None]:
    logger.info(f"Stage {stage}")
    try:
        yield
    except BenchmarkStageError:
        raise
    except Exception as e:
        raise BenchmarkStageError(stage.value, e) from e


class Benchmark:
    """One benchmark run. :meth:`run` fills in the intermediate results, which
    stay available on the instance afterwards.

    Args:
        config : The configuration of the run.
        ood_io : The :class:`~oodbench.OodIO` used to write outputs.
    """

    config: BenchmarkConfig
    dataset: SplitDataset | None
    exposure_pool: OodPool | None
    evaluation_pools: dict[str, OodPool]
    model: SoftmaxClassifier | None
    oe_model: SoftmaxClassifier | None
    detectors: dict[Method, Detector]
    report: EvalReport | None

    def __init__(self, config: BenchmarkConfig, ood_io: OodIO | None = None) -> None:
        self.config = config
        self.ood_io = ood_io or OodIO.default()
        self.dataset = None
        self.exposure_pool = None
        self.evaluation_pools = {}
        self.model = None
        self.oe_model = None
        self.detectors = {}
        self.report = None

    def seed(self, stage: Stage) -> int:
        return stage_seed(self.config.seed, stage)

    def run(self) -> EvalReport:
        """Runs every stage in order and returns the report.

        Raises:
            BenchmarkStageError : If any stage fails. The stage name is available
                as ``stage`` and the original exception as ``__cause__``.
        """
        started = now_to_rfc3339_str()
        config = self.config
        logger.info(
            f"Benchmark seed={config.seed} config={config.config_hash()[:12]}"
        )
        with _stage(Stage.DATA):
            spec = config.data.with_seed(self.seed(Stage.DATA))
            self.dataset = generate_synthetic(spec)
        dataset = self.dataset
        dim = dataset.feature_dim

        with _stage(Stage.EXPOSURE_POOL):
            spec = config.exposure_pool.to_spec(dim, self.seed(Stage.EXPOSURE_POOL))
            self.exposure_pool = generate_ood_pool(spec, dataset)
        exposure = self.exposure_pool

        with _stage(Stage.EVALUATION_POOLS):
            for position, pool_config in enumerate(config.evaluation_pools):
                spec = pool_config.to_spec(dim, pool_seed(config.seed, position))
                self.evaluation_pools[pool_config.tag] = generate_ood_pool(
                    spec, dataset
                )

        # the plain and the OE classifier share initialization and shuffling
        train_seed = self.seed(Stage.TRAIN)
        train_config = config.train.with_seed(train_seed)
        initial = SoftmaxClassifier.initialize(
            dim, dataset.n_classes, train_config.hidden_units, train_seed
        )
        with _stage(Stage.TRAIN):
            self.model, _ = train(initial, dataset, train_config)
        model = self.model

        if Method.OUTLIER_EXPOSURE in config.methods:
            with _stage(Stage.TRAIN_OE):
                self.oe_model, _ = train_with_oe(
                    initial,
                    dataset,
                    exposure,
                    train_config,
                    ood_seed=self.seed(Stage.TRAIN_OE),
                )

        with _stage(Stage.FIT_DETECTORS):
            self._fit_detectors(model, dataset, exposure)

        with _stage(Stage.EVALUATE):
            rows = self._evaluate(model, dataset)
            self.report = EvalReport(
                rows, Provenance(config.config_hash(), [config.seed], __version__)
            )

        if config.output_dir is not None:
            with _stage(Stage.WRITE):
                self._write(config.output_dir, started)
        return self.report

    def _fit_detectors(
        self, model: SoftmaxClassifier, dataset: SplitDataset, exposure: OodPool
    ) -> None:
        config = self.config
        val_x = dataset.features(Split.VALIDATION)
        val_probs = model.predict_proba(val_x)
        seed = self.seed(Stage.FIT_DETECTORS)
        for method in config.methods:
            logger.info(f"Fitting the {method} detector")
            if method == Method.BASELINE:
                detector = calibrate_baseline(val_probs, config.baseline.quantile)
            elif method == Method.ODIN:
                detector = calibrate_odin(
                    model,
                    val_x,
                    config.odin.temperature,
                    config.odin.epsilon,
                    config.odin.quantile,
                )
            elif method == Method.OUTLIER_EXPOSURE:
                assert self.oe_model is not None
                detector = calibrate_baseline(
                    self.oe_model.predict_proba(val_x), config.baseline.quantile
                )
            elif method == Method.IFOREST:
                detector = fit_iforest_detector(val_probs, config.iforest, seed)
            else:
                detector = fit_gbm_detector(
                    val_probs,
                    model.predict_proba(exposure.features),
                    config.gbm,
                    seed,
                )
            self.detectors[method] = detector

    def _evaluate(
        self, model: SoftmaxClassifier, dataset: SplitDataset
    ) -> list[MetricsRow]:
        test_x = dataset.features(Split.TEST)
        test_y = dataset.labels(Split.TEST)
        rows = []
        for method, detector in self.detectors.items():
            classifier = model
            if method == Method.OUTLIER_EXPOSURE:
                assert self.oe_model is not None
                classifier = self.oe_model

            if method == Method.ODIN:
                odin = self.config.odin
                perturbed = model.perturb_batch(test_x, odin.epsilon)
                error = classification_error(model, perturbed, test_y)
            else:
                error = classification_error(classifier, test_x, test_y)

            in_inputs = _detector_inputs(method, classifier, test_x)
            for tag, pool in self.evaluation_pools.items():
                row = evaluate_detector(
                    detector,
                    in_inputs,
                    _detector_inputs(method, classifier, pool.features),
                    method.value,
                    tag,
                    error,
                )
                logger.debug(repr(row))
                rows.append(row)
        return rows

    def _write(self, output_dir: str, started: str) -> None:
        assert self.model is not None and self.report is not None
        files = [MODEL_FILE]
        self.model.save_object(os.path.join(output_dir, MODEL_FILE), self.ood_io)
        if self.oe_model is not None:
            self.oe_model.save_object(
                os.path.join(output_dir, OE_MODEL_FILE), self.ood_io
            )
            files.append(OE_MODEL_FILE)
        for method, detector in self.detectors.items():
            name = detector_file(method)
            detector.save_object(os.path.join(output_dir, name), self.ood_io)
            files.append(name)
        self.report.save_text(os.path.join(output_dir, REPORT_TEXT_FILE), self.ood_io)
        self.report.save_csv(os.path.join(output_dir, REPORT_CSV_FILE), self.ood_io)
        files += [REPORT_TEXT_FILE, REPORT_CSV_FILE]
        write_manifest(
            output_dir, self.config, [self.config.seed], files, started, self.ood_io
        )
        logger.info(f"Wrote {len(files)} files to {output_dir}")


def _detector_inputs(
    method: Method, classifier: SoftmaxClassifier, x: FloatArray
) -> FloatArray:
    """ODIN consumes features; every other method consumes softmax outputs."""
    if method == Method.ODIN:
        return x
    return classifier.predict_proba(x)


def write_manifest(
    output_dir: str,
    config: BenchmarkConfig,
    seeds: Sequence[int],
    files: Sequence[str],
    started: str,
    ood_io: OodIO | None = None,
) -> None:
    """Writes ``run.json``: version, configuration hash, seeds, timestamps and the
    files written. Timestamps live only here so that reports stay reproducible."""
    manifest = {
        "version": __version__,
        "config_hash": config.config_hash(),
        "seeds": list(seeds),
        "started": started,
        "finished": now_to_rfc3339_str(),
        "files": list(files),
        "config": config.to_dict(),
    }
    (ood_io or OodIO.default()).save_json(
        os.path.join(output_dir, MANIFEST_FILE), manifest
    )


class RunManifest:
    """The contents of a ``run.json`` written next to a benchmark report."""

    version: str
    config_hash: str
    seeds: list[int]
    started: datetime
    finished: datetime
    files: list[str]
    config: BenchmarkConfig

    def __init__(
        self,
        version: str,
        config_hash: str,
        seeds: list[int],
        started: datetime,
        finished: datetime,
        files: list[str],
        config: BenchmarkConfig,
    ) -> None:
        self.version = version
        self.config_hash = config_hash
        self.seeds = seeds
        self.started = started
        self.finished = finished
        self.files = files
        self.config = config

    @property
    def duration(self) -> timedelta:
        return self.finished - self.started

    def __repr__(self) -> str:
        return f"<RunManifest {self.config_hash[:12]} seeds={self.seeds}>"

    @staticmethod
    def from_dict(d: dict[str, Any]) -> RunManifest:
        return RunManifest(
            version=d["version"],
            config_hash=d["config_hash"],
            seeds=list(d["seeds"]),
            started=str_to_datetime(d["started"]),
            finished=str_to_datetime(d["finished"]),
            files=list(d["files"]),
            config=BenchmarkConfig.from_dict(d["config"]),
        )


def read_manifest(output_dir: str, ood_io: OodIO | None = None) -> RunManifest:
    """Reads the ``run.json`` of a finished run or sweep."""
    d = (ood_io or OodIO.default()).read_json(os.path.join(output_dir, MANIFEST_FILE))
    return RunManifest.from_dict(d)


def run_benchmark(
    config: BenchmarkConfig, ood_io: OodIO | None = None
) -> EvalReport:
    """Runs the benchmark for ``config`` and returns its report.

    Raises:
        BenchmarkStageError : If any stage fails.
    """
    return Benchmark(config, ood_io).run()


def run_sweep(
    config: BenchmarkConfig, seeds: Sequence[int], ood_io: OodIO | None = None
) -> EvalReport:
    """Runs the benchmark once per master seed and averages the reports row by
    row.

    With an output directory, each run writes into ``seed-<seed>/`` below it and
    the averaged report goes to the directory itself.
    """
    if not seeds:
        raise ValueError("A sweep needs at least one seed")
    started = now_to_rfc3339_str()
    output_dir = config.output_dir
    reports = []
    for seed in seeds:
        run_config = config.with_seed(seed)
        if output_dir is not None:
            run_config = run_config.with_output_dir(
                os.path.join(output_dir, f"seed-{seed}")
            )
        reports.append(run_benchmark(run_config, ood_io))
    merged = merge_reports(reports, config.config_hash())
    if output_dir is not None:
        io = ood_io or OodIO.default()
        merged.save_text(os.path.join(output_dir, REPORT_TEXT_FILE), io)
        merged.save_csv(os.path.join(output_dir, REPORT_CSV_FILE), io)
        write_manifest(
            output_dir,
            config,
            seeds,
            [REPORT_TEXT_FILE, REPORT_CSV_FILE],
            started,
            io,
        )
    return merged
