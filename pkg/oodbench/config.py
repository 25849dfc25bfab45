"""Configuration of a benchmark run."""

from __future__ import annotations

import hashlib
import json
import logging
from collections.abc import Sequence
from typing import Any

from oodbench.dataset import DatasetSpec, OodPoolSpec, PoolMode
from oodbench.detectors import BaselineParams, GbmParams, IForestParams, OdinParams
from oodbench.errors import ConfigurationError
from oodbench.nn.training import TrainConfig
from oodbench.ood_io import OodIO
from oodbench.utils import HREF, StringEnum, check_keys, get_required
from oodbench.validation import HAS_JSONSCHEMA, validate_config

logger = logging.getLogger(__name__)


class Method(StringEnum):
    """The benchmarked methods. Outlier exposure is a baseline detector on a
    classifier trained with the exposure pool."""

    BASELINE = "baseline"
    ODIN = "odin"
    OUTLIER_EXPOSURE = "outlier-exposure"
    IFOREST = "iforest"
    GBM = "gbm"


ALL_METHODS = list(Method)

_CONFIG_KEYS = frozenset(
    {
        "seed",
        "output_dir",
        "methods",
        "data",
        "train",
        "detectors",
        "exposure_pool",
        "evaluation_pools",
    }
)


class PoolConfig:
    """An OOD pool of a benchmark. Dimension and seed come from the run.

    Args:
        mode : :class:`~oodbench.dataset.PoolMode` of the generator.
        n : Number of points.
        spread : Spread of a shifted cluster.
        tag : Identifier of the pool; defaults to the mode name.
    """

    def __init__(
        self,
        mode: PoolMode | str = PoolMode.UNIFORM_BOX,
        n: int = 600,
        spread: float = 0.05,
        tag: str | None = None,
    ) -> None:
        # validates mode, n and spread
        spec = OodPoolSpec(2, n, mode, spread=spread, tag=tag)
        self.mode = spec.mode
        self.n = spec.n
        self.spread = spec.spread
        self.tag = spec.tag

    def to_spec(self, feature_dim: int, seed: int) -> OodPoolSpec:
        return OodPoolSpec(feature_dim, self.n, self.mode, seed, self.spread, self.tag)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PoolConfig):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return f"<PoolConfig {self.to_dict()}>"

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode.value,
            "n": self.n,
            "spread": self.spread,
            "tag": self.tag,
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> PoolConfig:
        check_keys(d, {"mode", "n", "spread", "tag"}, "pool")
        return PoolConfig(
            mode=get_required(d, "pool", "mode"),
            n=d.get("n", 600),
            spread=d.get("spread", 0.05),
            tag=d.get("tag"),
        )


def _default_evaluation_pools() -> list[PoolConfig]:
    return [
        PoolConfig(PoolMode.UNIFORM_BOX),
        PoolConfig(PoolMode.SHIFTED_CLUSTER),
    ]


class BenchmarkConfig:
    """Everything a benchmark run depends on.

    The seeds inside ``data`` and ``train`` are replaced by stage seeds derived
    from ``seed`` when the benchmark runs.

    Args:
        data : Synthetic dataset parameters.
        train : Classifier training parameters.
        methods : Methods to benchmark, all five by default.
        baseline : Baseline calibration parameters; also used for outlier
            exposure.
        odin : ODIN parameters.
        iforest : Isolation forest parameters.
        gbm : Gradient boosting parameters.
        exposure_pool : The pool used to train the outlier-exposure classifier and
            the gradient boosting detector. Never evaluated on.
        evaluation_pools : Pools every method is evaluated on, at least one.
        seed : The master seed.
        output_dir : Directory receiving models, detectors and reports.

    Raises:
        ConfigurationError : If a pool tag is repeated, or an evaluation pool has
            the exposure pool's tag.
    """

    def __init__(
        self,
        data: DatasetSpec | None = None,
        train: TrainConfig | None = None,
        methods: Sequence[Method | str] | None = None,
        baseline: BaselineParams | None = None,
        odin: OdinParams | None = None,
        iforest: IForestParams | None = None,
        gbm: GbmParams | None = None,
        exposure_pool: PoolConfig | None = None,
        evaluation_pools: Sequence[PoolConfig] | None = None,
        seed: int = 0,
        output_dir: str | None = None,
    ) -> None:
        self.data = data or DatasetSpec()
        self.train = train or TrainConfig()
        try:
            self.methods = [Method(m) for m in (methods or ALL_METHODS)]
        except ValueError as e:
            raise ConfigurationError(f"Unknown method: {e}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigurationError("A method is listed more than once")
        self.baseline = baseline or BaselineParams()
        self.odin = odin or OdinParams()
        self.iforest = iforest or IForestParams()
        self.gbm = gbm or GbmParams()
        self.exposure_pool = exposure_pool or PoolConfig(tag="exposure")
        self.evaluation_pools = list(evaluation_pools or _default_evaluation_pools())
        if not self.evaluation_pools:
            raise ConfigurationError("At least one evaluation pool is required")
        tags = [p.tag for p in self.evaluation_pools]
        if len(set(tags)) != len(tags):
            raise ConfigurationError(f"Evaluation pool tags must be unique: {tags}")
        if self.exposure_pool.tag in tags:
            raise ConfigurationError(
                f"The exposure pool '{self.exposure_pool.tag}' must not be an "
                "evaluation pool"
            )
        if seed < 0:
            raise ConfigurationError(f"seed must be >= 0, got {seed}")
        self.seed = int(seed)
        self.output_dir = output_dir

    def with_seed(self, seed: int) -> BenchmarkConfig:
        d = self.to_dict()
        d["seed"] = seed
        return BenchmarkConfig.from_dict(d)

    def with_output_dir(self, output_dir: str | None) -> BenchmarkConfig:
        d = self.to_dict()
        d["output_dir"] = output_dir
        return BenchmarkConfig.from_dict(d)

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of every experiment field. The output
        directory is not an experiment field and does not enter the hash."""
        d = self.to_dict()
        d.pop("output_dir", None)
        canonical = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BenchmarkConfig):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return f"<BenchmarkConfig seed={self.seed} hash={self.config_hash()[:12]}>"

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "output_dir": self.output_dir,
            "methods": [m.value for m in self.methods],
            "data": self.data.to_dict(),
            "train": self.train.to_dict(),
            "detectors": {
                "baseline": self.baseline.to_dict(),
                "odin": self.odin.to_dict(),
                "iforest": self.iforest.to_dict(),
                "gbm": self.gbm.to_dict(),
            },
            "exposure_pool": self.exposure_pool.to_dict(),
            "evaluation_pools": [p.to_dict() for p in self.evaluation_pools],
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> BenchmarkConfig:
        """Builds a configuration from a nested dict. Missing keys take their
        defaults; unknown keys at any level are an error."""
        check_keys(d, _CONFIG_KEYS, "benchmark configuration")
        detectors = d.get("detectors") or {}
        check_keys(detectors, {"baseline", "odin", "iforest", "gbm"}, "detectors")
        data = {**DatasetSpec().to_dict(), **(d.get("data") or {})}
        pools = d.get("evaluation_pools")
        return BenchmarkConfig(
            data=DatasetSpec.from_dict(data),
            train=TrainConfig.from_dict(d.get("train") or {}),
            methods=d.get("methods"),
            baseline=BaselineParams.from_dict(detectors.get("baseline") or {}),
            odin=OdinParams.from_dict(detectors.get("odin") or {}),
            iforest=IForestParams.from_dict(detectors.get("iforest") or {}),
            gbm=GbmParams.from_dict(detectors.get("gbm") or {}),
            exposure_pool=(
                PoolConfig.from_dict(d["exposure_pool"])
                if d.get("exposure_pool")
                else None
            ),
            evaluation_pools=(
                [PoolConfig.from_dict(p) for p in pools] if pools is not None else None
            ),
            seed=d.get("seed", 0),
            output_dir=d.get("output_dir"),
        )

    @staticmethod
    def from_file(
        href: HREF, ood_io: OodIO | None = None, validate: bool | None = None
    ) -> BenchmarkConfig:
        """Reads a JSON configuration document.

        Args:
            href : Location of the document.
            ood_io : The :class:`~oodbench.OodIO` to read with.
            validate : Validate against the bundled JSON schema. By default the
                document is validated when ``jsonschema`` is installed.

        Raises:
            ConfigurationError : If the document is invalid.
            ConfigValidationError : If schema validation fails.
        """
        d = (ood_io or OodIO.default()).read_json(href)
        if validate is None:
            validate = HAS_JSONSCHEMA
            if not validate:
                logger.debug("jsonschema is not installed; skipping schema check")
        if validate:
            validate_config(d, str(href))
        return BenchmarkConfig.from_dict(d)

    def save_object(self, dest_href: HREF, ood_io: OodIO | None = None) -> None:
        (ood_io or OodIO.default()).save_json(dest_href, self.to_dict())
