from __future__ import annotations

import logging
from collections.abc import Sequence
from typing import Any

import numpy as np

from oodbench.errors import ConfigurationError, DimensionMismatchError
from oodbench.samples import (
    FeatureVector,
    FloatArray,
    LabeledSample,
    as_feature_matrix,
    feature_vectors,
)
from oodbench.utils import StringEnum, check_keys, get_required

logger = logging.getLogger(__name__)

#: Fractions of samples assigned to the train, validation and test splits.
DEFAULT_SPLIT_RATIOS = (0.6, 0.2, 0.2)

#: Distance kept between the shifted OOD cluster and the farthest class center.
SHIFTED_CLUSTER_OFFSET = 3.0

#: Half-width of the uniform-box OOD pool.
UNIFORM_BOX_HALF_WIDTH = 2.0

#: Default noise of the class clusters. Wide enough that training with label
#: smoothing flattens the confidence beyond the clusters.
DEFAULT_CLUSTER_SPREAD = 0.15


class Split(StringEnum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"


class PoolMode(StringEnum):
    """Enumerates the synthetic out-of-distribution pool generators."""

    UNIFORM_BOX = "uniform-box"
    SHIFTED_CLUSTER = "shifted-cluster"


_DATASET_KEYS = frozenset(
    {"n_classes", "feature_dim", "samples_per_class", "cluster_spread", "seed"}
)


class DatasetSpec:
    """Parameters of the synthetic Gaussian-cluster dataset.

    Args:
        n_classes : Number of classes ``M >= 2``.
        feature_dim : Input dimension ``d >= 2``.
        samples_per_class : Points drawn around each class center.
        cluster_spread : Standard deviation of the isotropic noise. ``0`` gives
            the degenerate case where every point sits exactly on its center.
        seed : Seed of the generator.
    """

    n_classes: int
    feature_dim: int
    samples_per_class: int
    cluster_spread: float
    seed: int

    def __init__(
        self,
        n_classes: int = 3,
        feature_dim: int = 2,
        samples_per_class: int = 300,
        cluster_spread: float = DEFAULT_CLUSTER_SPREAD,
        seed: int = 0,
    ) -> None:
        if n_classes < 2:
            raise ConfigurationError(f"n_classes must be >= 2, got {n_classes}")
        if feature_dim < 2:
            raise ConfigurationError(f"feature_dim must be >= 2, got {feature_dim}")
        if samples_per_class < 1:
            raise ConfigurationError(
                f"samples_per_class must be >= 1, got {samples_per_class}"
            )
        if n_classes * samples_per_class < 5:
            raise ConfigurationError(
                "At least 5 samples are needed for a non-empty validation split, "
                f"got {n_classes * samples_per_class}"
            )
        if not np.isfinite(cluster_spread) or cluster_spread < 0:
            raise ConfigurationError(
                f"cluster_spread must be a non-negative real, got {cluster_spread}"
            )
        self.n_classes = int(n_classes)
        self.feature_dim = int(feature_dim)
        self.samples_per_class = int(samples_per_class)
        self.cluster_spread = float(cluster_spread)
        self.seed = int(seed)

    def with_seed(self, seed: int) -> DatasetSpec:
        return DatasetSpec(
            self.n_classes,
            self.feature_dim,
            self.samples_per_class,
            self.cluster_spread,
            seed,
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DatasetSpec):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return f"<DatasetSpec {self.to_dict()}>"

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_classes": self.n_classes,
            "feature_dim": self.feature_dim,
            "samples_per_class": self.samples_per_class,
            "cluster_spread": self.cluster_spread,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> DatasetSpec:
        check_keys(d, _DATASET_KEYS, "data")
        return DatasetSpec(
            n_classes=get_required(d, "data", "n_classes"),
            feature_dim=get_required(d, "data", "feature_dim"),
            samples_per_class=get_required(d, "data", "samples_per_class"),
            cluster_spread=get_required(d, "data", "cluster_spread"),
            seed=d.get("seed", 0),
        )


class OodPoolSpec:
    """Parameters of a synthetic out-of-distribution pool.

    Args:
        feature_dim : Input dimension; must match the companion dataset.
        n : Number of points, at least one.
        mode : :class:`PoolMode` of the generator.
        seed : Seed of the generator.
        spread : Standard deviation of the shifted cluster. Ignored for
            ``uniform-box``.
        tag : Identifier of the pool; defaults to the mode name.
    """

    def __init__(
        self,
        feature_dim: int,
        n: int,
        mode: PoolMode | str = PoolMode.UNIFORM_BOX,
        seed: int = 0,
        spread: float = 0.05,
        tag: str | None = None,
    ) -> None:
        try:
            self.mode = PoolMode(mode)
        except ValueError:
            raise ConfigurationError(
                f"Unknown pool mode '{mode}'; expected one of "
                f"{', '.join(m.value for m in PoolMode)}"
            )
        if feature_dim < 1:
            raise ConfigurationError(f"feature_dim must be >= 1, got {feature_dim}")
        if n < 1:
            raise ConfigurationError(f"An OOD pool needs at least one point, got {n}")
        if not np.isfinite(spread) or spread < 0:
            raise ConfigurationError(f"spread must be non-negative, got {spread}")
        self.feature_dim = int(feature_dim)
        self.n = int(n)
        self.seed = int(seed)
        self.spread = float(spread)
        self.tag = tag or self.mode.value

    def with_seed(self, seed: int) -> OodPoolSpec:
        return OodPoolSpec(
            self.feature_dim, self.n, self.mode, seed, self.spread, self.tag
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OodPoolSpec):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return f"<OodPoolSpec {self.to_dict()}>"

    def to_dict(self) -> dict[str, Any]:
        return {
            "feature_dim": self.feature_dim,
            "n": self.n,
            "mode": self.mode.value,
            "seed": self.seed,
            "spread": self.spread,
            "tag": self.tag,
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> OodPoolSpec:
        check_keys(
            d, {"feature_dim", "n", "mode", "seed", "spread", "tag"}, "ood pool"
        )
        return OodPoolSpec(
            feature_dim=get_required(d, "ood pool", "feature_dim"),
            n=get_required(d, "ood pool", "n"),
            mode=get_required(d, "ood pool", "mode"),
            seed=d.get("seed", 0),
            spread=d.get("spread", 0.05),
            tag=d.get("tag"),
        )


class SplitDataset:
    """Labeled samples divided into disjoint train, validation and test splits.

    Internally the splits are held as arrays; :attr:`train`, :attr:`validation`
    and :attr:`test` materialize them as :class:`LabeledSample` lists.

    Args:
        features : Mapping of :class:`Split` to ``(n, d)`` feature arrays.
        labels : Mapping of :class:`Split` to integer label arrays.
        n_classes : Number of classes ``M``.
        centers : Optional ``(M, d)`` class centers, known for generated data.
        indices : Optional mapping of :class:`Split` to the indices the samples had
            before splitting. Defaults to consecutive ranges.
    """

    n_classes: int
    feature_dim: int
    centers: FloatArray | None
    indices: dict[Split, np.ndarray]

    def __init__(
        self,
        features: dict[Split, FloatArray],
        labels: dict[Split, np.ndarray],
        n_classes: int,
        centers: FloatArray | None = None,
        indices: dict[Split, np.ndarray] | None = None,
    ) -> None:
        dims = {int(features[s].shape[1]) for s in Split}
        if len(dims) != 1:
            raise DimensionMismatchError(
                int(features[Split.TRAIN].shape[1]), max(dims), "split features"
            )
        if len(features[Split.VALIDATION]) == 0:
            raise ConfigurationError("The validation split must not be empty")
        self.n_classes = int(n_classes)
        self.feature_dim = dims.pop()
        self._features: dict[Split, FloatArray] = {}
        self._labels: dict[Split, np.ndarray] = {}
        for split in Split:
            x = np.array(features[split], dtype=np.float64)
            y = np.array(labels[split], dtype=np.int64)
            if len(x) != len(y):
                raise DimensionMismatchError(len(x), len(y), f"{split} labels")
            if len(y) and (y.min() < 0 or y.max() >= self.n_classes):
                raise ConfigurationError(
                    f"{split} labels must lie in [0, {self.n_classes})"
                )
            x.setflags(write=False)
            y.setflags(write=False)
            self._features[split] = x
            self._labels[split] = y
        if indices is None:
            offset = 0
            indices = {}
            for split in Split:
                n = len(self._labels[split])
                indices[split] = np.arange(offset, offset + n)
                offset += n
        self.indices = indices
        self.centers = None if centers is None else np.array(centers, dtype=np.float64)

    @classmethod
    def from_samples(
        cls,
        samples: Sequence[LabeledSample],
        n_classes: int | None = None,
        seed: int = 0,
        ratios: tuple[float, float, float] = DEFAULT_SPLIT_RATIOS,
    ) -> SplitDataset:
        """Shuffles labeled samples with a seeded permutation and splits them by
        ``ratios`` (default 60/20/20).

        Args:
            samples : The labeled samples, for instance as loaded from CSV.
            n_classes : Number of classes; defaults to the largest label plus one.
            seed : Seed of the permutation.
            ratios : Train, validation and test fractions summing to one.
        """
        if len(samples) == 0:
            raise ConfigurationError("Cannot split an empty list of samples")
        x = as_feature_matrix([s.features for s in samples])
        y = np.array([s.label for s in samples], dtype=np.int64)
        m = int(n_classes) if n_classes is not None else int(y.max()) + 1
        rng = np.random.default_rng(seed)
        return cls._split(x, y, m, rng, ratios)

    @classmethod
    def _split(
        cls,
        x: FloatArray,
        y: np.ndarray,
        n_classes: int,
        rng: np.random.Generator,
        ratios: tuple[float, float, float] = DEFAULT_SPLIT_RATIOS,
        centers: FloatArray | None = None,
    ) -> SplitDataset:
        if len(ratios) != 3 or min(ratios) < 0 or abs(sum(ratios) - 1.0) > 1e-9:
            raise ConfigurationError(f"Invalid split ratios {ratios}")
        n = len(y)
        n_train = int(np.floor(ratios[0] * n + 1e-9))
        n_val = int(np.floor(ratios[1] * n + 1e-9))
        if n_val == 0:
            raise ConfigurationError(
                f"{n} samples leave the validation split empty at ratios {ratios}"
            )
        order = rng.permutation(n)
        bounds = {
            Split.TRAIN: order[:n_train],
            Split.VALIDATION: order[n_train : n_train + n_val],
            Split.TEST: order[n_train + n_val :],
        }
        return cls(
            features={s: x[idx] for s, idx in bounds.items()},
            labels={s: y[idx] for s, idx in bounds.items()},
            n_classes=n_classes,
            centers=centers,
            indices=bounds,
        )

    def features(self, split: Split | str) -> FloatArray:
        """Read-only ``(n, d)`` feature array of a split."""
        return self._features[Split(split)]

    def labels(self, split: Split | str) -> np.ndarray:
        """Read-only label array of a split."""
        return self._labels[Split(split)]

    def samples(self, split: Split | str) -> list[LabeledSample]:
        x, y = self.features(split), self.labels(split)
        return [
            LabeledSample(FeatureVector(row), int(label), self.n_classes)
            for row, label in zip(x, y)
        ]

    @property
    def train(self) -> list[LabeledSample]:
        return self.samples(Split.TRAIN)

    @property
    def validation(self) -> list[LabeledSample]:
        return self.samples(Split.VALIDATION)

    @property
    def test(self) -> list[LabeledSample]:
        return self.samples(Split.TEST)

    def class_means(self) -> FloatArray:
        """Per-class mean of all samples; classes without samples are placed at the
        origin."""
        means = np.zeros((self.n_classes, self.feature_dim))
        x = np.concatenate([self._features[s] for s in Split])
        y = np.concatenate([self._labels[s] for s in Split])
        for k in range(self.n_classes):
            members = x[y == k]
            if len(members):
                means[k] = members.mean(axis=0)
        return means

    def __len__(self) -> int:
        return sum(len(self._labels[s]) for s in Split)

    def __repr__(self) -> str:
        sizes = "/".join(str(len(self._labels[s])) for s in Split)
        return (
            f"<SplitDataset M={self.n_classes} d={self.feature_dim} "
            f"train/validation/test={sizes}>"
        )


class OodPool:
    """A non-empty set of out-of-distribution input points.

    Args:
        samples : Feature vectors, or an ``(n, d)`` array.
        tag : Identifier of the pool.
    """

    tag: str

    def __init__(
        self, samples: Sequence[FeatureVector] | FloatArray, tag: str
    ) -> None:
        x = as_feature_matrix(samples)
        if len(x) == 0:
            raise ConfigurationError(f"OOD pool '{tag}' is empty")
        if not np.isfinite(x).all():
            raise ValueError(f"OOD pool '{tag}' contains non-finite values")
        x = np.array(x)
        x.setflags(write=False)
        self._features = x
        self.tag = tag

    @property
    def features(self) -> FloatArray:
        return self._features

    @property
    def samples(self) -> list[FeatureVector]:
        return feature_vectors(self._features)

    @property
    def feature_dim(self) -> int:
        return int(self._features.shape[1])

    def __len__(self) -> int:
        return int(self._features.shape[0])

    def __repr__(self) -> str:
        return f"<OodPool {self.tag} n={len(self)} d={self.feature_dim}>"


def _random_orthogonal(dim: int, rng: np.random.Generator) -> FloatArray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return np.asarray(q * signs, dtype=np.float64)


def _unit_rows(x: FloatArray) -> FloatArray:
    return np.asarray(x / np.linalg.norm(x, axis=1, keepdims=True), dtype=np.float64)


def class_centers(
    n_classes: int, feature_dim: int, rng: np.random.Generator
) -> FloatArray:
    """Places ``n_classes`` centers on the unit sphere in ``feature_dim``
    dimensions.

    Up to ``2 * feature_dim`` classes use the signed coordinate axes rotated by a
    random orthogonal matrix, so every pair of centers is at least ``sqrt(2)``
    apart. More classes are chosen by farthest-point selection from random unit
    vectors.
    """
    if n_classes <= 2 * feature_dim:
        axes = np.zeros((n_classes, feature_dim))
        for k in range(n_classes):
            axes[k, k // 2] = 1.0 if k % 2 == 0 else -1.0
        return np.asarray(axes @ _random_orthogonal(feature_dim, rng).T)

    candidates = _unit_rows(rng.standard_normal((64 * n_classes, feature_dim)))
    chosen = [0]
    dist = np.linalg.norm(candidates - candidates[0], axis=1)
    while len(chosen) < n_classes:
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(candidates - candidates[nxt], axis=1))
    return candidates[chosen]


def generate_synthetic(spec: DatasetSpec) -> SplitDataset:
    """Draws ``spec.samples_per_class`` points from an isotropic Gaussian around each
    class center and splits them 60/20/20.

    The output depends only on ``spec``: the same spec always yields bit-identical
    arrays.
    """
    rng = np.random.default_rng(spec.seed)
    centers = class_centers(spec.n_classes, spec.feature_dim, rng)
    n = spec.samples_per_class
    x = np.concatenate(
        [
            centers[k]
            + spec.cluster_spread * rng.standard_normal((n, spec.feature_dim))
            for k in range(spec.n_classes)
        ]
    )
    y = np.repeat(np.arange(spec.n_classes), n)
    dataset = SplitDataset._split(x, y, spec.n_classes, rng, centers=centers)
    logger.debug(f"Generated {dataset!r} from seed {spec.seed}")
    return dataset


def generate_ood_pool(
    spec: OodPoolSpec,
    dataset: SplitDataset | None = None,
    centers: FloatArray | None = None,
) -> OodPool:
    """Generates a synthetic out-of-distribution pool.

    ``uniform-box`` draws uniformly from ``[-2, 2]^d``. ``shifted-cluster`` draws a
    Gaussian blob whose center lies ``3`` units beyond the farthest class center
    along a random direction; its noise is truncated to norm ``4 * spread``.

    Args:
        spec : The pool parameters.
        dataset : Companion dataset. Its dimension must match ``spec``, and its
            centers (or class means) locate the shifted cluster.
        centers : Explicit class centers, used instead of the dataset's.

    Raises:
        DimensionMismatchError : If ``spec.feature_dim`` differs from the
            dataset's or the centers'.
    """
    d = spec.feature_dim
    if dataset is not None and dataset.feature_dim != d:
        raise DimensionMismatchError(dataset.feature_dim, d, "OOD pool features")
    if centers is None and dataset is not None:
        centers = dataset.centers
        if centers is None:
            centers = dataset.class_means()
    if centers is not None:
        centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
        if centers.shape[1] != d:
            raise DimensionMismatchError(int(centers.shape[1]), d, "OOD pool features")

    rng = np.random.default_rng(spec.seed)
    if spec.mode == PoolMode.UNIFORM_BOX:
        x = rng.uniform(-UNIFORM_BOX_HALF_WIDTH, UNIFORM_BOX_HALF_WIDTH, (spec.n, d))
    else:
        radius = 1.0
        if centers is not None:
            radius = float(np.linalg.norm(centers, axis=1).max())
        direction = rng.standard_normal(d)
        direction /= np.linalg.norm(direction)
        center = (radius + SHIFTED_CLUSTER_OFFSET) * direction
        noise = spec.spread * rng.standard_normal((spec.n, d))
        limit = 4.0 * spec.spread
        norms = np.linalg.norm(noise, axis=1, keepdims=True)
        scale = np.ones_like(norms)
        np.divide(limit, norms, out=scale, where=norms > limit)
        x = center + noise * scale
    return OodPool(x, spec.tag)
