from __future__ import annotations

import logging
from typing import Any

import numpy as np
import numpy.typing as npt

from oodbench.dataset import OodPool, Split, SplitDataset
from oodbench.errors import ConfigurationError, TrainingError
from oodbench.nn.classifier import DEFAULT_HIDDEN_UNITS, SoftmaxClassifier
from oodbench.nn.losses import cross_entropy, smoothed_targets
from oodbench.samples import FeatureInputs, FloatArray
from oodbench.utils import StringEnum, check_keys

logger = logging.getLogger(__name__)

#: Training stops once the learning rate falls below this fraction of its start.
MIN_LEARNING_RATE_FACTOR = 1e-6


class StopReason(StringEnum):
    MAX_EPOCHS = "max-epochs"
    LEARNING_RATE_FLOOR = "learning-rate-floor"


class TrainConfig:
    """Hyperparameters of classifier training.

    Args:
        learning_rate : Initial Adam step size ``eta > 0``.
        label_smoothing : Smoothing weight ``alpha`` in ``[0, 1)``.
        patience : Epochs without validation improvement before the learning rate
            is decayed.
        lr_decay : Factor in ``(0, 1)`` applied to the learning rate on a plateau.
        max_epochs : Upper bound on the number of epochs.
        batch_size : Minibatch size.
        beta1 : Adam first-moment decay.
        beta2 : Adam second-moment decay.
        adam_epsilon : Adam denominator guard.
        oe_weight : Weight ``lambda >= 0`` of the outlier-exposure term.
        hidden_units : Hidden layer width of freshly initialized models.
        seed : Seed of the initialization and of the shuffling order.
    """

    def __init__(
        self,
        learning_rate: float = 0.01,
        label_smoothing: float = 0.2,
        patience: int = 3,
        lr_decay: float = 0.6,
        max_epochs: int = 60,
        batch_size: int = 32,
        beta1: float = 0.9,
        beta2: float = 0.999,
        adam_epsilon: float = 1e-8,
        oe_weight: float = 0.5,
        hidden_units: int = DEFAULT_HIDDEN_UNITS,
        seed: int = 0,
    ) -> None:
        if not learning_rate > 0:
            raise ConfigurationError(f"learning_rate must be > 0, got {learning_rate}")
        if not 0.0 <= label_smoothing < 1.0:
            raise ConfigurationError(
                f"label_smoothing must be in [0, 1), got {label_smoothing}"
            )
        if patience < 1:
            raise ConfigurationError(f"patience must be >= 1, got {patience}")
        if not 0.0 < lr_decay < 1.0:
            raise ConfigurationError(f"lr_decay must be in (0, 1), got {lr_decay}")
        if max_epochs < 1:
            raise ConfigurationError(f"max_epochs must be >= 1, got {max_epochs}")
        if batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {batch_size}")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ConfigurationError("Adam moment decays must be in [0, 1)")
        if not adam_epsilon > 0:
            raise ConfigurationError(f"adam_epsilon must be > 0, got {adam_epsilon}")
        if not oe_weight >= 0:
            raise ConfigurationError(f"oe_weight must be >= 0, got {oe_weight}")
        if hidden_units < 1:
            raise ConfigurationError(f"hidden_units must be >= 1, got {hidden_units}")
        self.learning_rate = float(learning_rate)
        self.label_smoothing = float(label_smoothing)
        self.patience = int(patience)
        self.lr_decay = float(lr_decay)
        self.max_epochs = int(max_epochs)
        self.batch_size = int(batch_size)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.adam_epsilon = float(adam_epsilon)
        self.oe_weight = float(oe_weight)
        self.hidden_units = int(hidden_units)
        self.seed = int(seed)

    def with_seed(self, seed: int) -> TrainConfig:
        d = self.to_dict()
        d["seed"] = seed
        return TrainConfig.from_dict(d)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TrainConfig):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return f"<TrainConfig {self.to_dict()}>"

    def to_dict(self) -> dict[str, Any]:
        return {
            "learning_rate": self.learning_rate,
            "label_smoothing": self.label_smoothing,
            "patience": self.patience,
            "lr_decay": self.lr_decay,
            "max_epochs": self.max_epochs,
            "batch_size": self.batch_size,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "adam_epsilon": self.adam_epsilon,
            "oe_weight": self.oe_weight,
            "hidden_units": self.hidden_units,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> TrainConfig:
        """Constructs a TrainConfig from a dict; missing keys take their defaults
        and unknown keys are an error."""
        check_keys(d, set(TrainConfig().to_dict()), "train")
        return TrainConfig(**d)


class TrainHistory:
    """Per-epoch record of a training run. Index 0 describes the initial model."""

    def __init__(self) -> None:
        self.train_loss: list[float] = []
        self.validation_loss: list[float] = []
        self.learning_rate: list[float] = []
        self.best_epoch = 0
        self.stop_epoch = 0
        self.stop_reason: StopReason | None = None

    def record(self, train_loss: float, validation_loss: float, lr: float) -> None:
        self.train_loss.append(train_loss)
        self.validation_loss.append(validation_loss)
        self.learning_rate.append(lr)

    @property
    def best_validation_loss(self) -> float:
        return self.validation_loss[self.best_epoch]

    def __len__(self) -> int:
        return len(self.validation_loss)

    def __repr__(self) -> str:
        return (
            f"<TrainHistory epochs={self.stop_epoch} best={self.best_epoch} "
            f"stop={self.stop_reason}>"
        )


class AdamOptimizer:
    """Adam with bias-corrected moment estimates.

    Args:
        beta1 : First-moment decay.
        beta2 : Second-moment decay.
        epsilon : Denominator guard.
    """

    def __init__(
        self, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8
    ) -> None:
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.first_moments: list[FloatArray] = []
        self.second_moments: list[FloatArray] = []

    def step(
        self,
        params: list[FloatArray],
        grads: list[FloatArray],
        learning_rate: float,
    ) -> None:
        """Updates ``params`` in place from ``grads``."""
        if not self.first_moments:
            self.first_moments = [np.zeros_like(p) for p in params]
            self.second_moments = [np.zeros_like(p) for p in params]
        self.step_count += 1
        t = self.step_count
        correction1 = 1.0 - self.beta1**t
        correction2 = 1.0 - self.beta2**t
        for p, g, m, v in zip(params, grads, self.first_moments, self.second_moments):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= learning_rate * (m / correction1) / (
                np.sqrt(v / correction2) + self.epsilon
            )


def _loss(
    model: SoftmaxClassifier, x: FloatArray, y: np.ndarray, alpha: float
) -> float:
    targets = smoothed_targets(y, model.n_classes, alpha)
    return float(cross_entropy(model.predict_proba(x, 1.0), targets).mean())


def _fit(
    model: SoftmaxClassifier,
    dataset: SplitDataset,
    config: TrainConfig,
    pool: OodPool | None,
    ood_seed: int | None,
) -> tuple[SoftmaxClassifier, TrainHistory]:
    x = dataset.features(Split.TRAIN)
    y = dataset.labels(Split.TRAIN)
    x_val = dataset.features(Split.VALIDATION)
    y_val = dataset.labels(Split.VALIDATION)
    if len(y) == 0 or len(y_val) == 0:
        raise ConfigurationError(
            "Training needs non-empty train and validation splits"
        )
    if model.feature_dim != dataset.feature_dim or model.n_classes != dataset.n_classes:
        raise ConfigurationError(
            f"Model layers {model.layer_sizes} do not fit a dataset with "
            f"d={dataset.feature_dim} and M={dataset.n_classes}"
        )

    alpha = config.label_smoothing
    use_oe = pool is not None and config.oe_weight > 0
    ood_x = None if pool is None else pool.features
    if ood_x is not None and ood_x.shape[1] != model.feature_dim:
        raise ConfigurationError(
            f"OOD pool has dimension {ood_x.shape[1]}, model expects "
            f"{model.feature_dim}"
        )
    rng = np.random.default_rng(config.seed)
    ood_rng = np.random.default_rng(config.seed + 1 if ood_seed is None else ood_seed)
    uniform = np.full((config.batch_size, model.n_classes), 1.0 / model.n_classes)

    current = model.clone()
    optimizer = AdamOptimizer(config.beta1, config.beta2, config.adam_epsilon)
    lr = config.learning_rate
    lr_floor = MIN_LEARNING_RATE_FACTOR * config.learning_rate

    history = TrainHistory()
    best_loss = _loss(current, x_val, y_val, alpha)
    history.record(_loss(current, x, y, alpha), best_loss, lr)
    best = current.clone()
    stale = 0
    history.stop_reason = StopReason.MAX_EPOCHS

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(y))
        batch_losses = []
        for start in range(0, len(y), config.batch_size):
            idx = order[start : start + config.batch_size]
            targets = smoothed_targets(y[idx], model.n_classes, alpha)
            loss, grads = current.loss_and_gradients(x[idx], targets)
            if use_oe and ood_x is not None:
                ood_idx = ood_rng.integers(0, len(ood_x), size=len(idx))
                oe_loss, oe_grads = current.loss_and_gradients(
                    ood_x[ood_idx], uniform[: len(idx)], config.oe_weight
                )
                loss += oe_loss
                grads = [g + o for g, o in zip(grads, oe_grads)]
            if not np.isfinite(loss):
                raise TrainingError(epoch)
            optimizer.step(current.parameters(), grads, lr)
            batch_losses.append(loss)

        val_loss = _loss(current, x_val, y_val, alpha)
        if not np.isfinite(val_loss):
            raise TrainingError(epoch)
        history.record(float(np.mean(batch_losses)), val_loss, lr)
        logger.debug(
            f"epoch {epoch}: train loss {history.train_loss[-1]:.6f}, "
            f"validation loss {val_loss:.6f}, lr {lr:.3g}"
        )

        if val_loss < best_loss:
            best_loss = val_loss
            best = current.clone()
            history.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                lr *= config.lr_decay
                stale = 0
                logger.debug(f"epoch {epoch}: learning rate decayed to {lr:.3g}")

        history.stop_epoch = epoch
        if lr < lr_floor:
            history.stop_reason = StopReason.LEARNING_RATE_FLOOR
            break

    if history.stop_reason == StopReason.LEARNING_RATE_FLOOR:
        logger.warning(
            f"Learning rate fell below {lr_floor:.3g} after {history.stop_epoch} "
            "epochs; training stopped"
        )
    logger.info(
        f"Trained {best!r}: best validation loss {best_loss:.6f} "
        f"at epoch {history.best_epoch} of {history.stop_epoch}"
    )
    return best, history


def train(
    model: SoftmaxClassifier,
    dataset: SplitDataset,
    config: TrainConfig,
) -> tuple[SoftmaxClassifier, TrainHistory]:
    """Trains a copy of ``model`` with Adam on label-smoothed cross-entropy.

    After every epoch the validation loss is compared to the best so far; after
    ``patience`` epochs without improvement the learning rate is multiplied by
    ``lr_decay``. Training stops at ``max_epochs`` or once the learning rate drops
    below ``1e-6`` times its initial value. The model with the lowest validation
    loss, possibly the initial one, is returned.

    Raises:
        TrainingError : If a loss becomes non-finite.
    """
    return _fit(model, dataset, config, None, None)


def train_with_oe(
    model: SoftmaxClassifier,
    dataset: SplitDataset,
    pool: OodPool,
    config: TrainConfig,
    ood_seed: int | None = None,
) -> tuple[SoftmaxClassifier, TrainHistory]:
    """Like :func:`train`, with outlier exposure: every batch loss adds
    ``oe_weight`` times the uniform cross-entropy averaged over an equally sized
    batch drawn from ``pool``.

    The OOD batches come from a generator seeded by ``ood_seed`` (default
    ``seed + 1``), so the shuffling order matches :func:`train` with the same
    config. With ``oe_weight == 0`` the result equals that of :func:`train`.
    """
    if len(pool) == 0:
        raise ConfigurationError("Outlier exposure needs a non-empty OOD pool")
    return _fit(model, dataset, config, pool, ood_seed)


def classification_error(
    model: SoftmaxClassifier,
    x: FeatureInputs,
    y: npt.ArrayLike,
) -> float:
    """Fraction of inputs whose predicted class differs from the label."""
    labels = np.asarray(y, dtype=np.int64)
    if labels.size == 0:
        return 0.0
    return float(np.mean(model.predict(x) != labels))
