from __future__ import annotations

import logging
from html import escape

import numpy as np
import numpy.typing as npt

from oodbench.errors import DimensionMismatchError, ParseError
from oodbench.html.jinja_env import get_jinja_env
from oodbench.nn.losses import cross_entropy, softmax
from oodbench.ood_io import OodIO
from oodbench.samples import (
    FeatureInputs,
    FeatureVector,
    FloatArray,
    ProbVector,
    as_feature_matrix,
)
from oodbench.serialization.identify import ObjectKind, format_header, split_body
from oodbench.utils import HREF, format_float, parse_float

logger = logging.getLogger(__name__)

#: Default width of the hidden layer.
DEFAULT_HIDDEN_UNITS = 32


class SoftmaxClassifier:
    """A feed-forward classifier ``x -> softmax(W2^T relu(W1^T x + b1) + b2)``.

    Layer sizes are ``[d, h, M]``: ``weights1`` has shape ``(d, h)``, ``bias1``
    ``(h,)``, ``weights2`` ``(h, M)`` and ``bias2`` ``(M,)``.

    Args:
        weights1 : Input-to-hidden weights.
        bias1 : Hidden biases.
        weights2 : Hidden-to-output weights.
        bias2 : Output biases.
        temperature : Default softmax temperature ``T > 0``.

    Raises:
        DimensionMismatchError : If the parameter shapes are inconsistent.
        ValueError : If any parameter is not finite or ``temperature <= 0``.
    """

    weights1: FloatArray
    bias1: FloatArray
    weights2: FloatArray
    bias2: FloatArray

    temperature: float
    """The default softmax temperature used when none is passed."""

    def __init__(
        self,
        weights1: npt.ArrayLike,
        bias1: npt.ArrayLike,
        weights2: npt.ArrayLike,
        bias2: npt.ArrayLike,
        temperature: float = 1.0,
    ) -> None:
        self.weights1 = np.array(weights1, dtype=np.float64)
        self.bias1 = np.array(bias1, dtype=np.float64)
        self.weights2 = np.array(weights2, dtype=np.float64)
        self.bias2 = np.array(bias2, dtype=np.float64)
        if self.weights1.ndim != 2 or self.weights2.ndim != 2:
            raise ValueError("Weight matrices must be 2-D")
        d, h = self.weights1.shape
        if self.bias1.shape != (h,):
            raise DimensionMismatchError(h, self.bias1.size, "hidden bias")
        if self.weights2.shape[0] != h:
            raise DimensionMismatchError(h, self.weights2.shape[0], "hidden layer")
        m = self.weights2.shape[1]
        if m < 2:
            raise ValueError(f"A classifier needs at least 2 classes, got {m}")
        if self.bias2.shape != (m,):
            raise DimensionMismatchError(m, self.bias2.size, "output bias")
        if not all(np.isfinite(p).all() for p in self.parameters()):
            raise ValueError("Model parameters must be finite")
        if not temperature > 0:
            raise ValueError(f"Temperature must be positive, got {temperature}")
        self.temperature = float(temperature)

    @classmethod
    def initialize(
        cls,
        feature_dim: int,
        n_classes: int,
        hidden_units: int = DEFAULT_HIDDEN_UNITS,
        seed: int = 0,
    ) -> SoftmaxClassifier:
        """Creates a model with He-normal weights and zero biases."""
        rng = np.random.default_rng(seed)
        w1 = rng.standard_normal((feature_dim, hidden_units)) * np.sqrt(
            2.0 / feature_dim
        )
        w2 = rng.standard_normal((hidden_units, n_classes)) * np.sqrt(
            2.0 / hidden_units
        )
        return cls(w1, np.zeros(hidden_units), w2, np.zeros(n_classes))

    @classmethod
    def zeros(
        cls,
        feature_dim: int,
        n_classes: int,
        hidden_units: int = DEFAULT_HIDDEN_UNITS,
    ) -> SoftmaxClassifier:
        """Creates a model whose logits are zero for every input."""
        return cls(
            np.zeros((feature_dim, hidden_units)),
            np.zeros(hidden_units),
            np.zeros((hidden_units, n_classes)),
            np.zeros(n_classes),
        )

    @property
    def feature_dim(self) -> int:
        return int(self.weights1.shape[0])

    @property
    def hidden_units(self) -> int:
        return int(self.weights1.shape[1])

    @property
    def n_classes(self) -> int:
        return int(self.weights2.shape[1])

    @property
    def layer_sizes(self) -> list[int]:
        return [self.feature_dim, self.hidden_units, self.n_classes]

    def parameters(self) -> list[FloatArray]:
        """The parameter arrays, in the order ``weights1, bias1, weights2, bias2``.
        The arrays are the model's own; optimizers update them in place."""
        return [self.weights1, self.bias1, self.weights2, self.bias2]

    def clone(self) -> SoftmaxClassifier:
        return SoftmaxClassifier(
            self.weights1.copy(),
            self.bias1.copy(),
            self.weights2.copy(),
            self.bias2.copy(),
            self.temperature,
        )

    def _inputs(self, x: FeatureInputs) -> FloatArray:
        return as_feature_matrix(x, self.feature_dim)

    def _hidden(self, x: FloatArray) -> tuple[FloatArray, FloatArray]:
        pre = x @ self.weights1 + self.bias1
        return pre, np.maximum(pre, 0.0)

    def logits(self, x: FeatureInputs) -> FloatArray:
        """Raw output scores, one row per input."""
        _, hidden = self._hidden(self._inputs(x))
        return np.asarray(hidden @ self.weights2 + self.bias2, dtype=np.float64)

    def predict_proba(
        self,
        x: FeatureInputs,
        temperature: float | None = None,
    ) -> FloatArray:
        """Softmax of ``logits / T``, one probability row per input."""
        t = self._temperature(temperature)
        return softmax(self.logits(x), t)

    def predict(self, x: FeatureInputs) -> np.ndarray:
        """Predicted class indices; independent of the temperature."""
        return np.asarray(self.logits(x).argmax(axis=1))

    def forward(
        self, x: FeatureVector | npt.ArrayLike, temperature: float | None = None
    ) -> ProbVector:
        """The softmax output for a single input at temperature ``T``.

        Raises:
            DimensionMismatchError : If ``x`` does not have ``d`` entries.
        """
        probs = self.predict_proba(x, temperature)
        if probs.shape[0] != 1:
            raise ValueError("forward expects a single input; use predict_proba")
        return ProbVector(probs[0])

    def _temperature(self, temperature: float | None) -> float:
        t = self.temperature if temperature is None else float(temperature)
        if not t > 0:
            raise ValueError(f"Temperature must be positive, got {t}")
        return t

    def input_gradient(
        self,
        x: FeatureVector | npt.ArrayLike,
        y: int,
        temperature: float = 1.0,
    ) -> FeatureVector:
        """Exact gradient of ``log f(x)_y`` at temperature ``T`` with respect to
        ``x``.

        Where a hidden unit's pre-activation is exactly zero the rectifier's
        derivative is taken as zero.
        """
        xs = self._inputs(x)
        if xs.shape[0] != 1:
            raise ValueError("input_gradient expects a single input")
        return FeatureVector(self.input_gradients(xs, np.array([y]), temperature)[0])

    def input_gradients(
        self, x: FloatArray, y: npt.ArrayLike, temperature: float = 1.0
    ) -> FloatArray:
        """Row-wise :meth:`input_gradient` for a batch of inputs and classes."""
        x = self._inputs(x)
        labels = np.asarray(y, dtype=np.int64)
        t = self._temperature(temperature)
        pre, hidden = self._hidden(x)
        p = softmax(hidden @ self.weights2 + self.bias2, t)
        grad_z = -p
        grad_z[np.arange(len(labels)), labels] += 1.0
        grad_z /= t
        grad_pre = (grad_z @ self.weights2.T) * (pre > 0.0)
        return np.asarray(grad_pre @ self.weights1.T, dtype=np.float64)

    def perturb_odin(
        self,
        x: FeatureVector | npt.ArrayLike,
        epsilon: float,
        temperature: float = 1.0,
    ) -> FeatureVector:
        """Moves ``x`` one signed-gradient step of size ``epsilon`` towards a higher
        probability of the predicted class.

        The predicted class comes from the untempered output; the gradient of its
        log-probability is taken at ``temperature``. Coordinates with a zero
        gradient stay unchanged.
        """
        xs = self._inputs(x)
        if xs.shape[0] != 1:
            raise ValueError("perturb_odin expects a single input")
        return FeatureVector(self.perturb_batch(xs, epsilon, temperature)[0])

    def perturb_batch(
        self, x: FloatArray, epsilon: float, temperature: float = 1.0
    ) -> FloatArray:
        """Row-wise :meth:`perturb_odin`."""
        if epsilon < 0:
            raise ValueError(f"epsilon must be non-negative, got {epsilon}")
        x = self._inputs(x)
        if epsilon == 0:
            return x.copy()
        predicted = self.predict(x)
        grad = self.input_gradients(x, predicted, temperature)
        return np.asarray(x + epsilon * np.sign(grad), dtype=np.float64)

    def loss_and_gradients(
        self,
        x: FloatArray,
        targets: FloatArray,
        weight: float = 1.0,
    ) -> tuple[float, list[FloatArray]]:
        """Mean cross-entropy of the model's outputs against target distributions
        and its gradients with respect to :meth:`parameters`.

        Args:
            x : ``(n, d)`` inputs.
            targets : ``(n, M)`` target distributions.
            weight : Factor applied to the loss and the gradients.

        Returns:
            ``(loss, [d_weights1, d_bias1, d_weights2, d_bias2])``.
        """
        n = x.shape[0]
        pre, hidden = self._hidden(x)
        p = softmax(hidden @ self.weights2 + self.bias2)
        loss = weight * float(cross_entropy(p, targets).mean())
        grad_z = (weight / n) * (p - targets)
        grad_pre = (grad_z @ self.weights2.T) * (pre > 0.0)
        grads = [
            x.T @ grad_pre,
            grad_pre.sum(axis=0),
            hidden.T @ grad_z,
            grad_z.sum(axis=0),
        ]
        return loss, grads

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SoftmaxClassifier):
            return NotImplemented
        return self.temperature == other.temperature and all(
            np.array_equal(a, b)
            for a, b in zip(self.parameters(), other.parameters())
        )

    def __repr__(self) -> str:
        return f"<SoftmaxClassifier {self.layer_sizes} T={self.temperature}>"

    def _repr_html_(self) -> str:
        jinja_env = get_jinja_env()
        if jinja_env:
            template = jinja_env.get_template("Model.jinja2")
            return str(template.render(model=self))
        else:
            return escape(repr(self))

    def to_text(self) -> str:
        """Serializes the model to the versioned plain-text format: the layer sizes
        and temperature, then each parameter array as one row-major line."""
        lines = [
            format_header(ObjectKind.MODEL),
            "layers " + " ".join(str(s) for s in self.layer_sizes),
            f"temperature {format_float(self.temperature)}",
        ]
        for name, param in zip(_PARAM_NAMES, self.parameters()):
            values = " ".join(format_float(v) for v in param.ravel())
            lines.append(f"{name} {values}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> SoftmaxClassifier:
        """Parses the output of :meth:`to_text`.

        Raises:
            UnknownFormatError : If the header is not a model header.
            ParseError : If the body is malformed.
        """
        body = split_body(text, ObjectKind.MODEL)
        fields = _fields(body)
        try:
            d, h, m = (int(v) for v in fields["layers"])
            temperature = parse_float(fields["temperature"][0])
            shapes = [(d, h), (h,), (h, m), (m,)]
            params = []
            for name, shape in zip(_PARAM_NAMES, shapes):
                values = np.array([parse_float(v) for v in fields[name]])
                if values.size != int(np.prod(shape)):
                    raise ParseError(
                        f"'{name}' has {values.size} values, expected "
                        f"{int(np.prod(shape))}"
                    )
                params.append(values.reshape(shape))
        except KeyError as e:
            raise ParseError(f"Missing field {e} in model text")
        except ValueError as e:
            raise ParseError(f"Invalid model text: {e}")
        return SoftmaxClassifier(*params, temperature=temperature)

    def save_object(self, dest_href: HREF, ood_io: OodIO | None = None) -> None:
        (ood_io or OodIO.default()).write_text(dest_href, self.to_text())

    @staticmethod
    def from_file(href: HREF, ood_io: OodIO | None = None) -> SoftmaxClassifier:
        return SoftmaxClassifier.from_text((ood_io or OodIO.default()).read_text(href))


_PARAM_NAMES = ("weights1", "bias1", "weights2", "bias2")


def _fields(lines: list[str]) -> dict[str, list[str]]:
    fields: dict[str, list[str]] = {}
    for line in lines:
        name, _, rest = line.partition(" ")
        if name in fields:
            raise ParseError(f"Duplicate field '{name}'")
        fields[name] = rest.split()
    return fields


def forward(
    model: SoftmaxClassifier,
    x: FeatureVector | npt.ArrayLike,
    temperature: float | None = None,
) -> ProbVector:
    """Functional form of :meth:`SoftmaxClassifier.forward`."""
    return model.forward(x, temperature)


def input_gradient(
    model: SoftmaxClassifier,
    x: FeatureVector | npt.ArrayLike,
    y: int,
    temperature: float = 1.0,
) -> FeatureVector:
    """Functional form of :meth:`SoftmaxClassifier.input_gradient`."""
    return model.input_gradient(x, y, temperature)


def perturb_odin(
    model: SoftmaxClassifier,
    x: FeatureVector | npt.ArrayLike,
    epsilon: float,
    temperature: float = 1.0,
) -> FeatureVector:
    """Functional form of :meth:`SoftmaxClassifier.perturb_odin`."""
    return model.perturb_odin(x, epsilon, temperature)
