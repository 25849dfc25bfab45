import numpy as np


def softmax_rows(n: int, n_classes: int, scale: float, seed: int) -> np.ndarray:
    """Softmax outputs of random logits; a larger ``scale`` gives peakier rows."""
    logits = scale * np.random.default_rng(seed).standard_normal((n, n_classes))
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return np.asarray(e / e.sum(axis=1, keepdims=True))
