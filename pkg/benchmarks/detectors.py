import numpy as np

from oodbench.gbm import fit as fit_gbm
from oodbench.iforest import fit as fit_forest
from oodbench.metrics import ScorePair, auroc, fpr_at_tpr

from ._base import Bench
from ._util import softmax_rows


class IsolationForestBench(Bench):
    def setup(self) -> None:
        self.data = softmax_rows(600, 3, 6.0, seed=0)
        self.queries = softmax_rows(600, 3, 0.5, seed=1)
        self.forest = fit_forest(self.data, n_trees=100, seed=0)

    def time_fit(self) -> None:
        fit_forest(self.data, n_trees=100, seed=0)

    def time_score(self) -> None:
        self.forest.score_samples(self.queries)


class BoostedClassifierBench(Bench):
    def setup(self) -> None:
        in_probs = softmax_rows(600, 3, 6.0, seed=0)
        out_probs = softmax_rows(600, 3, 0.5, seed=1)
        self.x = np.vstack([in_probs, out_probs])
        self.y = np.repeat([0, 1], 600)

    def time_fit(self) -> None:
        fit_gbm(self.x, self.y, n_trees=50, max_depth=3, seed=0)


class MetricsBench(Bench):
    def setup(self) -> None:
        self.scores = ScorePair(
            softmax_rows(5000, 3, 6.0, seed=0).max(axis=1),
            softmax_rows(5000, 3, 0.5, seed=1).max(axis=1),
        )

    def time_auroc(self) -> None:
        auroc(self.scores)

    def time_fpr_at_tpr(self) -> None:
        fpr_at_tpr(self.scores)
