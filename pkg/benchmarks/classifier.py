import os
import shutil
import tempfile

from oodbench import (
    DatasetSpec,
    SoftmaxClassifier,
    Split,
    TrainConfig,
    generate_synthetic,
)
from oodbench.nn import train

from ._base import Bench


class ClassifierBench(Bench):
    def setup(self) -> None:
        self.temp_dir = tempfile.mkdtemp()
        self.dataset = generate_synthetic(DatasetSpec(3, 2, samples_per_class=300))
        self.config = TrainConfig(max_epochs=10, hidden_units=32)
        self.model = SoftmaxClassifier.initialize(2, 3, 32, seed=0)
        self.test_x = self.dataset.features(Split.TEST)
        self.model_text = self.model.to_text()

    def teardown(self) -> None:
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def time_train(self) -> None:
        """Ten epochs of Adam on 540 training points."""
        train(self.model, self.dataset, self.config)

    def time_predict_proba(self) -> None:
        self.model.predict_proba(self.test_x, 1000.0)

    def time_perturb_batch(self) -> None:
        """One ODIN perturbation step for the whole test split."""
        self.model.perturb_batch(self.test_x, 0.005)

    def time_from_text(self) -> None:
        SoftmaxClassifier.from_text(self.model_text)

    def time_save(self) -> None:
        self.model.save_object(os.path.join(self.temp_dir, "model.txt"))
