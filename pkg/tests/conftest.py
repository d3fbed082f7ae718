import numpy as np
import pytest

from sproutcast.features import FeatureVector, LabeledExample
from sproutcast.ingest import Recording
from sproutcast.preprocess import ConditionedSignal
from sproutcast.regress import RegressorSpec, TrainedModel

from datetime import date, timedelta

START = date(2023, 10, 1)


def make_recording(subject_id="p00", days=3, rate=1.0, samples=None, sprout_day=None, **kwargs):
    """A small labelled recording; defaults to seeded noise ending at sprouting."""
    n = int(round(days * 86400 * rate))
    if samples is None:
        samples = np.random.default_rng(hash(subject_id) % 2**32).normal(size=n)
    sprout = START + timedelta(days=sprout_day if sprout_day is not None else days)
    return Recording(
        subject_id=subject_id,
        variety=kwargs.get("variety", "Agria"),
        storage_temp_c=kwargs.get("storage_temp_c", 8),
        sample_rate_hz=rate,
        start_day=START,
        samples=samples,
        sprouting_day=sprout,
    )


def make_signal(samples, rate=256.0, subject_id="s"):
    return ConditionedSignal(subject_id=subject_id, sample_rate_hz=rate, samples=samples, start_day=START)


def make_examples(x, y):
    """Wrap plain arrays into LabeledExamples for the regressor."""
    return [
        LabeledExample(
            features=FeatureVector(
                subject_id="t", window_index=i, day_offset=0, values=np.atleast_1d(xi).astype(float)
            ),
            target_days=float(yi),
        )
        for i, (xi, yi) in enumerate(zip(x, y))
    ]


def constant_model(value, n_features=1):
    """A trained model with no trees: predicts ``value`` everywhere."""
    return TrainedModel(
        spec=RegressorSpec(n_trees=1),
        trees=[],
        base_prediction=float(value),
        feature_layout_version="",
        n_features=n_features,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
