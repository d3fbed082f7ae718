"""Per-scale descriptors and supervised dataset assembly.

Every coefficient series (or raw window, in time-domain mode) is reduced
to 14 statistics; the per-scale blocks are concatenated scale-major into
one flat feature vector per window.  The layout string names the domain,
scale count and feature count so a trained model can refuse vectors built
under a different layout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from sproutcast.config import PipelineConfig
from sproutcast.ingest import Dataset, IngestError, Recording
from sproutcast.preprocess import condition, segment
from sproutcast.wavelet import ScalePlan, TransformedWindow, cwt, plan_scales

FEATURE_NAMES = (
    "energy",
    "p5",
    "p25",
    "median",
    "mean",
    "p75",
    "p95",
    "std",
    "min",
    "max",
    "entropy",
    "zero_crossings",
    "mean_crossings",
    "rms",
)
FEATURES_PER_SCALE = len(FEATURE_NAMES)


@dataclass(frozen=True)
class ScaleFeatures:
    """The 14 statistics of one coefficient series."""

    energy: float
    p5: float
    p25: float
    median: float
    mean: float
    p75: float
    p95: float
    std: float
    min: float
    max: float
    entropy: float
    zero_crossings: int
    mean_crossings: int
    rms: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES], dtype=np.float64)


@dataclass(frozen=True)
class FeatureVector:
    """Concatenated per-scale features for one window, stamped with its day."""

    subject_id: str
    window_index: int
    day_offset: int
    values: np.ndarray


@dataclass(frozen=True)
class LabeledExample:
    features: FeatureVector
    target_days: float


@dataclass(frozen=True)
class ExampleSet:
    """A supervised dataset: examples plus per-subject bookkeeping.

    ``m_per_subject`` holds window counts M_j and ``true_day`` the
    ground-truth sprouting day offset D_j, both keyed by subject id.
    """

    examples: list[LabeledExample]
    layout: str
    m_per_subject: dict[str, int]
    true_day: dict[str, int]

    def subject_ids(self) -> list[str]:
        return sorted(self.m_per_subject)

    def matrix(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (X, y, subject index array) over all examples."""
        x = np.stack([ex.features.values for ex in self.examples])
        y = np.array([ex.target_days for ex in self.examples], dtype=np.float64)
        order = {sid: i for i, sid in enumerate(self.subject_ids())}
        groups = np.array([order[ex.features.subject_id] for ex in self.examples])
        return x, y, groups


def layout_version(k: int, time_domain: bool = False) -> str:
    if time_domain:
        return f"time-f{FEATURES_PER_SCALE}-v1"
    return f"wavelet-morlet-k{k}-f{FEATURES_PER_SCALE}-v1"


def _feature_row(x: np.ndarray, entropy_bins: int) -> np.ndarray:
    lo = float(x.min())
    hi = float(x.max())
    mean = float(x.mean())
    p5, p25, median, p75, p95 = np.percentile(x, (5.0, 25.0, 50.0, 75.0, 95.0))
    energy = float(x @ x)
    if hi > lo:
        counts, _ = np.histogram(x, bins=entropy_bins, range=(lo, hi))
        p = counts[counts > 0] / x.size
        entropy = float(-(p * np.log(p)).sum())
    else:
        entropy = 0.0
    zero_crossings = int(np.count_nonzero(x[:-1] * x[1:] < 0.0))
    centered = x - mean
    mean_crossings = int(np.count_nonzero(centered[:-1] * centered[1:] < 0.0))
    return np.array(
        [
            energy,
            p5,
            p25,
            median,
            mean,
            p75,
            p95,
            float(x.std()),
            lo,
            hi,
            entropy,
            zero_crossings,
            mean_crossings,
            float(np.sqrt(energy / x.size)),
        ]
    )


def extract_scale_features(coeffs: np.ndarray, entropy_bins: int = 64) -> ScaleFeatures:
    """Reduce one coefficient series to its 14-statistic descriptor.

    Percentiles interpolate linearly between closest ranks; entropy is the
    Shannon entropy (nats) of an equal-width histogram over the series' own
    range, defined as 0 for a constant series; crossings count strict sign
    changes only.
    """
    x = np.asarray(coeffs, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("coefficient series must be 1-D with at least 2 samples")
    if not np.isfinite(x).all():
        raise ValueError("coefficient series contains non-finite values")
    row = _feature_row(x, entropy_bins)
    kwargs = dict(zip(FEATURE_NAMES, row))
    kwargs["zero_crossings"] = int(kwargs["zero_crossings"])
    kwargs["mean_crossings"] = int(kwargs["mean_crossings"])
    return ScaleFeatures(**kwargs)


def build_feature_vector(
    tw: TransformedWindow,
    plan: ScalePlan,
    subject_id: str = "",
    day_offset: int = 0,
    entropy_bins: int = 64,
) -> FeatureVector:
    """Concatenate per-scale descriptors, scale-major, into one flat vector."""
    coeffs = tw.coefficients
    if coeffs.shape[0] != plan.k:
        raise ValueError(f"transform has {coeffs.shape[0]} scales, plan expects {plan.k}")
    values = np.concatenate([_feature_row(coeffs[s], entropy_bins) for s in range(plan.k)])
    return FeatureVector(
        subject_id=subject_id,
        window_index=tw.window_index,
        day_offset=day_offset,
        values=values,
    )


def extract_subject_features(rec: Recording, cfg: PipelineConfig) -> list[FeatureVector]:
    """Condition, segment and featurize one recording (no labels needed)."""
    signal = condition(
        rec,
        notch_hz=cfg.notch_hz,
        notch_q=cfg.notch_q,
        lowpass_hz=cfg.lowpass_hz,
        lowpass_q=cfg.lowpass_q,
        target_hz=cfg.target_hz,
    )
    windows = segment(signal, cfg.window_seconds)
    if not windows:
        return []
    if cfg.time_domain:
        return [
            FeatureVector(
                subject_id=w.subject_id,
                window_index=w.window_index,
                day_offset=w.day_offset,
                values=_feature_row(np.asarray(w.samples, dtype=np.float64), cfg.entropy_bins),
            )
            for w in windows
        ]
    plan = plan_scales(signal.sample_rate_hz, len(windows[0].samples), cfg.scales, cfg.omega0)
    vectors = []
    for w in windows:
        tw = cwt(w, plan)
        vectors.append(
            build_feature_vector(
                tw,
                plan,
                subject_id=w.subject_id,
                day_offset=w.day_offset,
                entropy_bins=cfg.entropy_bins,
            )
        )
    return vectors


def build_dataset(
    recordings: Dataset | Iterable[Recording],
    cfg: PipelineConfig | None = None,
) -> ExampleSet:
    """Assemble the supervised dataset over all labelled recordings.

    Each retained window becomes one example with target D_j - d_i in whole
    days.  Output order is deterministic: subjects sorted by id, windows by
    index.  Accepts any iterable of recordings so large synthetic corpora
    can be streamed one subject at a time.
    """
    cfg = cfg or PipelineConfig()
    if isinstance(recordings, Dataset):
        recordings = recordings.recordings
    per_subject: dict[str, list[LabeledExample]] = {}
    true_day: dict[str, int] = {}
    for rec in recordings:
        if rec.sprouting_day is None:
            raise IngestError(f"subject {rec.subject_id!r} has no sprouting_day; cannot label")
        if rec.subject_id in per_subject:
            raise IngestError(f"duplicate subject_id {rec.subject_id!r}")
        d_true = rec.sprouting_day_offset
        examples = []
        for fv in extract_subject_features(rec, cfg):
            target = d_true - fv.day_offset
            if target < 0:
                raise IngestError(
                    f"subject {rec.subject_id!r}: window at day {fv.day_offset} is after "
                    f"the sprouting day {d_true}"
                )
            examples.append(LabeledExample(features=fv, target_days=float(target)))
        per_subject[rec.subject_id] = examples
        true_day[rec.subject_id] = d_true
    ordered: list[LabeledExample] = []
    for sid in sorted(per_subject):
        ordered.extend(per_subject[sid])
    return ExampleSet(
        examples=ordered,
        layout=layout_version(cfg.scales, cfg.time_domain),
        m_per_subject={sid: len(per_subject[sid]) for sid in per_subject},
        true_day=true_day,
    )


def iter_feature_rows(example_set: ExampleSet) -> Iterator[tuple]:
    """Yield (subject_id, window_index, day_offset, target_days, values) rows."""
    for ex in example_set.examples:
        fv = ex.features
        yield fv.subject_id, fv.window_index, fv.day_offset, ex.target_days, fv.values


__all__ = [
    "FEATURE_NAMES",
    "FEATURES_PER_SCALE",
    "ScaleFeatures",
    "FeatureVector",
    "LabeledExample",
    "ExampleSet",
    "layout_version",
    "extract_scale_features",
    "build_feature_vector",
    "extract_subject_features",
    "build_dataset",
    "iter_feature_rows",
]
