"""Leave-one-out evaluation: per-window MAE, per-subject ESD, and the
derived diagnostics (ESD percentile curve, observation-lag sweep, and
conditional calibration of predictions).

One fold trains on every subject but one and scores every window of the
held-out subject; the two headline metrics are two-level means (first
within a subject, then across subjects).  Folds also record the
constant-mean baseline so null datasets can be recognized.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from sproutcast.config import PipelineConfig
from sproutcast.estimate import SubjectEstimate, WindowEstimate, aggregate, rolling_mean, window_estimates
from sproutcast.features import ExampleSet, FeatureVector, build_dataset
from sproutcast.ingest import Dataset
from sproutcast.regress import fit_arrays, fit_ensemble_arrays, spec_from_config


@dataclass(frozen=True)
class FoldResult:
    """Outcome of one leave-one-out fold."""

    held_out_subject: str
    per_window: list[tuple[float, float]]
    window_estimates: list[WindowEstimate]
    subject_estimate: SubjectEstimate
    mae_j: float
    esd_j: float
    baseline_mae_j: float
    true_day: int
    observation_day: float


@dataclass(frozen=True)
class EvaluationReport:
    mae: float
    esd: float
    baseline_mae: float
    esd_percentiles: list[tuple[float, float]]
    tlag_curve: list[dict]
    calibration: dict
    variance_decomposition: dict
    per_subject: list[dict]
    n_subjects: int
    fallback_count: int
    strategy: str
    uq_th: float | None
    label: str = ""


@dataclass(frozen=True)
class _FoldTask:
    x: np.ndarray
    y: np.ndarray
    groups: np.ndarray
    subject_ids: list[str]
    feature_lists: list[list[FeatureVector]]
    true_days: list[int]
    layout: str
    cfg: PipelineConfig


def _run_fold(task: _FoldTask, fold: int) -> FoldResult:
    cfg = task.cfg
    train = task.groups != fold
    test = ~train
    train_ids = {task.subject_ids[g] for g in np.unique(task.groups[train])}
    held_out = task.subject_ids[fold]
    if held_out in train_ids:
        raise RuntimeError(f"leakage: {held_out} present in training subjects")

    spec = spec_from_config(cfg, seed=cfg.seed + fold)
    if cfg.strategy == "ensemble":
        model = fit_ensemble_arrays(
            task.x[train], task.y[train], spec, cfg.n_members, seed=spec.seed, feature_layout=task.layout
        )
    else:
        model = fit_arrays(task.x[train], task.y[train], spec, feature_layout=task.layout)

    estimates = window_estimates(model, task.feature_lists[fold], cfg.uq_th)
    true_day = task.true_days[fold]
    subject_estimate = aggregate(estimates, observation_day=true_day)

    y_test = task.y[test]
    per_window = [(float(yy), e.y_hat) for yy, e in zip(y_test, estimates)]
    if subject_estimate.fallback_used:
        scored = [e for e in estimates if e.day_offset < true_day]
        best = min(scored, key=lambda e: (np.inf if e.ci_halfwidth is None else e.ci_halfwidth, e.window_index))
        kept = [(yy, e) for yy, e in zip(y_test, estimates) if e is best]
    else:
        kept = [(yy, e) for yy, e in zip(y_test, estimates) if e.retained]
    mae_j = float(np.mean([abs(e.y_hat - yy) for yy, e in kept]))
    baseline = float(np.mean(task.y[train]))
    baseline_mae_j = float(np.mean(np.abs(y_test - baseline)))
    return FoldResult(
        held_out_subject=held_out,
        per_window=per_window,
        window_estimates=estimates,
        subject_estimate=subject_estimate,
        mae_j=mae_j,
        esd_j=abs(subject_estimate.d_hat - true_day),
        baseline_mae_j=baseline_mae_j,
        true_day=true_day,
        observation_day=float(true_day),
    )


def loo_cv(data: Dataset | ExampleSet, cfg: PipelineConfig | None = None) -> list[FoldResult]:
    """Run one leave-one-out fold per subject; results ordered by subject id.

    Accepts a raw Dataset (features are built here) or a prebuilt
    ExampleSet.  Folds are independent; cfg.jobs > 1 runs them in worker
    processes without changing any output.
    """
    cfg = cfg or PipelineConfig()
    if isinstance(data, Dataset):
        data.require_labels()
        data = build_dataset(data, cfg)
    subject_ids = data.subject_ids()
    if len(subject_ids) < 2:
        raise ValueError("leave-one-out evaluation needs at least 2 subjects")
    x, y, groups = data.matrix()
    feature_lists = [[] for _ in subject_ids]
    index = {sid: i for i, sid in enumerate(subject_ids)}
    for ex in data.examples:
        feature_lists[index[ex.features.subject_id]].append(ex.features)
    for sid in subject_ids:
        if not feature_lists[index[sid]]:
            raise ValueError(f"subject {sid!r} contributed no windows; cannot evaluate")
    task = _FoldTask(
        x=x,
        y=y,
        groups=groups,
        subject_ids=subject_ids,
        feature_lists=feature_lists,
        true_days=[data.true_day[sid] for sid in subject_ids],
        layout=data.layout,
        cfg=cfg,
    )
    folds = range(len(subject_ids))
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            return list(pool.map(_run_fold, [task] * len(subject_ids), folds))
    return [_run_fold(task, fold) for fold in folds]


def tlag_sweep(folds: list[FoldResult], lags: range | None = None) -> list[dict]:
    """Mean ESD when estimation stops t_lag days relative to true sprouting.

    Subjects with no observable window at a lag are excluded from that
    lag's mean and counted in ``n_subjects``.
    """
    lags = lags if lags is not None else range(-29, 1)
    curve = []
    for lag in lags:
        errors = []
        for fr in folds:
            t = fr.true_day + lag
            if not any(e.day_offset < t for e in fr.window_estimates):
                continue
            est = aggregate(fr.window_estimates, observation_day=t)
            errors.append(abs(est.d_hat - fr.true_day))
        curve.append(
            {
                "t_lag": int(lag),
                "mean_esd": float(np.mean(errors)) if errors else None,
                "n_subjects": len(errors),
            }
        )
    return curve


def _per_day_series(fold: FoldResult) -> tuple[np.ndarray, np.ndarray]:
    """(days, mean prediction per day) for one subject, days ascending."""
    days = sorted({e.day_offset for e in fold.window_estimates})
    by_day = {d: [] for d in days}
    for e in fold.window_estimates:
        by_day[e.day_offset].append(e.y_hat)
    day_arr = np.array(days, dtype=np.float64)
    pred = np.array([np.mean(by_day[d]) for d in days])
    return day_arr, pred


def calibration_curves(
    folds: list[FoldResult],
    bin_width: float = 5.0,
    rolling_n: int = 7,
    min_support: int = 10,
) -> dict:
    """Binned E[Y|Y_hat] and Std(Y|Y_hat) over rolling-meaned daily predictions.

    Per subject the daily prediction series is smoothed with a trailing
    window of ``rolling_n`` days, then (Y, Y_hat) pairs are pooled across
    subjects and conditioned on Y_hat via fixed-width bins.  Values stay in
    the internal days-until (>= 0) convention; the CSV writer negates for
    display.
    """
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    pooled_y: list[np.ndarray] = []
    pooled_pred: list[np.ndarray] = []
    for fr in folds:
        days, pred = _per_day_series(fr)
        pooled_pred.append(rolling_mean(pred, rolling_n))
        pooled_y.append(fr.true_day - days)
    y = np.concatenate(pooled_y)
    y_hat = np.concatenate(pooled_pred)
    bin_idx = np.floor(y_hat / bin_width).astype(np.int64)
    bins = []
    for b in np.unique(bin_idx):
        sel = bin_idx == b
        count = int(sel.sum())
        bins.append(
            {
                "y_hat_center": float((b + 0.5) * bin_width),
                "e_y": float(y[sel].mean()),
                "std_y": float(y[sel].std()),
                "count": count,
                "low_support": count < min_support,
            }
        )
    return {"bin_width": bin_width, "rolling_n": rolling_n, "bins": bins}


def variance_decomposition(y, y_hat, bin_width: float | None = None) -> dict:
    """Var(Y), Var(Y_hat) and E[Var(Y|Y_hat)] with exact or binned conditioning.

    With bin_width None the conditioning groups identical Y_hat values
    (exact); otherwise fixed-width bins.  Population (ddof=0) variances
    throughout, so the law of total variance is checkable as stated.
    """
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if bin_width is None:
        _, inverse = np.unique(y_hat, return_inverse=True)
    else:
        _, inverse = np.unique(np.floor(y_hat / bin_width).astype(np.int64), return_inverse=True)
    n = len(y)
    e_var = 0.0
    for g in range(inverse.max() + 1):
        sel = inverse == g
        e_var += sel.sum() / n * float(y[sel].var())
    return {
        "var_y": float(y.var()),
        "var_y_hat": float(y_hat.var()),
        "e_var_y_given_y_hat": e_var,
    }


def compute_metrics(
    folds: list[FoldResult],
    cfg: PipelineConfig | None = None,
    label: str = "",
) -> EvaluationReport:
    """Aggregate fold results into the full evaluation report."""
    if not folds:
        raise ValueError("no folds to aggregate")
    cfg = cfg or PipelineConfig()
    maes = np.array([fr.mae_j for fr in folds])
    esds = np.array([fr.esd_j for fr in folds])
    percentiles = np.arange(0, 101)
    esd_curve = np.percentile(esds, percentiles)
    pooled = [(yy, yh) for fr in folds for yy, yh in fr.per_window]
    pooled_y = np.array([p[0] for p in pooled])
    pooled_yhat = np.array([p[1] for p in pooled])
    per_subject = [
        {
            "subject_id": fr.held_out_subject,
            "mae": fr.mae_j,
            "esd": fr.esd_j,
            "baseline_mae": fr.baseline_mae_j,
            "d_hat": fr.subject_estimate.d_hat,
            "true_day": fr.true_day,
            "n_windows_used": fr.subject_estimate.n_windows_used,
            "fallback_used": fr.subject_estimate.fallback_used,
        }
        for fr in folds
    ]
    return EvaluationReport(
        mae=float(maes.mean()),
        esd=float(esds.mean()),
        baseline_mae=float(np.mean([fr.baseline_mae_j for fr in folds])),
        esd_percentiles=[(float(p), float(v)) for p, v in zip(percentiles, esd_curve)],
        tlag_curve=tlag_sweep(folds, range(cfg.tlag_min, cfg.tlag_max + 1)),
        calibration=calibration_curves(folds, cfg.calibration_bin_width, cfg.rolling_n),
        variance_decomposition=variance_decomposition(
            pooled_y, pooled_yhat, cfg.calibration_bin_width
        ),
        per_subject=per_subject,
        n_subjects=len(folds),
        fallback_count=sum(fr.subject_estimate.fallback_used for fr in folds),
        strategy=cfg.strategy,
        uq_th=cfg.uq_th,
        label=label,
    )


def report_to_dict(report: EvaluationReport) -> dict:
    return {
        "label": report.label,
        "strategy": report.strategy,
        "uq_th": report.uq_th,
        "n_subjects": report.n_subjects,
        "mae": report.mae,
        "esd": report.esd,
        "baseline_mae": report.baseline_mae,
        "fallback_count": report.fallback_count,
        "esd_percentiles": [[p, v] for p, v in report.esd_percentiles],
        "tlag_curve": report.tlag_curve,
        "calibration": report.calibration,
        "variance_decomposition": report.variance_decomposition,
        "per_subject": report.per_subject,
    }


def report_from_dict(d: dict) -> EvaluationReport:
    return EvaluationReport(
        mae=d["mae"],
        esd=d["esd"],
        baseline_mae=d["baseline_mae"],
        esd_percentiles=[(float(p), float(v)) for p, v in d["esd_percentiles"]],
        tlag_curve=d["tlag_curve"],
        calibration=d["calibration"],
        variance_decomposition=d["variance_decomposition"],
        per_subject=d["per_subject"],
        n_subjects=d["n_subjects"],
        fallback_count=d["fallback_count"],
        strategy=d["strategy"],
        uq_th=d["uq_th"],
        label=d.get("label", ""),
    )


def write_report(report: EvaluationReport, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return path


def write_curves(report: EvaluationReport, out_dir: str | Path) -> list[Path]:
    """Write plot-ready CSVs: ESD percentiles, t_lag sweep, calibration.

    Calibration axes are negated here (and only here) to match the
    presentation convention where sprouting lies -Y days ahead.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []

    p = out_dir / "esd_percentiles.csv"
    lines = ["percentile,esd_days"]
    lines += [f"{pct:g},{val!r}" for pct, val in report.esd_percentiles]
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    paths.append(p)

    p = out_dir / "tlag.csv"
    lines = ["t_lag,mean_esd_days,n_subjects"]
    for row in report.tlag_curve:
        esd = "" if row["mean_esd"] is None else repr(row["mean_esd"])
        lines.append(f"{row['t_lag']},{esd},{row['n_subjects']}")
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    paths.append(p)

    p = out_dir / "calibration.csv"
    lines = ["y_hat_center,e_y,std_y,count,low_support"]
    for row in report.calibration["bins"]:
        lines.append(
            f"{-row['y_hat_center']!r},{-row['e_y']!r},{row['std_y']!r},"
            f"{row['count']},{int(row['low_support'])}"
        )
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    paths.append(p)
    return paths


__all__ = [
    "FoldResult",
    "EvaluationReport",
    "loo_cv",
    "tlag_sweep",
    "calibration_curves",
    "variance_decomposition",
    "compute_metrics",
    "report_to_dict",
    "report_from_dict",
    "write_report",
    "write_curves",
]
