"""Accuracy metrics, unseen-site evaluation, and the forecast-guided k-sweep.

Evaluation protocol: each held-out site contributes exactly one window, its
last L+H days. The first L days form the context; features computed from
that context alone decide the site's cluster (the deployment-faithful
reading of "few shot" - nothing about the site's longer history leaks in),
and both the global model and the assigned expert forecast the final H days.
Scores are macro averages: unweighted over sites overall, and over member
sites per cluster.

The sweep trains the global model once and reuses it for every k, so
differences along the curve isolate the clustering effect. All seeds derive
from (train seed, split seed, k); repeating a sweep reproduces it exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .clustering import Assignment, ClusterModel, kmeans_fit, kmeans_predict
from .data import Dataset, SiteSeries, SplitSpec, WindowSpec, day_of_week, split_sites
from .errors import EvaluationError, ValidationError
from .features import FeatureVector, Standardizer, canonical_features, featurize, fit_standardizer
from .fileio import atomic_write_text, write_json
from .forecaster import ExpertSet, ForecastModel, TrainConfig, build_windows, predict, train, train_expert_set
from .rng import derive_seed

SMAPE_EPS = 1e-9


def smape(y, yhat) -> float:
    """Symmetric MAPE in percent, bounded in [0, 200].

    Per-day terms are 2|yhat - y| / (|yhat| + |y|); a term with denominator
    below 1e-9 counts as 0, so two all-zero weeks agree perfectly.
    """
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape or y.ndim != 1 or y.size < 1:
        raise ValueError(f"smape needs two equal-length vectors, got {y.shape} and {yhat.shape}")
    denom = np.abs(y) + np.abs(yhat)
    terms = np.where(denom < SMAPE_EPS, 0.0, 2.0 * np.abs(yhat - y) / np.maximum(denom, SMAPE_EPS))
    return float(100.0 * terms.mean())


def rmse(y, yhat) -> float:
    """Root mean squared error in the units of the inputs (kWh here)."""
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape or y.ndim != 1 or y.size < 1:
        raise ValueError(f"rmse needs two equal-length vectors, got {y.shape} and {yhat.shape}")
    return float(np.sqrt(np.mean((yhat - y) ** 2)))


@dataclass(frozen=True)
class SiteResult:
    site_id: str
    cluster: int
    smape_global: float
    smape_expert: float
    rmse_global: float
    rmse_expert: float


@dataclass(frozen=True)
class MetricSummary:
    n_sites: int
    smape_global: float
    smape_expert: float
    rmse_global: float
    rmse_expert: float


@dataclass(frozen=True)
class EvalReport:
    k: int
    sites: tuple[SiteResult, ...]
    per_cluster: dict[int, MetricSummary]
    overall: MetricSummary
    skipped: tuple[str, ...] = ()
    seeds: dict | None = None
    config_echo: dict | None = None


def _summarize(results: list[SiteResult]) -> MetricSummary:
    return MetricSummary(
        n_sites=len(results),
        smape_global=float(np.mean([r.smape_global for r in results])),
        smape_expert=float(np.mean([r.smape_expert for r in results])),
        rmse_global=float(np.mean([r.rmse_global for r in results])),
        rmse_expert=float(np.mean([r.rmse_expert for r in results])),
    )


def evaluate(
    test: Dataset,
    es: ExpertSet,
    global_model: ForecastModel,
    w: WindowSpec = WindowSpec(),
    seeds: dict | None = None,
    config_echo: dict | None = None,
) -> EvalReport:
    """Global-vs-expert comparison on held-out sites (one window per site).

    Sites shorter than L+H are skipped and listed in the report. Raises
    EvaluationError when nothing is evaluable.
    """
    cm = es.cluster_model
    results: list[SiteResult] = []
    skipped: list[str] = []
    for sid in test.site_ids():
        s = test.sites[sid]
        if len(s) < w.total:
            skipped.append(sid)
            continue
        tail_start = len(s) - w.total
        context = s.values[tail_start : tail_start + w.context_len]
        target = s.values[tail_start + w.context_len :]
        context_series = SiteSeries(sid, s.start_day + tail_start, context)
        cluster = kmeans_predict(cm, featurize(context_series, cm.standardizer).combined)
        dow = day_of_week(s.start_day + tail_start + w.context_len)
        f_global = predict(global_model, context, dow)
        f_expert = predict(es.models[cluster], context, dow)
        results.append(
            SiteResult(
                site_id=sid,
                cluster=cluster,
                smape_global=smape(target, f_global),
                smape_expert=smape(target, f_expert),
                rmse_global=rmse(target, f_global),
                rmse_expert=rmse(target, f_expert),
            )
        )
    if not results:
        raise EvaluationError("no test site is long enough to evaluate")

    per_cluster = {
        c: _summarize([r for r in results if r.cluster == c])
        for c in sorted({r.cluster for r in results})
    }
    return EvalReport(
        k=cm.k,
        sites=tuple(results),
        per_cluster=per_cluster,
        overall=_summarize(results),
        skipped=tuple(skipped),
        seeds=seeds,
        config_echo=config_echo,
    )


# Seed namespaces shared by run_pipeline and sweep_k; the two paths must agree
# so a single-k run reproduces the matching sweep entry exactly.


def _windows_seed(cfg_seed: int, split_seed: int) -> int:
    return derive_seed(cfg_seed, split_seed, "windows")


def _global_seed(cfg_seed: int, split_seed: int) -> int:
    return derive_seed(cfg_seed, split_seed, "global-model")


def _kmeans_seed(cfg_seed: int, split_seed: int, k: int) -> int:
    return derive_seed(cfg_seed, split_seed, "kmeans", k)


def _expert_seed(cfg_seed: int, split_seed: int, k: int) -> int:
    return derive_seed(cfg_seed, split_seed, "expert-set", k)


def _context_tail(s: SiteSeries, context_len: int) -> SiteSeries:
    """The trailing ``context_len`` days of a series as a standalone series."""
    tail = len(s) - context_len
    return SiteSeries(s.site_id, s.start_day + tail, s.values[tail:])


def _train_features(train_ds: Dataset, w: WindowSpec) -> tuple[list[FeatureVector], Standardizer]:
    """Context-matched featurization: training sites use their trailing L days.

    Unseen sites can only ever be featurized from an L-day context, and two of
    the canonical statistics are length-sensitive by construction (the longest
    above-mean run is divided by n; the trend slope's sampling noise shrinks
    with n). Featurizing training sites on their full histories would put
    centroids and query points in measurably different distributions, which
    breaks nearest-centroid membership transfer, so training sites are
    summarized from the same-length tail instead.
    """
    ids = train_ds.site_ids()
    tails = [_context_tail(train_ds.sites[sid], w.context_len) for sid in ids]
    standardizer = fit_standardizer([canonical_features(t) for t in tails])
    return [featurize(t, standardizer) for t in tails], standardizer


@dataclass(frozen=True)
class PipelineRun:
    """Everything a single-k run produces, ready for persistence."""

    k: int
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    features: tuple[FeatureVector, ...]
    standardizer: Standardizer
    cluster_model: ClusterModel
    assignment: Assignment
    global_model: ForecastModel
    expert_set: ExpertSet
    report: EvalReport


def run_pipeline(
    d: Dataset,
    k: int,
    cfg: TrainConfig,
    s: SplitSpec = SplitSpec(),
    w: WindowSpec = WindowSpec(),
    kmeans_max_iters: int = 300,
    kmeans_tol: float = 1e-6,
) -> PipelineRun:
    """split -> featurize -> cluster -> train global + experts -> evaluate.

    The caller is expected to have filtered short sites already (windows and
    evaluation both need L+H days).
    """
    train_ds, test_ds = split_sites(d, s)
    features, standardizer = _train_features(train_ds, w)
    cm, assignment = kmeans_fit(
        features, k, _kmeans_seed(cfg.seed, s.seed, k), standardizer, max_iters=kmeans_max_iters, tol=kmeans_tol
    )
    windows_seed = _windows_seed(cfg.seed, s.seed)
    global_windows = build_windows(train_ds, w, cfg.max_windows_per_site, windows_seed)
    global_model = train(global_windows, replace(cfg, seed=_global_seed(cfg.seed, s.seed)))
    expert_set = train_expert_set(
        train_ds,
        cm,
        assignment,
        replace(cfg, seed=_expert_seed(cfg.seed, s.seed, k)),
        w,
        global_model=global_model,
        windows_seed=windows_seed,
    )
    seeds = {"train": cfg.seed, "split": s.seed, "k": k}
    report = evaluate(test_ds, expert_set, global_model, w, seeds=seeds, config_echo=cfg.to_dict())
    return PipelineRun(
        k=k,
        train_ids=train_ds.site_ids(),
        test_ids=test_ds.site_ids(),
        features=tuple(features),
        standardizer=standardizer,
        cluster_model=cm,
        assignment=assignment,
        global_model=global_model,
        expert_set=expert_set,
        report=report,
    )


@dataclass(frozen=True)
class SweepPoint:
    k: int
    smape: float
    rmse: float


@dataclass(frozen=True)
class SweepCurve:
    """Expert-model accuracy as a function of cluster count (k=1 is the global baseline)."""

    points: tuple[SweepPoint, ...]
    best_k_smape: int
    best_k_rmse: int
    skipped: tuple[tuple[int, str], ...] = ()

    def point_at(self, k: int) -> SweepPoint:
        for p in self.points:
            if p.k == k:
                return p
        raise KeyError(f"no sweep point for k={k}")


def sweep_k(
    d: Dataset,
    ks: list[int] | tuple[int, ...],
    cfg: TrainConfig,
    s: SplitSpec = SplitSpec(),
    w: WindowSpec = WindowSpec(),
    kmeans_max_iters: int = 300,
    kmeans_tol: float = 1e-6,
) -> tuple[SweepCurve, dict[int, EvalReport]]:
    """Full pipeline per candidate k with the split and global model held fixed.

    ``ks`` must be strictly increasing and include 1 so the expert curve is
    anchored on the global baseline. Candidate ks exceeding the number of
    training sites are skipped with a note. Ties for best k go to the lowest
    k. Returns the curve and the per-k evaluation reports.
    """
    ks = [int(k) for k in ks]
    if not ks:
        raise ValidationError("ks must be nonempty")
    if any(k < 1 for k in ks):
        raise ValidationError("every k must be >= 1")
    if sorted(set(ks)) != ks:
        raise ValidationError("ks must be strictly increasing")
    if 1 not in ks:
        raise ValidationError("ks must contain 1 (the global baseline)")

    train_ds, test_ds = split_sites(d, s)
    features, standardizer = _train_features(train_ds, w)
    windows_seed = _windows_seed(cfg.seed, s.seed)
    global_windows = build_windows(train_ds, w, cfg.max_windows_per_site, windows_seed)
    global_model = train(global_windows, replace(cfg, seed=_global_seed(cfg.seed, s.seed)))

    points: list[SweepPoint] = []
    reports: dict[int, EvalReport] = {}
    skipped: list[tuple[int, str]] = []
    for k in ks:
        if k > len(train_ds):
            skipped.append((k, f"k={k} exceeds the {len(train_ds)} training sites"))
            continue
        cm, assignment = kmeans_fit(
            features, k, _kmeans_seed(cfg.seed, s.seed, k), standardizer, max_iters=kmeans_max_iters, tol=kmeans_tol
        )
        expert_set = train_expert_set(
            train_ds,
            cm,
            assignment,
            replace(cfg, seed=_expert_seed(cfg.seed, s.seed, k)),
            w,
            global_model=global_model,
            windows_seed=windows_seed,
        )
        seeds = {"train": cfg.seed, "split": s.seed, "k": k}
        report = evaluate(test_ds, expert_set, global_model, w, seeds=seeds, config_echo=cfg.to_dict())
        points.append(SweepPoint(k=k, smape=report.overall.smape_expert, rmse=report.overall.rmse_expert))
        reports[k] = report

    if not points:
        raise EvaluationError("every candidate k was skipped")
    best_k_smape = min(points, key=lambda p: (p.smape, p.k)).k
    best_k_rmse = min(points, key=lambda p: (p.rmse, p.k)).k
    curve = SweepCurve(
        points=tuple(points),
        best_k_smape=best_k_smape,
        best_k_rmse=best_k_rmse,
        skipped=tuple(skipped),
    )
    return curve, reports


def _summary_dict(m: MetricSummary) -> dict:
    return {
        "n_sites": m.n_sites,
        "smape_global": m.smape_global,
        "smape_expert": m.smape_expert,
        "rmse_global": m.rmse_global,
        "rmse_expert": m.rmse_expert,
    }


def save_report_json(r: EvalReport, path: str | Path) -> Path:
    return write_json(
        path,
        {
            "k": r.k,
            "overall": _summary_dict(r.overall),
            "per_cluster": {str(c): _summary_dict(m) for c, m in r.per_cluster.items()},
            "sites": [
                {
                    "site_id": sr.site_id,
                    "cluster": sr.cluster,
                    "smape_global": sr.smape_global,
                    "smape_expert": sr.smape_expert,
                    "rmse_global": sr.rmse_global,
                    "rmse_expert": sr.rmse_expert,
                }
                for sr in r.sites
            ],
            "skipped": list(r.skipped),
            "seeds": r.seeds,
            "config": r.config_echo,
        },
    )


def save_report_csv(r: EvalReport, path: str | Path) -> Path:
    lines = ["site_id,cluster,smape_g,smape_e,rmse_g,rmse_e"]
    for sr in r.sites:
        lines.append(
            f"{sr.site_id},{sr.cluster},{sr.smape_global!r},{sr.smape_expert!r},{sr.rmse_global!r},{sr.rmse_expert!r}"
        )
    return atomic_write_text(path, "\n".join(lines) + "\n")


def save_sweep_csv(curve: SweepCurve, path: str | Path) -> Path:
    lines = ["k,smape,rmse"]
    lines += [f"{p.k},{p.smape!r},{p.rmse!r}" for p in curve.points]
    return atomic_write_text(path, "\n".join(lines) + "\n")
