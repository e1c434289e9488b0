"""Command-line pipeline: synth -> run/sweep -> predict.

Every command takes one JSON config (``--config``) so a single artifact pins
a run; a few scalar flags can override config fields for quick experiments.
Outputs are plain CSV/JSON files written atomically, and each run ends with a
manifest echoing the config and the SHA-256 of every artifact, which makes
"did these two runs really match?" a file-compare question.

Exit codes: 0 success, 2 configuration/usage problems, 1 runtime failures
(training divergence, evaluation with no usable sites, ...).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from . import __version__
from .data import Dataset, SplitSpec, WindowSpec, day_of_week, filter_min_history, format_day, load_csv, save_csv
from .errors import ChargecastError, ConfigError
from .evaluation import run_pipeline, save_report_csv, save_report_json, save_sweep_csv, sweep_k
from .features import LAYOUT_VERSION, featurize, save_features_csv, save_features_sidecar
from .fileio import atomic_write_text, sha256_file, write_json
from .forecaster import TrainConfig, load_expert_set, predict, save_expert_set
from .clustering import kmeans_predict, save_assignment_csv
from .data import SiteSeries
from .synth import generate_dataset, save_ground_truth_csv, spec_from_json


@dataclass(frozen=True)
class PipelineConfig:
    out_dir: Path
    data_csv: Path | None = None
    synth_spec: Path | None = None
    min_history_days: int = 35
    split: SplitSpec = SplitSpec()
    window: WindowSpec = WindowSpec()
    train: TrainConfig = TrainConfig()
    k: int | None = None
    ks: tuple[int, ...] | None = None
    kmeans_max_iters: int = 300
    kmeans_tol: float = 1e-6

    def echo(self) -> dict:
        return {
            "out_dir": str(self.out_dir),
            "data_csv": str(self.data_csv) if self.data_csv else None,
            "synth_spec": str(self.synth_spec) if self.synth_spec else None,
            "min_history_days": self.min_history_days,
            "split": {"train_fraction": self.split.train_fraction, "seed": self.split.seed},
            "window": {"context_len": self.window.context_len, "horizon": self.window.horizon},
            "train": self.train.to_dict(),
            "clustering": {
                "k": self.k,
                "ks": list(self.ks) if self.ks else None,
                "max_iters": self.kmeans_max_iters,
                "tol": self.kmeans_tol,
            },
        }


_TOP_KEYS = {"out_dir", "data_csv", "synth_spec", "min_history_days", "split", "window", "train", "clustering"}


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    import json

    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}")
    unknown = set(obj) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"config {path}: unknown keys {sorted(unknown)}")
    try:
        clustering = obj.get("clustering", {})
        ks = clustering.get("ks")
        return PipelineConfig(
            out_dir=Path(obj.get("out_dir", "artifacts")),
            data_csv=Path(obj["data_csv"]) if obj.get("data_csv") else None,
            synth_spec=Path(obj["synth_spec"]) if obj.get("synth_spec") else None,
            min_history_days=int(obj.get("min_history_days", 35)),
            split=SplitSpec(**obj.get("split", {})),
            window=WindowSpec(**obj.get("window", {})),
            train=TrainConfig(**obj.get("train", {})),
            k=int(clustering["k"]) if clustering.get("k") is not None else None,
            ks=tuple(int(k) for k in ks) if ks else None,
            kmeans_max_iters=int(clustering.get("max_iters", 300)),
            kmeans_tol=float(clustering.get("tol", 1e-6)),
        )
    except (ChargecastError, TypeError, ValueError) as e:
        raise ConfigError(f"config {path}: {e}")


def _apply_overrides(cfg: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    if getattr(args, "data", None):
        cfg = replace(cfg, data_csv=Path(args.data), synth_spec=None)
    if getattr(args, "out", None):
        cfg = replace(cfg, out_dir=Path(args.out))
    if getattr(args, "k", None) is not None:
        cfg = replace(cfg, k=args.k)
    if getattr(args, "ks", None):
        cfg = replace(cfg, ks=_parse_ks(args.ks))
    train = cfg.train
    if getattr(args, "seed", None) is not None:
        train = replace(train, seed=args.seed)
    if getattr(args, "epochs", None) is not None:
        train = replace(train, epochs=args.epochs)
    return replace(cfg, train=train)


def _parse_ks(text: str) -> tuple[int, ...]:
    try:
        if "-" in text and "," not in text:
            lo, hi = text.split("-")
            return tuple(range(int(lo), int(hi) + 1))
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise ConfigError(f"cannot parse k list {text!r}; use '1-10' or '1,2,6'")


def _load_input_dataset(cfg: PipelineConfig) -> Dataset:
    if (cfg.data_csv is None) == (cfg.synth_spec is None):
        raise ConfigError("config must name exactly one data source: data_csv or synth_spec")
    if cfg.data_csv is not None:
        if not cfg.data_csv.is_file():
            raise ConfigError(f"input file not found: {cfg.data_csv}")
        try:
            return load_csv(cfg.data_csv)
        except ChargecastError as e:
            raise ConfigError(f"cannot load {cfg.data_csv}: {e}")
    if not cfg.synth_spec.is_file():
        raise ConfigError(f"synth spec not found: {cfg.synth_spec}")
    try:
        dataset, _ = generate_dataset(spec_from_json(cfg.synth_spec))
    except ChargecastError as e:
        raise ConfigError(f"bad synth spec {cfg.synth_spec}: {e}")
    return dataset


def _write_manifest(cfg: PipelineConfig, command: str, files: list[Path], extra: dict | None = None) -> Path:
    manifest = {
        "command": command,
        "package_version": __version__,
        "layout_version": LAYOUT_VERSION,
        "config": cfg.echo(),
        "files": {f.name: sha256_file(f) for f in sorted(files)},
    }
    if extra:
        manifest.update(extra)
    return write_json(cfg.out_dir / "manifest.json", manifest)


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    if cfg.synth_spec is None:
        raise ConfigError("synth needs a synth_spec path in the config")
    if not cfg.synth_spec.is_file():
        raise ConfigError(f"synth spec not found: {cfg.synth_spec}")
    try:
        spec = spec_from_json(cfg.synth_spec)
    except ChargecastError as e:
        raise ConfigError(f"bad synth spec {cfg.synth_spec}: {e}")
    dataset, ground_truth = generate_dataset(spec)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    files = [
        save_csv(dataset, cfg.out_dir / "dataset.csv"),
        save_ground_truth_csv(ground_truth, cfg.out_dir / "ground_truth.csv"),
    ]
    _write_manifest(cfg, "synth", files, extra={"n_sites": len(dataset), "days": spec.days})
    print(f"wrote {len(dataset)} sites x {spec.days} days to {cfg.out_dir}/dataset.csv")
    return 0


def _prepare_dataset(cfg: PipelineConfig) -> Dataset:
    dataset = _load_input_dataset(cfg)
    dataset = filter_min_history(dataset, cfg.min_history_days)
    if len(dataset) < 2:
        raise ConfigError(
            f"only {len(dataset)} sites remain after requiring {cfg.min_history_days} days of history; need >= 2"
        )
    return dataset


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    if cfg.k is None:
        raise ConfigError("run needs clustering.k in the config (or --k)")
    dataset = _prepare_dataset(cfg)
    try:
        result = run_pipeline(
            dataset,
            cfg.k,
            cfg.train,
            cfg.split,
            cfg.window,
            kmeans_max_iters=cfg.kmeans_max_iters,
            kmeans_tol=cfg.kmeans_tol,
        )
    except ValueError as e:
        raise ConfigError(str(e))

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    files = [
        save_features_csv(result.features, cfg.out_dir / "features.csv"),
        save_features_sidecar(result.standardizer, cfg.out_dir / "features_meta.json"),
        save_assignment_csv(result.assignment, cfg.out_dir / "assignments.csv"),
        save_report_json(result.report, cfg.out_dir / "report.json"),
        save_report_csv(result.report, cfg.out_dir / "report.csv"),
    ]
    models_dir = save_expert_set(result.expert_set, result.global_model, cfg.out_dir / "models")
    files += sorted(models_dir.glob("*.json"))
    _write_manifest(
        cfg,
        "run",
        files,
        extra={
            "n_train_sites": len(result.train_ids),
            "n_test_sites": len(result.test_ids),
            "overall": {
                "smape_global": result.report.overall.smape_global,
                "smape_expert": result.report.overall.smape_expert,
                "rmse_global": result.report.overall.rmse_global,
                "rmse_expert": result.report.overall.rmse_expert,
            },
        },
    )
    o = result.report.overall
    print(
        f"k={cfg.k}: sMAPE global {o.smape_global:.2f} vs expert {o.smape_expert:.2f}; "
        f"RMSE global {o.rmse_global:.1f} vs expert {o.rmse_expert:.1f} ({o.n_sites} test sites)"
    )
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    if not cfg.ks:
        raise ConfigError("sweep needs clustering.ks in the config (or --ks)")
    dataset = _prepare_dataset(cfg)
    try:
        curve, reports = sweep_k(
            dataset,
            list(cfg.ks),
            cfg.train,
            cfg.split,
            cfg.window,
            kmeans_max_iters=cfg.kmeans_max_iters,
            kmeans_tol=cfg.kmeans_tol,
        )
    except ChargecastError as e:
        # invalid k lists are config problems; downstream failures stay runtime
        if "ks must" in str(e) or "every k must" in str(e):
            raise ConfigError(str(e))
        raise

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    files = [save_sweep_csv(curve, cfg.out_dir / "sweep.csv")]
    for k, report in reports.items():
        files.append(save_report_json(report, cfg.out_dir / f"report_k{k}.json"))
    _write_manifest(
        cfg,
        "sweep",
        files,
        extra={
            "best_k_smape": curve.best_k_smape,
            "best_k_rmse": curve.best_k_rmse,
            "skipped": [list(item) for item in curve.skipped],
        },
    )
    baseline = curve.point_at(1)
    best = curve.point_at(curve.best_k_smape)
    print(
        f"swept k={list(cfg.ks)}: best k={curve.best_k_smape} "
        f"(sMAPE {best.smape:.2f} vs {baseline.smape:.2f} at k=1)"
    )
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    artifacts = Path(args.artifacts) if args.artifacts else cfg.out_dir / "models"
    input_csv = Path(args.data) if getattr(args, "data", None) else cfg.data_csv
    if input_csv is None:
        raise ConfigError("predict needs an input site CSV (config data_csv or --data)")
    if not input_csv.is_file():
        raise ConfigError(f"input file not found: {input_csv}")
    try:
        es, _global_model = load_expert_set(artifacts)
    except FileNotFoundError as e:
        raise ConfigError(f"missing model artifact: {e}")
    if es.cluster_model.layout_version != LAYOUT_VERSION:
        raise ConfigError(
            f"artifacts use feature layout {es.cluster_model.layout_version!r}, "
            f"this build expects {LAYOUT_VERSION!r}"
        )

    try:
        dataset = load_csv(input_csv)
    except ChargecastError as e:
        raise ConfigError(f"cannot load {input_csv}: {e}")
    if len(dataset) != 1:
        raise ConfigError(f"predict expects a single-site CSV; {input_csv} holds {len(dataset)} series")
    (site,) = dataset.sites.values()
    L = cfg.window.context_len
    if len(site) < L:
        raise ConfigError(f"site {site.site_id!r} has {len(site)} days of history; predict needs >= {L}")

    context = site.values[-L:]
    context_series = SiteSeries(site.site_id, site.start_day + len(site) - L, context)
    cluster = kmeans_predict(es.cluster_model, featurize(context_series, es.cluster_model.standardizer).combined)
    model = es.models[cluster]
    first_dow = day_of_week(site.end_day + 1)
    forecast = predict(model, context, first_dow)

    out_path = Path(args.out) if getattr(args, "out", None) else cfg.out_dir / "forecast.csv"
    lines = ["date,kwh_forecast"]
    lines += [f"{format_day(site.end_day + 1 + j)},{v:.6f}" for j, v in enumerate(forecast)]
    atomic_write_text(out_path, "\n".join(lines) + "\n")
    print(f"site {site.site_id!r} -> cluster {cluster}; wrote {len(forecast)}-day forecast to {out_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chargecast",
        description="Cluster charging sites into behavioral archetypes and forecast demand with per-cluster experts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="path to the JSON pipeline config")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--seed", type=int, help="override the training seed")

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset CSV from a template spec")
    add_common(p_synth)
    p_synth.set_defaults(func=cmd_synth)

    p_run = sub.add_parser("run", help="full pipeline at a fixed k; writes features, models, and a report")
    add_common(p_run)
    p_run.add_argument("--data", help="override the input dataset CSV")
    p_run.add_argument("--k", type=int, help="override the cluster count")
    p_run.add_argument("--epochs", type=int, help="override training epochs")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run the pipeline across candidate ks; writes sweep.csv")
    add_common(p_sweep)
    p_sweep.add_argument("--data", help="override the input dataset CSV")
    p_sweep.add_argument("--ks", help="override candidate ks, e.g. '1-10' or '1,2,6'")
    p_sweep.add_argument("--epochs", type=int, help="override training epochs")
    p_sweep.set_defaults(func=cmd_sweep)

    p_pred = sub.add_parser("predict", help="7-day forecast for one site CSV using saved artifacts")
    add_common(p_pred)
    p_pred.add_argument("--data", help="single-site input CSV (defaults to config data_csv)")
    p_pred.add_argument("--artifacts", help="models directory from a previous run (defaults to out_dir/models)")
    p_pred.set_defaults(func=cmd_predict)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ChargecastError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
