"""Behavioral archetypes and few-shot demand forecasting for charging sites.

The library clusters sites by how they behave (weekly utilization profile
plus canonical series statistics), trains one forecaster per cluster next to
a single global baseline, evaluates both on sites the models never saw, and
picks the cluster count by that held-out forecast accuracy. A small CLI
(``chargecast synth|run|sweep|predict``) wires the pieces into a reproducible
pipeline over plain CSV/JSON files.
"""

__version__ = "0.1.0"

from .data import (
    Dataset,
    SiteSeries,
    SplitSpec,
    WindowSpec,
    day_of_week,
    filter_min_history,
    load_csv,
    split_sites,
)
from .synth import ArchetypeTemplate, SynthSpec, default_spec, default_templates, generate_dataset, generate_site
from .features import FeatureVector, Standardizer, canonical_features, featurize, fit_standardizer, weekly_profile
from .clustering import ClusterModel, cluster_barycenter, kmeans_fit, kmeans_predict, lloyd_kmeans
from .forecaster import (
    ExpertSet,
    ForecastModel,
    TrainConfig,
    WindowSample,
    build_windows,
    encode_input,
    forward,
    gradient_check,
    predict,
    train,
    train_expert_set,
)
from .evaluation import EvalReport, SweepCurve, evaluate, rmse, run_pipeline, smape, sweep_k

__all__ = [
    "ArchetypeTemplate",
    "ClusterModel",
    "Dataset",
    "EvalReport",
    "ExpertSet",
    "FeatureVector",
    "ForecastModel",
    "SiteSeries",
    "SplitSpec",
    "Standardizer",
    "SweepCurve",
    "SynthSpec",
    "TrainConfig",
    "WindowSample",
    "WindowSpec",
    "build_windows",
    "canonical_features",
    "cluster_barycenter",
    "day_of_week",
    "default_spec",
    "default_templates",
    "encode_input",
    "evaluate",
    "featurize",
    "filter_min_history",
    "fit_standardizer",
    "forward",
    "generate_dataset",
    "generate_site",
    "gradient_check",
    "kmeans_fit",
    "kmeans_predict",
    "lloyd_kmeans",
    "load_csv",
    "predict",
    "rmse",
    "run_pipeline",
    "smape",
    "split_sites",
    "sweep_k",
    "train",
    "train_expert_set",
    "weekly_profile",
]
