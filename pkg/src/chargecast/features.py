"""Per-site representations used for clustering.

A site is summarized by a 19-dimensional vector: its weekly utilization
profile (7 day-of-week means divided by the overall mean, so the profile is
scale-free) concatenated with 12 canonical statistics covering distribution
shape, autocorrelation structure, trend, and outlier/fluctuation dynamics.
Canonical statistics are standardized against the training population before
clustering; profile entries are left as-is because they are already
dimensionless ratios.

Every statistic has an exact closed-form definition (see
``canonical_features``) so an independent brute-force implementation can
verify this module value-for-value. Degenerate inputs (constant series,
near-zero means) resolve to fixed conventions rather than NaNs: guards kick
in below ``EPS`` and the affected statistic becomes 0 (or 1 for ratio-type
profile entries).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import SiteSeries
from .errors import InsufficientDataError, ValidationError
from .fileio import atomic_write_text, write_json

EPS = 1e-9
ACF_MAX_LAG = 14
ACF_DECAY_THRESHOLD = 1.0 / np.e

PROFILE_NAMES = tuple(f"profile_{d}" for d in ("mon", "tue", "wed", "thu", "fri", "sat", "sun"))
CANONICAL_NAMES = (
    "mean",
    "std",
    "cv",
    "skewness",
    "acf_lag1",
    "acf_lag7",
    "acf_efold_lag",
    "trend_slope",
    "outlier_frac",
    "above_mean_run",
    "median_ratio",
    "flux_frac",
)
FEATURE_NAMES = PROFILE_NAMES + CANONICAL_NAMES

# Bump when the feature list, order, or any formula changes; artifacts carry it
# so stale models are never mixed with differently laid-out vectors.
LAYOUT_VERSION = "profile7+canon12/v1"


def weekly_profile(x: SiteSeries) -> np.ndarray:
    """Day-of-week means normalized by the overall mean (Monday first).

    Ratios, not sums, so partial trailing weeks do not bias specific days.
    A near-zero overall mean (all-idle site) maps to the flat profile of 1s.
    """
    if len(x) < 7:
        raise InsufficientDataError(f"site {x.site_id!r}: weekly profile needs >= 7 days, got {len(x)}")
    overall = float(x.values.mean())
    if overall < EPS:
        return np.ones(7)
    dow = x.days_of_week()
    return np.array([x.values[dow == d].mean() for d in range(7)]) / overall


def _acf(values: np.ndarray, mean: float, lag: int) -> float:
    dev = values - mean
    den = float(np.dot(dev, dev))
    if den < EPS:
        return 0.0
    num = float(np.dot(dev[: len(values) - lag], dev[lag:])) if lag < len(values) else 0.0
    return num / den


def _longest_run_above(values: np.ndarray, mean: float) -> int:
    best = run = 0
    for above in values > mean:
        run = run + 1 if above else 0
        best = max(best, run)
    return best


def canonical_features(x: SiteSeries) -> np.ndarray:
    """The 12 canonical statistics, in ``CANONICAL_NAMES`` order.

    1.  mean
    2.  population standard deviation (divisor n)
    3.  coefficient of variation: std / max(mean, EPS)
    4.  skewness: (1/n) sum(((x - mean)/std)^3), 0 when std < EPS
    5.  autocorrelation at lag 1:
            acf(L) = sum_t (x_t - mean)(x_{t+L} - mean) / sum_t (x_t - mean)^2,
        0 when the denominator is below EPS
    6.  autocorrelation at lag 7
    7.  first lag L in 1..14 with acf(L) < 1/e, else 14
    8.  least-squares slope of x against t = 0..n-1, divided by max(mean, EPS)
    9.  outlier fraction: share of points with |x - mean| > 2 std
    10. longest run of consecutive points above the mean, divided by n
    11. median / max(mean, EPS)
    12. high-fluctuation share: fraction of first differences whose magnitude
        exceeds the population std of the first differences
    """
    n = len(x)
    if n < 14:
        raise InsufficientDataError(f"site {x.site_id!r}: canonical features need >= 14 days, got {n}")
    v = x.values
    mu = float(v.mean())
    sd = float(np.sqrt(np.mean((v - mu) ** 2)))
    mu_floor = max(mu, EPS)

    cv = sd / mu_floor
    skew = 0.0 if sd < EPS else float(np.mean(((v - mu) / sd) ** 3))

    acf1 = _acf(v, mu, 1)
    acf7 = _acf(v, mu, 7)
    efold = float(ACF_MAX_LAG)
    for lag in range(1, ACF_MAX_LAG + 1):
        if _acf(v, mu, lag) < ACF_DECAY_THRESHOLD:
            efold = float(lag)
            break

    t = np.arange(n, dtype=np.float64)
    t_dev = t - t.mean()
    slope = float(np.dot(t_dev, v - mu) / np.dot(t_dev, t_dev))
    trend = slope / mu_floor

    outlier_frac = float(np.mean(np.abs(v - mu) > 2.0 * sd))
    run_frac = _longest_run_above(v, mu) / n
    median_ratio = float(np.median(v)) / mu_floor

    d1 = np.diff(v)
    sd_d1 = float(np.sqrt(np.mean((d1 - d1.mean()) ** 2)))
    flux_frac = float(np.mean(np.abs(d1) > sd_d1))

    return np.array(
        [mu, sd, cv, skew, acf1, acf7, efold, trend, outlier_frac, run_frac, median_ratio, flux_frac]
    )


@dataclass(frozen=True)
class Standardizer:
    """Per-dimension mean/std fitted on the training population only."""

    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        stds = np.asarray(self.stds, dtype=np.float64)
        if means.shape != stds.shape or means.ndim != 1:
            raise ValidationError("means and stds must be 1-D arrays of equal length")
        if np.any(stds <= 0):
            raise ValidationError("stds must be positive (zero-variance dims are stored as 1)")
        means = means.copy()
        stds = stds.copy()
        means.setflags(write=False)
        stds.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)

    def transform(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != self.means.shape:
            raise ValidationError(f"expected vector of length {self.means.size}, got {v.shape}")
        return (v - self.means) / self.stds

    def to_dict(self) -> dict:
        return {"means": [float(m) for m in self.means], "stds": [float(s) for s in self.stds]}

    @staticmethod
    def from_dict(obj: dict) -> "Standardizer":
        return Standardizer(np.array(obj["means"], dtype=np.float64), np.array(obj["stds"], dtype=np.float64))


def fit_standardizer(train_features) -> Standardizer:
    """Population mean/std per dimension; zero-variance dims get std 1."""
    rows = [np.asarray(v, dtype=np.float64) for v in train_features]
    if not rows:
        raise ValidationError("cannot fit a standardizer on zero feature vectors")
    if len({r.shape for r in rows}) != 1:
        raise ValidationError("feature vectors must all have the same length")
    mat = np.stack(rows)
    means = mat.mean(axis=0)
    stds = np.sqrt(np.mean((mat - means) ** 2, axis=0))
    stds = np.where(stds < EPS, 1.0, stds)
    return Standardizer(means, stds)


@dataclass(frozen=True)
class FeatureVector:
    """One site's clustering coordinates: raw profile ++ standardized canonicals."""

    site_id: str
    profile: np.ndarray
    canonical: np.ndarray

    def __post_init__(self):
        for name in ("profile", "canonical"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.profile.size != 7:
            raise ValidationError("profile must have exactly 7 entries")
        if not (np.all(np.isfinite(self.profile)) and np.all(np.isfinite(self.canonical))):
            raise ValidationError(f"site {self.site_id!r}: non-finite feature values")

    @property
    def combined(self) -> np.ndarray:
        return np.concatenate([self.profile, self.canonical])


def featurize(x: SiteSeries, s: Standardizer) -> FeatureVector:
    """Profile plus standardized canonical statistics for one site."""
    return FeatureVector(x.site_id, weekly_profile(x), s.transform(canonical_features(x)))


def save_features_csv(features, path: str | Path) -> Path:
    """``site_id,f0..f18`` rows for the combined vectors, sorted by site id."""
    dim = len(FEATURE_NAMES)
    lines = ["site_id," + ",".join(f"f{i}" for i in range(dim))]
    for fv in sorted(features, key=lambda f: f.site_id):
        combined = fv.combined
        if combined.size != dim:
            raise ValidationError(f"site {fv.site_id!r}: expected {dim} features, got {combined.size}")
        lines.append(fv.site_id + "," + ",".join(repr(float(v)) for v in combined))
    return atomic_write_text(path, "\n".join(lines) + "\n")


def save_features_sidecar(standardizer: Standardizer, path: str | Path) -> Path:
    """Companion JSON: feature names, standardizer, and the layout version tag."""
    return write_json(
        path,
        {
            "layout_version": LAYOUT_VERSION,
            "feature_names": list(FEATURE_NAMES),
            "standardizer": standardizer.to_dict(),
        },
    )
