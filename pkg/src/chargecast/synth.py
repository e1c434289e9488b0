"""Synthetic site histories built from behavioral archetype templates.

Each template is a multiplicative recipe for one kind of site: a base demand
level shaped by day-of-week multipliers, a linear growth term, an annual
sinusoid, log-normal noise, and occasional event spikes. The stock templates
cover six qualitatively distinct behaviors (steady retail-adjacent sites,
weekend-peaked travel corridors, weekday commuter ramps and commuter
corridors, seasonally surging leisure destinations, and low-volume erratic
sites), which is enough variety to exercise clustering recovery and the
expert-vs-global comparison at desk scale.

Generation is bit-reproducible: per-site streams are seeded by stable hashes
of (dataset seed, template index, site index), and every day consumes a fixed
number of raw draws regardless of template parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import Dataset, SiteSeries, date_to_day
from .errors import ValidationError
from .fileio import atomic_write_text, read_json
from .rng import Rng, derive_seed

DEFAULT_START_DAY = date_to_day("2024-01-01")  # a Monday


@dataclass(frozen=True)
class ArchetypeTemplate:
    """Multiplicative recipe for one behavioral archetype.

    Daily value at index j (dow = day of week of start_day + j):

        y_j = max(0, base_kwh * dow_mult[dow]
                     * (1 + trend_per_year * j / 365)
                     * (1 + season_amp * sin(2 pi j / 365))
                     * exp(eps_j) * S_j)

    with eps_j ~ Normal(0, noise_sigma^2) and S_j = spike_mult with
    probability spike_prob, else 1.
    """

    name: str
    base_kwh: float
    dow_mult: tuple[float, ...]
    trend_per_year: float = 0.0
    season_amp: float = 0.0
    noise_sigma: float = 0.0
    spike_prob: float = 0.0
    spike_mult: float = 1.0

    def __post_init__(self):
        if not self.name:
            raise ValidationError("template name must be nonempty")
        if self.base_kwh <= 0:
            raise ValidationError(f"template {self.name!r}: base_kwh must be > 0")
        mult = tuple(float(m) for m in self.dow_mult)
        if len(mult) != 7 or any(m <= 0 for m in mult):
            raise ValidationError(f"template {self.name!r}: dow_mult needs 7 positive entries")
        object.__setattr__(self, "dow_mult", mult)
        if self.noise_sigma < 0:
            raise ValidationError(f"template {self.name!r}: noise_sigma must be >= 0")
        if not (0.0 <= self.spike_prob <= 1.0):
            raise ValidationError(f"template {self.name!r}: spike_prob must lie in [0, 1]")
        if self.spike_mult <= 0:
            raise ValidationError(f"template {self.name!r}: spike_mult must be > 0")


@dataclass(frozen=True)
class SynthSpec:
    """A full synthetic dataset: templates with per-template site counts."""

    templates: tuple[ArchetypeTemplate, ...]
    counts: tuple[int, ...]
    days: int
    seed: int
    start_day: int = DEFAULT_START_DAY

    def __post_init__(self):
        if not self.templates:
            raise ValidationError("at least one template is required")
        if len(self.counts) != len(self.templates):
            raise ValidationError("counts must parallel templates")
        if any(c < 1 for c in self.counts):
            raise ValidationError("per-template site counts must be >= 1")
        if self.days < 35:
            raise ValidationError(f"days must be >= 35, got {self.days}")
        names = [t.name for t in self.templates]
        if len(set(names)) != len(names):
            raise ValidationError("template names must be unique")


def default_templates() -> tuple[ArchetypeTemplate, ...]:
    """The six stock archetypes, ordered roughly from steadiest to noisiest."""
    return (
        ArchetypeTemplate(
            name="steady_retail",
            base_kwh=100.0,
            dow_mult=(1.0, 1.0, 1.0, 1.0, 1.0, 0.95, 0.90),
            trend_per_year=0.04,
            season_amp=0.05,
            noise_sigma=0.16,
            spike_prob=0.008,
            spike_mult=1.7,
        ),
        ArchetypeTemplate(
            name="weekend_corridor",
            base_kwh=130.0,
            dow_mult=(0.95, 0.95, 0.95, 1.00, 1.35, 2.60, 2.35),
            trend_per_year=0.03,
            season_amp=0.08,
            noise_sigma=0.26,
            spike_prob=0.015,
            spike_mult=2.0,
        ),
        ArchetypeTemplate(
            name="weekday_ramp",
            base_kwh=150.0,
            dow_mult=(1.25, 1.40, 1.55, 1.65, 1.75, 0.50, 0.42),
            trend_per_year=0.05,
            season_amp=0.04,
            noise_sigma=0.18,
            spike_prob=0.006,
            spike_mult=1.6,
        ),
        ArchetypeTemplate(
            name="commuter",
            base_kwh=85.0,
            dow_mult=(1.00, 1.02, 1.05, 1.05, 1.10, 1.65, 1.60),
            trend_per_year=0.04,
            season_amp=0.05,
            noise_sigma=0.22,
            spike_prob=0.010,
            spike_mult=2.0,
        ),
        ArchetypeTemplate(
            name="seasonal_leisure",
            base_kwh=55.0,
            dow_mult=(0.70, 0.65, 0.65, 0.70, 1.15, 2.45, 2.30),
            trend_per_year=0.0,
            season_amp=0.22,
            noise_sigma=0.30,
            spike_prob=0.03,
            spike_mult=2.3,
        ),
        ArchetypeTemplate(
            name="erratic",
            base_kwh=22.0,
            dow_mult=(1.0, 0.95, 1.05, 1.0, 1.0, 1.10, 0.90),
            trend_per_year=0.0,
            season_amp=0.05,
            noise_sigma=0.45,
            spike_prob=0.05,
            spike_mult=3.0,
        ),
    )


def default_spec(sites_per_template: int = 40, days: int = 365, seed: int = 20240601) -> SynthSpec:
    templates = default_templates()
    return SynthSpec(templates=templates, counts=(sites_per_template,) * len(templates), days=days, seed=seed)


def clamp_noise(spec: SynthSpec, max_sigma: float) -> SynthSpec:
    """Same spec with every template's noise_sigma capped (low-noise variants for recovery checks)."""
    capped = tuple(replace(t, noise_sigma=min(t.noise_sigma, max_sigma)) for t in spec.templates)
    return replace(spec, templates=capped)


def generate_site(
    t: ArchetypeTemplate,
    site_seed: int,
    days: int,
    start_day: int = DEFAULT_START_DAY,
    site_id: str = "site",
) -> SiteSeries:
    """Generate one site's series; identical inputs reproduce it bit-for-bit.

    The stream layout is fixed: 2*days raw draws for the noise normals, then
    ``days`` draws for the spike uniforms, so degenerate parameters (zero
    noise, zero spike probability) do not shift later draws.
    """
    if days < 1:
        raise ValidationError("days must be >= 1")
    rng = Rng(site_seed)
    eps = rng.normals(days, sigma=t.noise_sigma)
    spike_u = rng.uniforms(days)

    j = np.arange(days)
    dow = (start_day + j + 3) % 7  # Monday = 0 under the 1970 epoch
    shape = t.base_kwh * np.asarray(t.dow_mult)[dow]
    trend = 1.0 + t.trend_per_year * j / 365.0
    season = 1.0 + t.season_amp * np.sin(2.0 * np.pi * j / 365.0)
    spikes = np.where(spike_u < t.spike_prob, t.spike_mult, 1.0)
    y = np.maximum(0.0, shape * trend * season * np.exp(eps) * spikes)
    return SiteSeries(site_id, start_day, y)


def generate_dataset(spec: SynthSpec) -> tuple[Dataset, dict[str, str]]:
    """All requested sites plus the ground-truth site -> template-name map.

    Per-site seeds depend only on (spec.seed, template index, site index), so
    adding templates or changing counts never reshuffles existing sites.
    """
    series: list[SiteSeries] = []
    ground_truth: dict[str, str] = {}
    for ti, (t, count) in enumerate(zip(spec.templates, spec.counts)):
        for si in range(count):
            sid = f"{t.name}-{si:03d}"
            seed = derive_seed(spec.seed, ti, si)
            series.append(generate_site(t, seed, spec.days, spec.start_day, site_id=sid))
            ground_truth[sid] = t.name
    return Dataset.from_series(series), ground_truth


def save_ground_truth_csv(ground_truth: dict[str, str], path: str | Path) -> Path:
    lines = ["site_id,template"]
    lines += [f"{sid},{ground_truth[sid]}" for sid in sorted(ground_truth)]
    return atomic_write_text(path, "\n".join(lines) + "\n")


def load_ground_truth_csv(path: str | Path) -> dict[str, str]:
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    return {sid: name for sid, name in (line.split(",", 1) for line in lines[1:])}


def spec_from_json(path: str | Path) -> SynthSpec:
    """Read a SynthSpec from its JSON config form.

    Schema: ``{seed, days, start_date?, templates: [{name, count, base_kwh,
    dow_mult[7], trend_per_year?, season_amp?, noise_sigma?, spike_prob?,
    spike_mult?}]}``.
    """
    obj = read_json(path)
    try:
        templates = []
        counts = []
        for entry in obj["templates"]:
            entry = dict(entry)
            counts.append(int(entry.pop("count")))
            templates.append(ArchetypeTemplate(**entry))
        start_day = date_to_day(obj["start_date"]) if "start_date" in obj else DEFAULT_START_DAY
        return SynthSpec(
            templates=tuple(templates),
            counts=tuple(counts),
            days=int(obj["days"]),
            seed=int(obj["seed"]),
            start_day=start_day,
        )
    except (KeyError, TypeError) as e:
        raise ValidationError(f"bad synth spec {path}: {e}")


def spec_to_json_obj(spec: SynthSpec) -> dict:
    from .data import format_day

    return {
        "seed": spec.seed,
        "days": spec.days,
        "start_date": format_day(spec.start_day),
        "templates": [
            {
                "name": t.name,
                "count": c,
                "base_kwh": t.base_kwh,
                "dow_mult": list(t.dow_mult),
                "trend_per_year": t.trend_per_year,
                "season_amp": t.season_amp,
                "noise_sigma": t.noise_sigma,
                "spike_prob": t.spike_prob,
                "spike_mult": t.spike_mult,
            }
            for t, c in zip(spec.templates, spec.counts)
        ],
    }
