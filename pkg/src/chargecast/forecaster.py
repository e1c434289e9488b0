"""Few-shot demand forecaster: 28 observed days in, 7 forecast days out.

The model is a deliberately small single-hidden-layer network written
directly in numpy, so every gradient is checkable against finite
differences. Inputs are scale-free: each window's context is divided by its
own mean (plus a tiny guard), the day-of-week of the first forecast day is
appended as a one-hot, and targets are normalized by the same context mean.
Forecasts are de-normalized back to kWh and clamped nonnegative. The
normalization buys an exact property the tests lean on: scaling a context by
``c`` scales the forecast by ``c`` up to the guard term.

Training is plain mini-batch Adam on mean squared error over sliding
windows. Everything random (weight init, epoch shuffles, per-site window
subsampling) comes from seeded streams, so a config reproduces a model
parameter-for-parameter.

"Expert" models are the same architecture trained on the windows of a single
cluster's member sites; a cluster whose members yield no windows falls back
to a copy of the global model rather than failing the run.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .clustering import Assignment, ClusterModel, load_cluster_model, save_cluster_model
from .data import Dataset, WindowSpec, day_of_week
from .errors import ModelCorruptError, TrainingError, ValidationError
from .fileio import read_json, write_json
from .rng import Rng, derive_seed

EPSILON_SCALE = 1e-6
DOW_DIM = 7


@dataclass(frozen=True)
class WindowSample:
    """One training/evaluation window: L context days, H adjacent target days."""

    context: np.ndarray
    target: np.ndarray
    first_target_dow: int
    site_id: str

    def __post_init__(self):
        for name in ("context", "target"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 1 or arr.size < 1:
                raise ValidationError(f"{name} must be a nonempty 1-D array")
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValidationError(f"{name} must be finite and nonnegative")
            object.__setattr__(self, name, arr)
        if not (0 <= self.first_target_dow <= 6):
            raise ValidationError("first_target_dow must lie in 0..6")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 1e-3
    batch_size: int = 128
    hidden_width: int = 64
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    max_windows_per_site: int = 200

    def __post_init__(self):
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if not (0.0 < self.learning_rate < 1.0):
            raise ValidationError("learning_rate must lie in (0, 1)")
        if self.batch_size < 1 or self.hidden_width < 1 or self.max_windows_per_site < 1:
            raise ValidationError("batch_size, hidden_width, max_windows_per_site must be >= 1")
        if not (0.0 < self.adam_beta1 < 1.0 and 0.0 < self.adam_beta2 < 1.0):
            raise ValidationError("adam betas must lie in (0, 1)")
        if self.adam_epsilon <= 0:
            raise ValidationError("adam_epsilon must be > 0")
        if self.seed < 0:
            raise ValidationError("seed must be a nonnegative integer")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "hidden_width": self.hidden_width,
            "seed": self.seed,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_epsilon": self.adam_epsilon,
            "max_windows_per_site": self.max_windows_per_site,
        }

    @staticmethod
    def from_dict(obj: dict) -> "TrainConfig":
        return TrainConfig(**obj)


@dataclass(frozen=True)
class ForecastModel:
    """Parameters of one trained forecaster (weights are frozen arrays)."""

    w1: np.ndarray  # (input_dim, hidden)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden, output_dim)
    b2: np.ndarray  # (output_dim,)
    epsilon_scale: float = EPSILON_SCALE
    activation: str = "relu"
    epoch_losses: tuple[float, ...] = ()
    config: TrainConfig | None = None

    def __post_init__(self):
        arrays = {}
        for name, ndim in (("w1", 2), ("b1", 1), ("w2", 2), ("b2", 1)):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != ndim:
                raise ValidationError(f"{name} must have {ndim} dimensions")
            if not np.all(np.isfinite(arr)):
                raise ModelCorruptError(f"{name} contains non-finite parameters")
            arr = arr.copy()
            arr.setflags(write=False)
            arrays[name] = arr
        if arrays["w1"].shape[1] != arrays["b1"].shape[0] or arrays["w1"].shape[1] != arrays["w2"].shape[0]:
            raise ValidationError("hidden dimensions of w1, b1, w2 disagree")
        if arrays["w2"].shape[1] != arrays["b2"].shape[0]:
            raise ValidationError("output dimensions of w2 and b2 disagree")
        if self.activation != "relu":
            raise ValidationError(f"unsupported activation {self.activation!r}")
        for name, arr in arrays.items():
            object.__setattr__(self, name, arr)

    @property
    def input_dim(self) -> int:
        return int(self.w1.shape[0])

    @property
    def hidden_width(self) -> int:
        return int(self.w1.shape[1])

    @property
    def output_dim(self) -> int:
        return int(self.w2.shape[1])

    @property
    def context_len(self) -> int:
        return self.input_dim - DOW_DIM

    @property
    def final_loss(self) -> float | None:
        return self.epoch_losses[-1] if self.epoch_losses else None


@dataclass(frozen=True)
class ExpertSet:
    """One forecaster per cluster of the referenced cluster model."""

    cluster_model: ClusterModel
    models: tuple[ForecastModel, ...]
    zero_window_clusters: tuple[int, ...] = ()

    def __post_init__(self):
        if len(self.models) != self.cluster_model.k:
            raise ValidationError(f"expected {self.cluster_model.k} expert models, got {len(self.models)}")


def build_windows(d: Dataset, w: WindowSpec, max_per_site: int, seed: int) -> list[WindowSample]:
    """Every stride-1 window per site, seeded-subsampled down to ``max_per_site``.

    Windows never cross series boundaries; sites shorter than L+H contribute
    nothing. The per-site subsample seed depends only on (seed, site_id), so
    a site keeps the same windows no matter which dataset slice it rides in.
    """
    if max_per_site < 1:
        raise ValidationError("max_per_site must be >= 1")
    samples: list[WindowSample] = []
    for sid in d.site_ids():
        s = d.sites[sid]
        n_windows = len(s) - w.total + 1
        if n_windows < 1:
            continue
        if n_windows > max_per_site:
            rng = Rng(derive_seed(seed, "windows", sid))
            starts = sorted(int(i) for i in rng.permutation(n_windows)[:max_per_site])
        else:
            starts = range(n_windows)
        for i in starts:
            samples.append(
                WindowSample(
                    context=s.values[i : i + w.context_len],
                    target=s.values[i + w.context_len : i + w.total],
                    first_target_dow=day_of_week(s.start_day + i + w.context_len),
                    site_id=sid,
                )
            )
    return samples


def encode_input(s: WindowSample) -> np.ndarray:
    """Mean-normalized context lags ++ one-hot day-of-week of the first target day."""
    scale = float(s.context.mean()) + EPSILON_SCALE
    onehot = np.zeros(DOW_DIM)
    onehot[s.first_target_dow] = 1.0
    return np.concatenate([s.context / scale, onehot])


def _encode_batch(samples: list[WindowSample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(inputs, normalized targets, per-window scales) for a homogeneous batch."""
    ctx = np.stack([s.context for s in samples])
    tgt = np.stack([s.target for s in samples])
    scales = ctx.mean(axis=1) + EPSILON_SCALE
    onehot = np.zeros((len(samples), DOW_DIM))
    onehot[np.arange(len(samples)), [s.first_target_dow for s in samples]] = 1.0
    X = np.concatenate([ctx / scales[:, None], onehot], axis=1)
    Y = tgt / scales[:, None]
    return X, Y, scales


def _check_finite(m: ForecastModel) -> None:
    for name in ("w1", "b1", "w2", "b2"):
        if not np.all(np.isfinite(getattr(m, name))):
            raise ModelCorruptError(f"{name} contains non-finite parameters")


def forward(m: ForecastModel, input_vec: np.ndarray) -> np.ndarray:
    """Normalized-space forward pass: relu(x W1 + b1) W2 + b2."""
    _check_finite(m)
    x = np.asarray(input_vec, dtype=np.float64)
    if x.shape != (m.input_dim,):
        raise ValidationError(f"expected input of length {m.input_dim}, got shape {x.shape}")
    hidden = np.maximum(x @ m.w1 + m.b1, 0.0)
    return hidden @ m.w2 + m.b2


def _forward_batch(w1, b1, w2, b2, X):
    z1 = X @ w1 + b1
    a1 = np.maximum(z1, 0.0)
    return z1, a1, a1 @ w2 + b2


def _loss_and_grads(w1, b1, w2, b2, X, Y):
    """Mean-squared-error loss (mean over all elements) and its parameter gradients."""
    z1, a1, out = _forward_batch(w1, b1, w2, b2, X)
    diff = out - Y
    loss = float(np.mean(diff**2))
    g_out = 2.0 * diff / diff.size
    gw2 = a1.T @ g_out
    gb2 = g_out.sum(axis=0)
    ga1 = g_out @ w2.T
    gz1 = ga1 * (z1 > 0.0)
    gw1 = X.T @ gz1
    gb1 = gz1.sum(axis=0)
    return loss, (gw1, gb1, gw2, gb2)


def _init_params(input_dim: int, hidden: int, output_dim: int, seed: int):
    """Uniform init in +-sqrt(6/(fan_in+fan_out)), one bound per layer.

    Draw order is fixed (w1 row-major, b1, w2 row-major, b2) so the seed pins
    every parameter.
    """
    rng = Rng(seed)

    def uniform_block(n, bound):
        return (rng.uniforms(n) * 2.0 - 1.0) * bound

    bound1 = np.sqrt(6.0 / (input_dim + hidden))
    bound2 = np.sqrt(6.0 / (hidden + output_dim))
    w1 = uniform_block(input_dim * hidden, bound1).reshape(input_dim, hidden)
    b1 = uniform_block(hidden, bound1)
    w2 = uniform_block(hidden * output_dim, bound2).reshape(hidden, output_dim)
    b2 = uniform_block(output_dim, bound2)
    return w1, b1, w2, b2


def train(windows: list[WindowSample], cfg: TrainConfig) -> ForecastModel:
    """Mini-batch Adam on MSE over encoded windows; fully seeded and deterministic.

    ``epochs=0`` returns the untouched initialization. Raises TrainingError if
    the loss ever goes non-finite, naming the optimizer step.
    """
    if not windows:
        raise TrainingError("no training windows")
    context_lens = {len(s.context) for s in windows}
    horizons = {len(s.target) for s in windows}
    if len(context_lens) != 1 or len(horizons) != 1:
        raise ValidationError("windows disagree on context length or horizon")

    X, Y, _ = _encode_batch(windows)
    n, input_dim = X.shape
    output_dim = Y.shape[1]
    params = list(_init_params(input_dim, cfg.hidden_width, output_dim, derive_seed(cfg.seed, "init")))

    adam_m = [np.zeros_like(p) for p in params]
    adam_v = [np.zeros_like(p) for p in params]
    t = 0
    epoch_losses: list[float] = []
    for epoch in range(cfg.epochs):
        perm = Rng(derive_seed(cfg.seed, "shuffle", epoch)).permutation(n)
        loss_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = perm[start : start + cfg.batch_size]
            loss, grads = _loss_and_grads(*params, X[batch], Y[batch])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite training loss at optimizer step {t + 1}")
            t += 1
            bc1 = 1.0 - cfg.adam_beta1**t
            bc2 = 1.0 - cfg.adam_beta2**t
            for i, g in enumerate(grads):
                adam_m[i] = cfg.adam_beta1 * adam_m[i] + (1.0 - cfg.adam_beta1) * g
                adam_v[i] = cfg.adam_beta2 * adam_v[i] + (1.0 - cfg.adam_beta2) * g**2
                params[i] = params[i] - cfg.learning_rate * (adam_m[i] / bc1) / (
                    np.sqrt(adam_v[i] / bc2) + cfg.adam_epsilon
                )
            loss_sum += loss * len(batch)
        epoch_losses.append(loss_sum / n)

    w1, b1, w2, b2 = params
    return ForecastModel(w1=w1, b1=b1, w2=w2, b2=b2, epoch_losses=tuple(epoch_losses), config=cfg)


def _flatten_params(m: ForecastModel) -> np.ndarray:
    return np.concatenate([m.w1.ravel(), m.b1, m.w2.ravel(), m.b2])


def _unflatten_params(flat: np.ndarray, m: ForecastModel):
    i, h, o = m.input_dim, m.hidden_width, m.output_dim
    sizes = [i * h, h, h * o, o]
    offs = np.cumsum([0] + sizes)
    return (
        flat[offs[0] : offs[1]].reshape(i, h),
        flat[offs[1] : offs[2]],
        flat[offs[2] : offs[3]].reshape(h, o),
        flat[offs[3] : offs[4]],
    )


def gradient_check(m: ForecastModel, s: WindowSample, n_params: int = 50, step: float = 1e-4, seed: int = 0) -> float:
    """Max relative error between backprop and central finite differences.

    Checks the single-sample MSE loss on >= ``n_params`` randomly chosen
    parameters (all of them when the model is smaller than that). The
    relative error uses the floor ``max(|ga| + |gn|, 1e-8)`` so exact-zero
    pairs do not divide by zero.
    """
    x = encode_input(s)[None, :]
    scale = float(s.context.mean()) + m.epsilon_scale
    y = (s.target / scale)[None, :]

    _, grads = _loss_and_grads(m.w1, m.b1, m.w2, m.b2, x, y)
    analytic = np.concatenate([grads[0].ravel(), grads[1], grads[2].ravel(), grads[3]])

    flat = _flatten_params(m)
    total = flat.size
    if total <= n_params:
        indices = np.arange(total)
    else:
        indices = Rng(derive_seed(seed, "gradcheck")).permutation(total)[:n_params]

    worst = 0.0
    for idx in indices:
        bumped = flat.copy()
        bumped[idx] = flat[idx] + step
        lo_hi = []
        for sign in (+1.0, -1.0):
            bumped[idx] = flat[idx] + sign * step
            w1, b1, w2, b2 = _unflatten_params(bumped, m)
            _, _, out = _forward_batch(w1, b1, w2, b2, x)
            lo_hi.append(float(np.mean((out - y) ** 2)))
        numeric = (lo_hi[0] - lo_hi[1]) / (2.0 * step)
        ga = float(analytic[idx])
        worst = max(worst, abs(ga - numeric) / max(abs(ga) + abs(numeric), 1e-8))
    return worst


def predict(m: ForecastModel, context: np.ndarray, first_target_dow: int) -> np.ndarray:
    """kWh forecast for the next H days: de-normalized, clamped nonnegative."""
    context = np.asarray(context, dtype=np.float64)
    if context.shape != (m.context_len,):
        raise ValidationError(f"expected context of length {m.context_len}, got shape {context.shape}")
    sample = WindowSample(context=context, target=np.zeros(m.output_dim), first_target_dow=first_target_dow, site_id="_")
    scale = float(context.mean()) + m.epsilon_scale
    return np.maximum(forward(m, encode_input(sample)) * scale, 0.0)


def train_expert_set(
    train_ds: Dataset,
    cm: ClusterModel,
    a: Assignment,
    cfg: TrainConfig,
    w: WindowSpec = WindowSpec(),
    global_model: ForecastModel | None = None,
    windows_seed: int | None = None,
) -> ExpertSet:
    """One independently seeded forecaster per cluster, trained on member windows.

    Per-cluster seeds derive from (cfg.seed, cluster index). When
    ``global_model`` is given, k=1 reuses it outright (the single "expert"
    over everything is by definition the global model) and memberless or
    windowless clusters fall back to it; without one, a fallback global is
    trained on all windows on demand.
    """
    missing = [sid for sid in train_ds.site_ids() if sid not in a]
    if missing:
        raise ValidationError(f"unassigned training sites: {missing[:5]}{'...' if len(missing) > 5 else ''}")
    if windows_seed is None:
        windows_seed = derive_seed(cfg.seed, "expert-windows")

    fallback = global_model

    def fallback_model() -> ForecastModel:
        nonlocal fallback
        if fallback is None:
            all_windows = build_windows(train_ds, w, cfg.max_windows_per_site, windows_seed)
            fallback = train(all_windows, replace(cfg, seed=derive_seed(cfg.seed, "fallback-global")))
        return fallback

    if cm.k == 1 and global_model is not None:
        return ExpertSet(cluster_model=cm, models=(global_model,))

    models: list[ForecastModel] = []
    zero_window: list[int] = []
    for c in range(cm.k):
        member_ids = [sid for sid, label in a.items() if label == c]
        windows = build_windows(train_ds.subset(member_ids), w, cfg.max_windows_per_site, windows_seed)
        if windows:
            models.append(train(windows, replace(cfg, seed=derive_seed(cfg.seed, c))))
        else:
            zero_window.append(c)
            models.append(fallback_model())
    return ExpertSet(cluster_model=cm, models=tuple(models), zero_window_clusters=tuple(zero_window))


def save_model(m: ForecastModel, path: str | Path, extra: dict | None = None) -> Path:
    obj = {
        "input_dim": m.input_dim,
        "hidden_width": m.hidden_width,
        "output_dim": m.output_dim,
        "activation": m.activation,
        "w1": [float(v) for v in m.w1.ravel()],
        "b1": [float(v) for v in m.b1],
        "w2": [float(v) for v in m.w2.ravel()],
        "b2": [float(v) for v in m.b2],
        "epsilon_scale": m.epsilon_scale,
        "train_config": m.config.to_dict() if m.config else None,
        "final_loss": m.final_loss,
        "epoch_losses": list(m.epoch_losses),
    }
    if extra:
        obj.update(extra)
    return write_json(path, obj)


def load_model(path: str | Path) -> ForecastModel:
    obj = read_json(path)
    i, h, o = int(obj["input_dim"]), int(obj["hidden_width"]), int(obj["output_dim"])
    return ForecastModel(
        w1=np.array(obj["w1"], dtype=np.float64).reshape(i, h),
        b1=np.array(obj["b1"], dtype=np.float64),
        w2=np.array(obj["w2"], dtype=np.float64).reshape(h, o),
        b2=np.array(obj["b2"], dtype=np.float64),
        epsilon_scale=float(obj["epsilon_scale"]),
        activation=str(obj["activation"]),
        epoch_losses=tuple(obj.get("epoch_losses", [])),
        config=TrainConfig.from_dict(obj["train_config"]) if obj.get("train_config") else None,
    )


def save_expert_set(es: ExpertSet, global_model: ForecastModel, dir_path: str | Path) -> Path:
    """Directory layout: cluster_model.json, expert_0..{k-1}.json, global.json."""
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    save_cluster_model(es.cluster_model, dir_path / "cluster_model.json")
    for c, m in enumerate(es.models):
        save_model(m, dir_path / f"expert_{c}.json", extra={"fallback_from_global": c in es.zero_window_clusters})
    save_model(global_model, dir_path / "global.json")
    return dir_path


def load_expert_set(dir_path: str | Path) -> tuple[ExpertSet, ForecastModel]:
    dir_path = Path(dir_path)
    cm = load_cluster_model(dir_path / "cluster_model.json")
    models = []
    zero_window = []
    for c in range(cm.k):
        path = dir_path / f"expert_{c}.json"
        models.append(load_model(path))
        if read_json(path).get("fallback_from_global"):
            zero_window.append(c)
    global_model = load_model(dir_path / "global.json")
    return (
        ExpertSet(cluster_model=cm, models=tuple(models), zero_window_clusters=tuple(zero_window)),
        global_model,
    )
