"""Reproducible experiment runs: configuration, execution and output files."""

from __future__ import annotations

import json
import math
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .environments import EnvironmentSpec, EnvMode, generate_tasks, load_rating_tasks, split_collection
from .evaluation import (
    HyperGrid,
    LearningCurve,
    aggregate_curves,
    baseline_curves,
    horizons,
    online_model_selection,
    write_curve_csv,
)
from .meta import GradientMode

__all__ = [
    "METHODS",
    "ConfigError",
    "ExperimentConfig",
    "parse_grid",
    "read_config_file",
    "write_config_file",
    "run_seed",
    "run_experiment",
]

# method -> (bias, meta-gradient mode, deployment solver)
METHODS: Dict[str, Tuple[str, Optional[str], str]] = {
    "ITL-SGD": ("zero", None, "sgd"),
    "ITL-ERM": ("zero", None, "erm"),
    "MEAN-SGD": ("mean", None, "sgd"),
    "MEAN-ERM": ("mean", None, "erm"),
    "LTL-SGD-SGD": ("learned", "sgd", "sgd"),
    "LTL-ERM-SGD": ("learned", "erm", "sgd"),
    "LTL-ERM-ERM": ("learned", "erm", "erm"),
}

ENVIRONMENTS = ("synth-reg", "synth-cls", "ratings")


class ConfigError(ValueError):
    pass


def parse_grid(text: str) -> Tuple[float, float, int]:
    """Parse ``lo:hi:count`` (an optional trailing ``:log`` is accepted)."""
    parts = [p.strip() for p in str(text).strip().removesuffix("(log)").split(":")]
    if parts and parts[-1] == "log":
        parts = parts[:-1]
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except (ValueError, IndexError):
        raise ConfigError(f"grid must look like lo:hi:count, got {text!r}") from None
    if len(parts) != 3 or not 0 < lo <= hi or count < 1:
        raise ConfigError(f"invalid grid {text!r}: need 0 < lo <= hi and count >= 1")
    return lo, hi, count


def _grid_values(text: str) -> np.ndarray:
    lo, hi, count = parse_grid(text)
    if count == 1:
        return np.array([lo])
    return np.logspace(math.log10(lo), math.log10(hi), count)


@dataclass
class ExperimentConfig:
    """Flat experiment description; every field is also a config-file key."""

    environment: str = "synth-reg"
    d: int = 30
    n_train: int = 10
    n_test: int = 100
    task_mean: float = 4.0
    task_std: float = 1.0
    snr: float = 10.0
    margin_threshold: float = 0.5
    logistic_scale: float = 10.0
    data: str = ""
    ratings_task: str = "regression"
    threshold: float = 5.0
    methods: str = "ITL-SGD,MEAN-SGD,LTL-SGD-SGD"
    lambda_grid: str = "1e-6:1e3:10"
    gamma_grid: str = "1e-6:1e3:10"
    t_train: int = 200
    t_val: int = 50
    t_test: int = 200
    runs: int = 10
    seed: int = 0
    out: str = "results"
    threads: int = 1
    eval_every: int = 0  # 0: every 5 tasks when t_train > 100, else every task
    metric: str = "loss"
    bias_estimate: str = "average"
    max_iters: int = 2000
    gap_tolerance: float = 1e-6

    @classmethod
    def defaults_for(cls, environment: str) -> "ExperimentConfig":
        if environment == "ratings":
            return cls(environment="ratings", n_train=8, methods="ITL-SGD,LTL-SGD-SGD",
                       lambda_grid="1e-3:1e3:30", gamma_grid="1e-3:1e3:30",
                       t_train=100, t_val=40, t_test=40, runs=30)
        return cls(environment=environment)

    @property
    def method_list(self) -> List[str]:
        return [m.strip() for m in self.methods.split(",") if m.strip()]

    @property
    def grid(self) -> HyperGrid:
        return HyperGrid(_grid_values(self.lambda_grid), _grid_values(self.gamma_grid))

    @property
    def effective_eval_every(self) -> int:
        if self.eval_every > 0:
            return self.eval_every
        return 5 if self.t_train > 100 else 1

    def validate(self) -> "ExperimentConfig":
        if self.environment not in ENVIRONMENTS:
            raise ConfigError(f"environment: must be one of {ENVIRONMENTS}, got {self.environment!r}")
        for name in ("d", "n_train", "n_test", "t_train", "t_val", "t_test", "runs", "threads", "max_iters"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be >= 1, got {getattr(self, name)}")
        if self.eval_every < 0:
            raise ConfigError("eval_every: must be >= 0")
        if not self.gap_tolerance > 0:
            raise ConfigError("gap_tolerance: must be > 0")
        methods = self.method_list
        if not methods:
            raise ConfigError("methods: at least one method is required")
        for m in methods:
            if m not in METHODS:
                raise ConfigError(f"methods: unknown method {m!r}; choose from {sorted(METHODS)}")
        if len(set(methods)) != len(methods):
            raise ConfigError("methods: duplicates")
        if self.environment == "ratings":
            if any(METHODS[m][0] == "mean" for m in methods):
                raise ConfigError("methods: MEAN-* needs the true task mean, only available for synthetic environments")
            if not self.data:
                raise ConfigError("data: the ratings environment needs a CSV path")
            if self.ratings_task not in ("regression", "classification"):
                raise ConfigError("ratings_task: must be regression or classification")
        if self.metric not in ("loss", "zero_one"):
            raise ConfigError("metric: must be loss or zero_one")
        if self.metric == "zero_one" and self._mode() is EnvMode.REGRESSION:
            raise ConfigError("metric: zero_one needs a classification environment")
        if self.bias_estimate not in ("average", "last"):
            raise ConfigError("bias_estimate: must be average or last")
        try:
            self.grid
        except ValueError as exc:
            raise ConfigError(f"lambda_grid/gamma_grid: {exc}") from None
        try:
            EnvironmentSpec(d=self.d, n_train=self.n_train, n_test=self.n_test, task_std=self.task_std,
                            snr=self.snr, margin_threshold=self.margin_threshold,
                            logistic_scale=self.logistic_scale)
        except ValueError as exc:
            raise ConfigError(f"environment parameters: {exc}") from None
        return self

    def _mode(self) -> EnvMode:
        if self.environment == "synth-reg":
            return EnvMode.REGRESSION
        if self.environment == "synth-cls":
            return EnvMode.CLASSIFICATION
        return EnvMode(self.ratings_task)

    def env_spec(self, seed: int) -> EnvironmentSpec:
        return EnvironmentSpec(
            d=self.d, n_train=self.n_train, n_test=self.n_test, task_mean=self.task_mean,
            task_std=self.task_std, mode=self._mode(), snr=self.snr,
            margin_threshold=self.margin_threshold, logistic_scale=self.logistic_scale, seed=seed,
        )

    def to_dict(self) -> dict:
        return asdict(self)


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def coerce_value(key: str, raw):
    """Convert ``raw`` to the type of config field ``key``."""
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    default = _FIELDS[key].default
    try:
        if isinstance(default, bool):
            return str(raw).lower() in ("1", "true", "yes")
        if isinstance(default, int):
            value = float(raw)
            if value != int(value):
                raise ValueError
            return int(value)
        if isinstance(default, float):
            return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None
    return str(raw)


def read_config_file(path) -> dict:
    """Read ``key = value`` lines (``#`` comments) or a run manifest (``.json``)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        raw = json.loads(text)
        raw = raw.get("config", raw)
        return {k: coerce_value(k, v) for k, v in raw.items()}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELDS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = coerce_value(key, value)
    return values


def write_config_file(config: ExperimentConfig, path) -> None:
    lines = [f"{k} = {v}" for k, v in config.to_dict().items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_seed(seed: int, run: int) -> int:
    """Seed of repetition ``run``, derived from the experiment seed."""
    return int(np.random.SeedSequence([int(seed), int(run)]).generate_state(1, dtype=np.uint32)[0])


def _load_tasks(config: ExperimentConfig, seed: int):
    total = config.t_train + config.t_val + config.t_test
    if config.environment == "ratings":
        tasks = load_rating_tasks(config.data, config.ratings_task, config.threshold,
                                  n_train=config.n_train, seed=seed)
        mean = None
    else:
        spec = config.env_spec(seed)
        tasks = generate_tasks(spec, total)
        mean = spec.mean_vector
    if total > len(tasks):
        raise ConfigError(f"t_train + t_val + t_test = {total} exceeds the {len(tasks)} available tasks")
    return split_collection(tasks, config.t_train, config.t_val, config.t_test, seed), mean


def _single_run(config: ExperimentConfig, seed: int) -> Dict[str, LearningCurve]:
    (train, val, test), mean = _load_tasks(config, seed)
    grid = config.grid
    ts = horizons(config.t_train, config.effective_eval_every)
    common = dict(metric=config.metric, max_iters=config.max_iters, gap_tolerance=config.gap_tolerance)
    curves = {}
    for method in config.method_list:
        bias, mode, solver = METHODS[method]
        if bias == "learned":
            curves[method] = online_model_selection(
                train, val, test, grid, gradient_mode=GradientMode(mode), solver=solver,
                eval_every=config.effective_eval_every, bias_estimate=config.bias_estimate,
                method=method, **common,
            )
        else:
            h = np.zeros(train.d) if bias == "zero" else mean
            curves[method] = baseline_curves(h, grid.lambdas, val, test, t=ts, solver=solver,
                                             method=method, **common)
    return curves


def _versions() -> dict:
    import sklearn

    from . import __version__

    return {
        "onlineltl": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scikit-learn": sklearn.__version__,
    }


def run_experiment(config: ExperimentConfig, write: bool = True) -> Dict[str, LearningCurve]:
    """Run every repetition, aggregate curves per method and write CSVs plus a manifest.

    Output directory layout: ``<method>.csv`` per method, ``config.txt`` (a
    config file that reproduces the run) and ``manifest.json``.
    """
    config.validate()
    seeds = [run_seed(config.seed, r) for r in range(config.runs)]
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            per_run = list(pool.map(lambda s: _single_run(config, s), seeds))
    else:
        per_run = [_single_run(config, s) for s in seeds]
    curves = {m: aggregate_curves([r[m] for r in per_run]) for m in config.method_list}
    if write:
        out = Path(config.out)
        out.mkdir(parents=True, exist_ok=True)
        files = {}
        for method, curve in curves.items():
            name = f"{method}.csv"
            write_curve_csv(curve, out / name)
            files[method] = name
        write_config_file(config, out / "config.txt")
        manifest = {
            "config": config.to_dict(),
            "run_seeds": seeds,
            "files": files,
            "versions": _versions(),
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return curves
