"""Task environments: synthetic generators, the ratings loader and collection utilities.

Every task ``i`` of a generated collection draws from its own generator seeded
with ``SeedSequence(seed, spawn_key=(i,))``, so a task's content depends only
on the environment, the seed and its index.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .losses import LossKind
from .task_data import TaskDataset, TaskSplit, as_bias

__all__ = [
    "EnvMode",
    "EnvironmentSpec",
    "TaskCollection",
    "GenerationError",
    "IngestionError",
    "task_rng",
    "sample_sphere",
    "gen_regression_tasks",
    "gen_classification_tasks",
    "generate_tasks",
    "load_rating_tasks",
    "split_collection",
    "environment_variance",
    "save_collection",
    "load_collection",
]

MAX_REJECTIONS = 10**6


class GenerationError(RuntimeError):
    pass


class IngestionError(ValueError):
    pass


class EnvMode(str, enum.Enum):
    REGRESSION = "regression"  # absolute loss
    CLASSIFICATION = "classification"  # hinge loss

    @property
    def loss(self) -> LossKind:
        return LossKind.ABSOLUTE if self is EnvMode.REGRESSION else LossKind.HINGE


@dataclass(frozen=True)
class EnvironmentSpec:
    """Gaussian task weights ``w = m + task_std * g`` with inputs on the unit sphere.

    ``task_mean`` may be a scalar (broadcast to all ``d`` coordinates) or a
    length-``d`` sequence; it is stored as a tuple.
    """

    d: int = 30
    n_train: int = 10
    n_test: int = 100
    task_mean: Sequence[float] = 4.0
    task_std: float = 1.0
    mode: EnvMode = EnvMode.REGRESSION
    snr: float = 10.0
    margin_threshold: float = 0.5
    logistic_scale: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("n_train and n_test must be >= 1")
        if self.task_std < 0:
            raise ValueError("task_std must be >= 0")
        if not self.snr > 0:
            raise ValueError("snr must be > 0")
        if self.margin_threshold < 0:
            raise ValueError("margin_threshold must be >= 0")
        if not self.logistic_scale > 0:
            raise ValueError("logistic_scale must be > 0")
        mean = np.broadcast_to(np.asarray(self.task_mean, dtype=float), (self.d,))
        object.__setattr__(self, "task_mean", tuple(float(v) for v in mean))
        object.__setattr__(self, "mode", EnvMode(self.mode))

    @property
    def mean_vector(self) -> np.ndarray:
        return np.array(self.task_mean)

    @property
    def loss(self) -> LossKind:
        return self.mode.loss


@dataclass(eq=False)
class TaskCollection:
    splits: List[TaskSplit]
    true_weights: Optional[np.ndarray] = None
    task_ids: Optional[List[str]] = None
    _stack: Optional[tuple] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.splits:
            d, loss = self.splits[0].d, self.splits[0].loss
            for i, s in enumerate(self.splits):
                if s.d != d or s.loss is not loss:
                    raise ValueError(f"task {i} is inconsistent with task 0 (d or loss kind)")
        if self.true_weights is not None:
            self.true_weights = np.asarray(self.true_weights, dtype=float)
            if self.true_weights.shape[0] != len(self.splits):
                raise ValueError("true_weights length does not match the number of tasks")

    def __len__(self) -> int:
        return len(self.splits)

    def __getitem__(self, i) -> TaskSplit:
        return self.splits[i]

    @property
    def d(self) -> int:
        return self.splits[0].d

    @property
    def loss(self) -> LossKind:
        return self.splits[0].loss

    def subset(self, indices) -> "TaskCollection":
        indices = [int(i) for i in indices]
        return TaskCollection(
            splits=[self.splits[i] for i in indices],
            true_weights=None if self.true_weights is None else self.true_weights[indices],
            task_ids=None if self.task_ids is None else [self.task_ids[i] for i in indices],
        )

    def stacked(self):
        """``(X_train, y_train, X_test, y_test)`` stacked over tasks; requires equal sizes."""
        if self._stack is None:
            try:
                self._stack = (
                    np.stack([s.train.X for s in self.splits]),
                    np.stack([s.train.y for s in self.splits]),
                    np.stack([s.test.X for s in self.splits]),
                    np.stack([s.test.y for s in self.splits]),
                )
            except ValueError as exc:
                raise ValueError("tasks have unequal train/test sizes and cannot be stacked") from exc
        return self._stack


def task_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def sample_sphere(rng: np.random.Generator, count: int, d: int) -> np.ndarray:
    """``count`` points uniform on the unit sphere of ``R^d`` (normalised Gaussians)."""
    g = rng.standard_normal((count, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _check_count(count):
    if count <= 0:
        raise ValueError(f"count must be positive, got {count}")


def _task_weights(spec: EnvironmentSpec, rng) -> np.ndarray:
    return spec.mean_vector + spec.task_std * rng.standard_normal(spec.d)


def _make_split(spec, X, y, loss) -> TaskSplit:
    n = spec.n_train
    return TaskSplit(
        train=TaskDataset(X[:n], y[:n], loss),
        test=TaskDataset(X[n:], y[n:], loss),
    )


def gen_regression_tasks(spec: EnvironmentSpec, count: int) -> TaskCollection:
    """Linear tasks with Gaussian label noise of std ``||w|| / (sqrt(d) * snr)``."""
    if spec.mode is not EnvMode.REGRESSION:
        raise ValueError("spec.mode must be regression")
    _check_count(count)
    m = spec.n_train + spec.n_test
    splits, weights = [], []
    for i in range(count):
        rng = task_rng(spec.seed, i)
        w = _task_weights(spec, rng)
        X = sample_sphere(rng, m, spec.d)
        noise_std = np.linalg.norm(w) / (math.sqrt(spec.d) * spec.snr)
        y = X @ w + noise_std * rng.standard_normal(m)
        splits.append(_make_split(spec, X, y, LossKind.ABSOLUTE))
        weights.append(w)
    return TaskCollection(splits, np.array(weights))


def _margin_points(rng, w, m, d, threshold, batch=64) -> np.ndarray:
    rows = []
    misses = 0
    while len(rows) < m:
        cand = sample_sphere(rng, batch, d)
        for x, ok in zip(cand, np.abs(cand @ w) >= threshold):
            if ok:
                rows.append(x)
                misses = 0
                if len(rows) == m:
                    break
            else:
                misses += 1
                if misses >= MAX_REJECTIONS:
                    raise GenerationError(
                        f"no point with margin >= {threshold} in {MAX_REJECTIONS} draws; "
                        "margin_threshold is infeasible for this task"
                    )
    return np.array(rows)


def positive_probability(z, logistic_scale=10.0):
    """``P(y = +1) = 1 / (1 + logistic_scale * exp(-z))``."""
    z = np.asarray(z, dtype=float)
    return 1.0 / (1.0 + logistic_scale * np.exp(-z))


def gen_classification_tasks(spec: EnvironmentSpec, count: int) -> TaskCollection:
    """Sphere inputs with margin ``|<x, w>| >= margin_threshold`` and logistic labels in {-1, +1}."""
    if spec.mode is not EnvMode.CLASSIFICATION:
        raise ValueError("spec.mode must be classification")
    _check_count(count)
    m = spec.n_train + spec.n_test
    splits, weights = [], []
    for i in range(count):
        rng = task_rng(spec.seed, i)
        w = _task_weights(spec, rng)
        X = _margin_points(rng, w, m, spec.d, spec.margin_threshold)
        p = positive_probability(X @ w, spec.logistic_scale)
        y = np.where(rng.random(m) < p, 1.0, -1.0)
        splits.append(_make_split(spec, X, y, LossKind.HINGE))
        weights.append(w)
    return TaskCollection(splits, np.array(weights))


def generate_tasks(spec: EnvironmentSpec, count: int) -> TaskCollection:
    if spec.mode is EnvMode.REGRESSION:
        return gen_regression_tasks(spec, count)
    return gen_classification_tasks(spec, count)


def load_rating_tasks(path, mode=EnvMode.REGRESSION, threshold: float = 5.0,
                      n_train: int = 8, seed: int = 0) -> TaskCollection:
    """Read a long-form ratings CSV (``task_id,x1,...,xp,rating``) into train/test splits.

    Rows of each task are shuffled with a per-task seeded generator; the first
    ``n_train`` form the training set. All inputs are divided by the largest
    row norm in the file. In classification mode the label is +1 when the
    rating exceeds ``threshold`` and -1 otherwise.
    """
    mode = EnvMode(mode)
    path = Path(path)
    groups: dict = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        header = [c.strip() for c in header]
        if len(header) < 3 or header[0] != "task_id" or header[-1] != "rating":
            raise IngestionError(f"{path}: header must be task_id,x1,...,xp,rating; got {header}")
        width = len(header)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise IngestionError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
            try:
                values = [float(c) for c in row[1:]]
            except ValueError:
                raise IngestionError(f"{path}:{lineno}: non-numeric field in {row}") from None
            if not all(math.isfinite(v) for v in values):
                raise IngestionError(f"{path}:{lineno}: non-finite field")
            groups.setdefault(row[0].strip(), []).append(values)
    if not groups:
        raise IngestionError(f"{path}: no data rows")

    sizes = {tid: len(rows) for tid, rows in groups.items()}
    short = [tid for tid, s in sizes.items() if s < n_train + 1]
    if short:
        raise IngestionError(f"tasks with fewer than {n_train + 1} rows: {short}")
    expected = max(set(sizes.values()), key=list(sizes.values()).count)
    uneven = [tid for tid, s in sizes.items() if s != expected]
    if uneven:
        raise IngestionError(f"tasks whose row count differs from {expected}: {uneven}")

    ids = list(groups)
    data = {tid: np.array(groups[tid]) for tid in ids}
    scale = max(np.linalg.norm(a[:, :-1], axis=1).max() for a in data.values())
    if scale == 0:
        scale = 1.0
    loss = mode.loss
    splits = []
    for i, tid in enumerate(ids):
        a = data[tid][task_rng(seed, i).permutation(expected)]
        X = a[:, :-1] / scale
        r = a[:, -1]
        y = r if mode is EnvMode.REGRESSION else np.where(r > threshold, 1.0, -1.0)
        splits.append(TaskSplit(
            train=TaskDataset(X[:n_train], y[:n_train], loss),
            test=TaskDataset(X[n_train:], y[n_train:], loss),
        ))
    return TaskCollection(splits, task_ids=ids)


def split_collection(tasks: TaskCollection, t_train: int, t_val: int, t_test: int, seed: int):
    """Seeded permutation followed by a contiguous partition into train/val/test collections."""
    if min(t_train, t_val, t_test) < 0:
        raise ValueError("split sizes must be non-negative")
    total = t_train + t_val + t_test
    if total > len(tasks):
        raise ValueError(f"need {total} tasks, collection has {len(tasks)}")
    perm = np.random.default_rng(np.random.SeedSequence(int(seed))).permutation(len(tasks))
    a, b = t_train, t_train + t_val
    return tasks.subset(perm[:a]), tasks.subset(perm[a:b]), tasks.subset(perm[b:total])


def environment_variance(tasks: TaskCollection, h) -> float:
    """``sqrt(0.5 * mean_i ||w_i - h||^2)`` over the collection's true task weights."""
    if tasks.true_weights is None:
        raise ValueError("collection has no true task weights")
    h = as_bias(h, tasks.true_weights.shape[1])
    diff = tasks.true_weights - h
    return math.sqrt(0.5 * float(np.mean(np.sum(diff * diff, axis=1))))


def save_collection(tasks: TaskCollection, directory, spec: Optional[EnvironmentSpec] = None) -> Path:
    """Write one CSV per task plus ``manifest.json``.

    Task files have columns ``split,x1..xd,y``; floats use ``repr`` so a reload
    is exact.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for i, s in enumerate(tasks.splits):
        name = f"task_{i:05d}.csv"
        with (directory / name).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["split"] + [f"x{j + 1}" for j in range(s.d)] + ["y"])
            for label, part in (("train", s.train), ("test", s.test)):
                for x, y in zip(part.X, part.y):
                    writer.writerow([label] + [repr(float(v)) for v in x] + [repr(float(y))])
        files.append(name)
    manifest = {
        "loss": tasks.loss.value,
        "d": tasks.d,
        "n_train": tasks.splits[0].train.n,
        "files": files,
        "task_ids": tasks.task_ids,
        "true_weights": None if tasks.true_weights is None else tasks.true_weights.tolist(),
        "environment": None if spec is None else {**asdict(spec), "mode": spec.mode.value},
    }
    out = directory / "manifest.json"
    out.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return out


def load_collection(directory) -> TaskCollection:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    loss = LossKind(manifest["loss"])
    splits = []
    for name in manifest["files"]:
        parts = {"train": ([], []), "test": ([], [])}
        with (directory / name).open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader)
            for row in reader:
                xs, ys = parts[row[0]]
                xs.append([float(v) for v in row[1:-1]])
                ys.append(float(row[-1]))
        splits.append(TaskSplit(
            train=TaskDataset(np.array(parts["train"][0]), np.array(parts["train"][1]), loss),
            test=TaskDataset(np.array(parts["test"][0]), np.array(parts["test"][1]), loss),
        ))
    tw = manifest.get("true_weights")
    return TaskCollection(splits, None if tw is None else np.array(tw), manifest.get("task_ids"))
