"""Embedding datasets: synthetic generation, task splits, and file formats.

Binary layout (all little-endian)::

    b"PICL" | version u32 | N u64 | D u32 | C u32 | N*D float32 (row-major) | N uint32 labels

CSV fallback: header ``label,f0,...,f{D-1}``, one sample per row.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .fsutil import atomic_write_bytes
from .seeding import stream

MAGIC = b"PICL"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQII")


@dataclass
class EmbeddingDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: str = "train"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or len(self.features) == 0:
            raise DataError(f"features must be a non-empty N x D matrix, got {self.features.shape}")
        if self.labels.shape != (len(self.features),):
            raise DataError("one label per feature row is required")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise DataError(f"labels must lie in 0..{self.num_classes - 1}")
        if self.split not in ("train", "test"):
            raise DataError(f"split must be 'train' or 'test', got {self.split!r}")

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, mask_or_idx) -> tuple[np.ndarray, np.ndarray]:
        return self.features[mask_or_idx], self.labels[mask_or_idx]

    def of_classes(self, classes) -> tuple[np.ndarray, np.ndarray]:
        return self.subset(np.isin(self.labels, list(classes)))


@dataclass(frozen=True)
class SynthConfig:
    num_classes: int = 10
    dim: int = 64
    train_per_class: int = 200
    test_per_class: int = 50
    intra_class_stddev: float = 0.1
    scale: float = 1.0
    max_class_cos: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2 or self.dim < 2:
            raise ConfigError("synthetic data needs at least 2 classes and 2 dimensions")
        if not self.intra_class_stddev > 0:
            raise ConfigError("intra_class_stddev must be positive")
        if self.train_per_class < 1 or self.test_per_class < 1:
            raise ConfigError("need at least one train and one test sample per class")


def _class_directions(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    dirs = []
    tries = 0
    while len(dirs) < cfg.num_classes:
        tries += 1
        if tries > 10_000:
            raise ConfigError(
                f"could not place {cfg.num_classes} directions in {cfg.dim}-D with pairwise cos < {cfg.max_class_cos}")
        d = rng.standard_normal(cfg.dim)
        d /= np.linalg.norm(d)
        if all(d @ e < cfg.max_class_cos for e in dirs):
            dirs.append(d)
    return np.array(dirs)


def generate_synthetic(cfg: SynthConfig) -> tuple[EmbeddingDataset, EmbeddingDataset]:
    """Gaussian clusters around well-separated unit directions; disjoint train/test draws.

    Values are rounded to float32 precision so the binary format round-trips exactly.
    """
    rng = stream(cfg.seed, "data")
    dirs = _class_directions(cfg, rng)
    train_rng, test_rng = rng.spawn(2)

    def draw(g, per_class, split):
        labels = np.repeat(np.arange(cfg.num_classes), per_class)
        feats = dirs[labels] * cfg.scale + g.normal(0.0, cfg.intra_class_stddev, (len(labels), cfg.dim))
        return EmbeddingDataset(feats.astype(np.float32).astype(np.float64), labels, cfg.num_classes, split)

    return draw(train_rng, cfg.train_per_class, "train"), draw(test_rng, cfg.test_per_class, "test")


def inject_label_noise(ds: EmbeddingDataset, fraction: float, rng: np.random.Generator,
                       classes=None) -> tuple[EmbeddingDataset, np.ndarray]:
    """Relabel ``fraction`` of the samples (restricted to ``classes``) to a different class in the same set."""
    classes = np.unique(ds.labels) if classes is None else np.asarray(sorted(classes))
    candidates = np.flatnonzero(np.isin(ds.labels, classes))
    n_flip = int(round(fraction * len(candidates)))
    flipped = rng.choice(candidates, size=n_flip, replace=False)
    labels = ds.labels.copy()
    for i in flipped:
        others = classes[classes != labels[i]]
        labels[i] = rng.choice(others)
    return EmbeddingDataset(ds.features.copy(), labels, ds.num_classes, ds.split), np.sort(flipped)


@dataclass(frozen=True)
class Task:
    task_id: int
    classes: tuple
    indices: np.ndarray = field(compare=False)


@dataclass
class TaskStream:
    """Disjoint class partition of a training set: one base task then increments."""

    tasks: list
    base_task_class_count: int

    def __post_init__(self):
        seen = set()
        for t in self.tasks:
            if seen & set(t.classes):
                raise DataError(f"task {t.task_id} repeats classes {sorted(seen & set(t.classes))}")
            seen |= set(t.classes)

    @property
    def T(self) -> int:
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def __len__(self):
        return len(self.tasks)


def class_order(num_classes: int, spec: str = "ascending") -> list[int]:
    """``"ascending"`` or ``"shuffled:<seed>"``."""
    if spec == "ascending":
        return list(range(num_classes))
    if spec.startswith("shuffled:"):
        try:
            seed = int(spec.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad class order {spec!r}") from None
        return [int(c) for c in np.random.default_rng(seed).permutation(num_classes)]
    raise ConfigError(f"unknown class order {spec!r}; use 'ascending' or 'shuffled:<seed>'")


def split_tasks(labels, base_class_count: int | None = None, classes_per_increment: int = 1,
                num_classes: int | None = None, order: str = "ascending") -> TaskStream:
    """Partition classes into a base task and equally sized increments."""
    if isinstance(labels, EmbeddingDataset):
        num_classes = labels.num_classes if num_classes is None else num_classes
        labels = labels.labels
    labels = np.asarray(labels)
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    if base_class_count is None:
        base_class_count = num_classes // 2
    rest = num_classes - base_class_count
    if base_class_count < 1 or classes_per_increment < 1 or rest < classes_per_increment:
        raise ConfigError("need a non-empty base task and at least one increment")
    if rest % classes_per_increment:
        raise ConfigError(
            f"{rest} remaining classes do not divide into increments of {classes_per_increment}")
    ordered = class_order(num_classes, order)
    groups = [ordered[:base_class_count]] + [
        ordered[i:i + classes_per_increment] for i in range(base_class_count, num_classes, classes_per_increment)]
    tasks = [Task(i + 1, tuple(g), np.flatnonzero(np.isin(labels, g))) for i, g in enumerate(groups)]
    return TaskStream(tasks, base_class_count)


def save_dataset(ds: EmbeddingDataset, path) -> None:
    path = Path(path)
    if path.suffix == ".csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label"] + [f"f{j}" for j in range(ds.dim)])
        for lab, row in zip(ds.labels, ds.features):
            w.writerow([int(lab)] + [repr(float(np.float32(v))) for v in row])
        atomic_write_bytes(path, buf.getvalue().encode())
        return
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, len(ds), ds.dim, ds.num_classes)
    body = ds.features.astype("<f4").tobytes() + ds.labels.astype("<u4").tobytes()
    atomic_write_bytes(path, header + body)


def load_dataset(path, split: str = "train", num_classes: int | None = None) -> EmbeddingDataset:
    """Read a ``.picl`` binary file or a ``.csv`` file."""
    path = Path(path)
    if path.suffix == ".csv":
        return _load_csv(path, split, num_classes)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated header")
    magic, version, n, d, c = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format version {version}")
    expected = _HEADER.size + n * d * 4 + n * 4
    if len(raw) != expected:
        raise DataError(f"{path}: expected {expected} bytes, found {len(raw)} (truncated or padded)")
    off = _HEADER.size
    feats = np.frombuffer(raw, dtype="<f4", count=n * d, offset=off).reshape(n, d)
    labels = np.frombuffer(raw, dtype="<u4", count=n, offset=off + n * d * 4)
    if n and labels.max() >= c:
        raise DataError(f"{path}: label {int(labels.max())} out of range for {c} classes")
    return EmbeddingDataset(feats.astype(np.float64), labels.astype(np.int64), c, split)


def _load_csv(path: Path, split: str, num_classes: int | None) -> EmbeddingDataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if not header or header[0] != "label" or header[1:] != [f"f{j}" for j in range(len(header) - 1)]:
            raise DataError(f"{path}: header must be label,f0,...,f<D-1>")
        rows = list(reader)
    try:
        arr = np.array(rows, dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if arr.ndim != 2 or arr.shape[1] != len(header):
        raise DataError(f"{path}: ragged rows")
    labels = arr[:, 0]
    if np.any(labels != np.round(labels)) or labels.min() < 0:
        raise DataError(f"{path}: labels must be nonnegative integers")
    labels = labels.astype(np.int64)
    c = int(labels.max()) + 1 if num_classes is None else num_classes
    return EmbeddingDataset(arr[:, 1:], labels, c, split)
