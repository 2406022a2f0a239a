"""Class-mean prototypes and the cosine nearest-class-mean rule."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DimensionError, UsageError
from .losses import NORM_EPS
from .nn import Network, forward_encode

log = logging.getLogger(__name__)


@dataclass
class PrototypeStore:
    """Ordered ``class_id -> mean code`` map plus the sample count behind each mean.

    Means are kept un-normalized; only their direction matters for prediction.
    """

    code_dim: int
    means: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.means)

    def __contains__(self, class_id):
        return int(class_id) in self.means

    @property
    def class_ids(self) -> list[int]:
        return list(self.means)

    def add(self, class_id: int, mean, count: int) -> None:
        class_id = int(class_id)
        mean = np.asarray(mean, dtype=np.float64)
        if class_id in self.means:
            raise UsageError(f"class {class_id} already has a prototype")
        if mean.shape != (self.code_dim,):
            raise DimensionError(f"mean for class {class_id} has shape {mean.shape}, expected ({self.code_dim},)")
        if count < 1:
            raise DataError(f"class {class_id} has no samples")
        if np.linalg.norm(mean) < NORM_EPS:
            raise DataError(f"class {class_id} has a zero-norm mean; cosine prediction is undefined")
        self.means[class_id] = mean
        self.counts[class_id] = int(count)

    def matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """(sorted class ids, means stacked in that order)."""
        ids = np.array(sorted(self.means), dtype=np.int64)
        return ids, np.stack([self.means[int(c)] for c in ids])

    def to_arrays(self) -> dict[str, np.ndarray]:
        ids = np.array(list(self.means), dtype=np.int64)
        mat = np.stack([self.means[int(c)] for c in ids]) if len(ids) else np.zeros((0, self.code_dim))
        return {"class_ids": ids, "means": mat,
                "counts": np.array([self.counts[int(c)] for c in ids], dtype=np.int64)}

    @classmethod
    def from_arrays(cls, arrays) -> "PrototypeStore":
        means = np.asarray(arrays["means"], dtype=np.float64)
        store = cls(code_dim=means.shape[1])
        for c, m, n in zip(arrays["class_ids"], means, arrays["counts"]):
            store.add(int(c), m, int(n))
        return store


def encode_in_batches(net: Network, x, batch_size: int = 256) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if len(x) == 0:
        return np.zeros((0, net.code_dim))
    return np.concatenate([forward_encode(net, x[i:i + batch_size]) for i in range(0, len(x), batch_size)])


def compute_class_means(net: Network, x, labels, store: PrototypeStore, batch_size: int = 64,
                        classes=None) -> PrototypeStore:
    """Append the mean code of every class in the task to ``store``.

    Codes are accumulated as running sums over mini-batches.  ``classes``
    lists the task's classes; any of them with no samples is an error.
    """
    labels = np.asarray(labels)
    task_classes = sorted(set(int(c) for c in labels)) if classes is None else [int(c) for c in classes]
    sums = {c: np.zeros(net.code_dim) for c in task_classes}
    counts = dict.fromkeys(task_classes, 0)
    x = np.asarray(x, dtype=np.float64)
    for start in range(0, len(x), batch_size):
        codes = forward_encode(net, x[start:start + batch_size])
        for code, c in zip(codes, labels[start:start + batch_size]):
            c = int(c)
            if c not in sums:
                raise DataError(f"label {c} is outside the task's class set")
            sums[c] += code
            counts[c] += 1
    for c in task_classes:
        if counts[c] == 0:
            raise DataError(f"class {c} has zero training samples")
        store.add(c, sums[c] / counts[c], counts[c])
    return store


def predict_batch(store: PrototypeStore, codes) -> np.ndarray:
    """Class with the highest cosine similarity for every row; ties go to the lowest id.

    Zero-norm rows get the lowest class id (logged as degenerate).
    """
    if len(store) == 0:
        raise UsageError("cannot predict with an empty prototype store")
    codes = np.asarray(codes, dtype=np.float64)
    if codes.ndim == 1:
        codes = codes[None, :]
    if codes.shape[1] != store.code_dim:
        raise DimensionError(f"codes have {codes.shape[1]} columns, store expects {store.code_dim}")
    ids, means = store.matrix()
    mean_dirs = means / np.linalg.norm(means, axis=1, keepdims=True)
    norms = np.linalg.norm(codes, axis=1)
    degenerate = norms < NORM_EPS
    if np.any(degenerate):
        log.warning("%d zero-norm code(s); assigning the lowest class id", int(degenerate.sum()))
    sims = (codes / np.where(degenerate, 1.0, norms)[:, None]) @ mean_dirs.T
    sims[degenerate] = 0.0
    return ids[np.argmax(sims, axis=1)]


def predict(store: PrototypeStore, code) -> int:
    return int(predict_batch(store, np.asarray(code)[None, :])[0])


def replace_means(store: PrototypeStore, new_means: dict, counts: dict | None = None) -> PrototypeStore:
    """Swap in refined means for existing classes (counts kept unless given)."""
    for c, m in new_means.items():
        c = int(c)
        if c not in store.means:
            raise UsageError(f"class {c} is not in the store")
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (store.code_dim,):
            raise DimensionError(f"replacement mean for class {c} has shape {m.shape}")
        if np.linalg.norm(m) < NORM_EPS:
            raise DataError(f"replacement mean for class {c} has zero norm")
        store.means[c] = m
        if counts is not None:
            store.counts[c] = int(counts[c])
    return store
