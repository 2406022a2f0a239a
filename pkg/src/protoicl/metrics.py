"""Session accuracies and the Psi_base / Psi_new / Psi_all summaries."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DataError


@dataclass(frozen=True)
class SessionRecord:
    session_index: int
    alpha_base: float
    alpha_new: float
    alpha_all: float


@dataclass(frozen=True)
class EvalConfig:
    alpha_ideal: float
    T: int

    def __post_init__(self):
        if not 0 < self.alpha_ideal <= 1:
            raise ConfigError(f"alpha_ideal must lie in (0, 1], got {self.alpha_ideal}")
        if self.T < 2:
            raise ConfigError(f"T must be >= 2, got {self.T}")


def accuracy(predictions, labels) -> float:
    predictions, labels = np.asarray(predictions), np.asarray(labels)
    if predictions.shape != labels.shape:
        raise DataError(f"{predictions.shape} predictions for {labels.shape} labels")
    if labels.size == 0:
        raise DataError("accuracy of an empty set is undefined")
    return float(np.mean(predictions == labels))


def psi_metrics(records, cfg: EvalConfig) -> tuple[float, float, float]:
    """(Psi_base, Psi_new, Psi_all) averaged over sessions 2..T.

    Psi_base and Psi_all are normalized by ``cfg.alpha_ideal``; Psi_new is not.
    """
    by_index = {}
    for r in records:
        if r.session_index in by_index:
            raise DataError(f"duplicate record for session {r.session_index}")
        by_index[r.session_index] = r
    expected = set(range(2, cfg.T + 1))
    missing = sorted(expected - set(by_index))
    extra = sorted(set(by_index) - expected)
    if missing or extra:
        raise DataError(f"session records must cover 2..{cfg.T}; missing {missing}, unexpected {extra}")
    rs = [by_index[i] for i in sorted(expected)]
    n = cfg.T - 1
    psi_base = sum(r.alpha_base for r in rs) / (n * cfg.alpha_ideal)
    psi_new = sum(r.alpha_new for r in rs) / n
    psi_all = sum(r.alpha_all for r in rs) / (n * cfg.alpha_ideal)
    return psi_base, psi_new, psi_all


@dataclass
class RunMetrics:
    """Per-session accuracy trace of one continual run."""

    records: list = field(default_factory=list)
    base_accuracy: float | None = None  # accuracy on base classes after session 1

    @property
    def T(self) -> int:
        return 1 + len(self.records)

    def psi(self, alpha_ideal: float) -> dict:
        b, n, a = psi_metrics(self.records, EvalConfig(alpha_ideal, self.T))
        return {"psi_base": b, "psi_new": n, "psi_all": a}

    def trace(self) -> list[tuple]:
        return [(r.session_index, r.alpha_base, r.alpha_new, r.alpha_all) for r in self.records]

    def to_dict(self, alpha_ideal: float | None = None) -> dict:
        out = {"T": self.T, "base_accuracy": self.base_accuracy,
               "sessions": [asdict(r) for r in self.records]}
        if alpha_ideal is not None and self.records:
            out["alpha_ideal"] = alpha_ideal
            out.update(self.psi(alpha_ideal))
        return out
