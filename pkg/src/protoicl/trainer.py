"""Base, refinement, and incremental training over a task stream."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import seeding
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, TrainConfig
from .data import EmbeddingDataset, TaskStream, split_tasks
from .errors import DataError, NonFiniteError, UsageError
from .importance import (MASState, SIState, mas_accumulate_batch, mas_consolidate,
                         reg_penalty, si_accumulate_step, si_consolidate)
from .losses import LossWeights, loss_add, loss_base, loss_inc, per_sample_abs_grads, sample_pairs
from .metrics import RunMetrics, SessionRecord, accuracy
from .nn import Network
from .optim import AMSGrad
from .outlier import LOFConfig, exclude_and_mean
from .prototypes import PrototypeStore, compute_class_means, encode_in_batches, predict_batch, replace_means

log = logging.getLogger(__name__)


@dataclass
class LearnerState:
    """Everything that persists between tasks."""

    net: Network
    store: PrototypeStore
    importance: SIState | MASState | None
    rngs: dict
    optimizer: AMSGrad | None = None


def new_importance(cfg: TrainConfig, net: Network):
    if cfg.regularizer == "si":
        return SIState.create(net.parameters(), xi=cfg.xi)
    if cfg.regularizer == "mas":
        return MASState.create(net.parameters())
    return None


def _run_phase(state: LearnerState, x, y, epochs, lr_fn, loss_fn, trainable, batch_size):
    """Shuffled mini-batch optimization of ``loss_fn`` over ``trainable`` keys.

    SI bookkeeping (gradient at the pre-update point times the applied
    delta) happens after every optimizer step.
    """
    net = state.net
    opt = AMSGrad(lr=lr_fn(0))
    state.optimizer = opt
    si = state.importance if isinstance(state.importance, SIState) else None
    n = len(y)
    for epoch in range(epochs):
        opt.lr = lr_fn(epoch)
        order = state.rngs["shuffle"].permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            xb, yb = x[idx], y[idx]
            pairs = sample_pairs(yb, len(yb), state.rngs["pairs"])
            value, grads = loss_fn(xb, yb, pairs)
            if not np.isfinite(value):
                raise NonFiniteError(f"non-finite loss {value} at epoch {epoch}")
            params = net.parameters()
            deltas = opt.step(params, {k: grads[k] for k in trainable})
            if si is not None:
                si_accumulate_step(si, grads, deltas)


def _mas_pass(state: LearnerState, x, y, weights: LossWeights, batch_size: int, means=None,
              per_batch: bool = False):
    """One pass over task data accumulating |dF/dtheta| into the MAS state."""
    for start in range(0, len(y), batch_size):
        xb, yb = x[start:start + batch_size], y[start:start + batch_size]
        if per_batch:
            # surrogate: |mean-batch gradient| weighted by batch size
            _, grads = loss_base(state.net, xb, yb, [], weights)
            abs_sum = {k: np.abs(g) * len(yb) for k, g in grads.items()}
        else:
            abs_sum = per_sample_abs_grads(state.net, xb, yb, weights, means)
        mas_accumulate_batch(state.importance, abs_sum, len(yb))


def _consolidate(state: LearnerState, x, y, weights, cfg: TrainConfig, means=None):
    imp = state.importance
    if isinstance(imp, SIState):
        si_consolidate(imp, state.net.parameters())
    elif isinstance(imp, MASState):
        _mas_pass(state, x, y, weights, cfg.batch_size, means, cfg.mas_per_batch)
        mas_consolidate(imp, state.net.parameters())


def _codes_by_class(net, x, y):
    codes = encode_in_batches(net, x)
    return {int(c): codes[y == c] for c in np.unique(y)}


def train_base(state: LearnerState, x, y, cfg: TrainConfig, weights: LossWeights,
               lof: LOFConfig | None = None) -> LearnerState:
    """Train encoder and decoder on the base task, build class means, optionally refine them.

    With ``cfg.use_lof`` the base means are recomputed from LOF inliers and the
    encoder alone is trained further on the center + cosine loss, with
    importance still accumulating.  The importance state is consolidated last.
    """
    if len(state.store):
        raise UsageError("base training expects an empty prototype store")
    net = state.net
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    _run_phase(state, x, y, cfg.epochs_base, lambda e: cfg.lr("base", e),
               lambda xb, yb, pairs: loss_base(net, xb, yb, pairs, weights),
               list(net.parameters()), cfg.batch_size)
    compute_class_means(net, x, y, state.store, cfg.batch_size)
    refined = None
    if cfg.use_lof:
        lof = lof or LOFConfig()
        refined = exclude_and_mean(_codes_by_class(net, x, y), lof)
        replace_means(state.store, refined)
        _run_phase(state, x, y, cfg.epochs_add, lambda e: cfg.lr("add", e),
                   lambda xb, yb, pairs: loss_add(net, xb, yb, pairs, weights, refined),
                   net.encoder_keys(), cfg.batch_size)
    _consolidate(state, x, y, weights, cfg, means=refined)
    return state


def train_incremental(state: LearnerState, x, y, cfg: TrainConfig, weights: LossWeights) -> LearnerState:
    """Encoder-only training on a new task with the drift penalty, then append its class means."""
    y = np.asarray(y)
    overlap = sorted(set(int(c) for c in np.unique(y)) & set(state.store.class_ids))
    if overlap:
        raise DataError(f"task classes {overlap} were already learned")
    net = state.net
    x = np.asarray(x, dtype=np.float64)
    enc = net.encoder_keys()
    imp = state.importance

    def objective(xb, yb, pairs):
        penalty = None
        if imp is not None and weights.lambda_reg > 0:
            params = net.parameters()
            penalty = reg_penalty(imp, {k: params[k] for k in enc})
        return loss_inc(net, xb, yb, pairs, weights, penalty)

    _run_phase(state, x, y, cfg.epochs_inc, lambda e: cfg.lr("inc", e), objective, enc, cfg.batch_size)
    compute_class_means(net, x, y, state.store, cfg.batch_size)
    _consolidate(state, x, y, weights, cfg)
    return state


def evaluate_session(state: LearnerState, test: EmbeddingDataset, base_classes, new_classes, index: int):
    seen = state.store.class_ids
    xs, ys = test.of_classes(seen)
    preds = predict_batch(state.store, encode_in_batches(state.net, xs))
    base_mask = np.isin(ys, list(base_classes))
    new_mask = np.isin(ys, list(new_classes))
    return SessionRecord(index, accuracy(preds[base_mask], ys[base_mask]),
                         accuracy(preds[new_mask], ys[new_mask]), accuracy(preds, ys))


def base_accuracy(state: LearnerState, test: EmbeddingDataset, base_classes) -> float:
    xs, ys = test.of_classes(base_classes)
    return accuracy(predict_batch(state.store, encode_in_batches(state.net, xs)), ys)


def make_stream(train: EmbeddingDataset, cfg: RunConfig) -> TaskStream:
    return split_tasks(train, cfg.data.base_classes, cfg.data.classes_per_increment,
                       order=cfg.data.class_order)


def init_state(cfg: RunConfig, input_dim: int) -> LearnerState:
    rngs = seeding.rng_streams(cfg.train.seed)
    net = Network.create(cfg.arch.encoder_dims(input_dim), rngs["init"])
    return LearnerState(net, PrototypeStore(net.code_dim), new_importance(cfg.train, net), rngs)


def _save(path, state: LearnerState, metrics: RunMetrics, next_task: int, cfg: RunConfig):
    meta = {"next_task": next_task, "records": metrics.trace(), "base_accuracy": metrics.base_accuracy,
            "config": cfg.to_dict()}
    save_checkpoint(path, state.net, state.store, state.importance, state.optimizer,
                    seeding.get_state(state.rngs), meta)


def restore_state(path, cfg: RunConfig) -> tuple[LearnerState, RunMetrics, int]:
    ck = load_checkpoint(path)
    rngs = seeding.rng_streams(cfg.train.seed)
    seeding.set_state(rngs, ck.rng_state)
    metrics = RunMetrics([SessionRecord(int(i), b, n, a) for i, b, n, a in ck.meta["records"]],
                         ck.meta.get("base_accuracy"))
    state = LearnerState(ck.net, ck.store, ck.importance, rngs, ck.optimizer)
    return state, metrics, int(ck.meta["next_task"])


def run_stream(train: EmbeddingDataset, test: EmbeddingDataset, cfg: RunConfig,
               stream: TaskStream | None = None, checkpoint_dir=None, resume_from=None,
               stop_after: int | None = None, on_session=None) -> RunMetrics:
    """Train every task in order and record accuracies after each session i >= 2.

    ``checkpoint_dir`` saves ``task_<k>.ckpt`` after each task; ``resume_from``
    continues from such a file; ``stop_after`` halts after that many tasks.
    """
    stream = stream or make_stream(train, cfg)
    tasks = stream.tasks
    base_classes = tasks[0].classes
    if resume_from is not None:
        state, metrics, start = restore_state(resume_from, cfg)
    else:
        state, metrics, start = init_state(cfg, train.dim), RunMetrics(), 0
    ckdir = Path(checkpoint_dir) if checkpoint_dir is not None else None

    for t in range(start, len(tasks)):
        if stop_after is not None and t >= stop_after:
            break
        task = tasks[t]
        x, y = train.subset(task.indices)
        try:
            if t == 0:
                train_base(state, x, y, cfg.train, cfg.loss, cfg.lof)
                metrics.base_accuracy = base_accuracy(state, test, base_classes)
            else:
                train_incremental(state, x, y, cfg.train, cfg.loss)
                rec = evaluate_session(state, test, base_classes, task.classes, t + 1)
                metrics.records.append(rec)
                if on_session is not None:
                    on_session(rec)
        except NonFiniteError:
            if ckdir is not None:
                _save(ckdir / "abort.ckpt", state, metrics, t, cfg)
            raise
        if ckdir is not None:
            _save(ckdir / f"task_{t + 1}.ckpt", state, metrics, t + 1, cfg)
    return metrics


def train_joint(train: EmbeddingDataset, test: EmbeddingDataset, cfg: RunConfig) -> float:
    """Offline upper bound: base training on all classes at once; returns test accuracy."""
    state = init_state(cfg, train.dim)
    state.importance = None
    train_base(state, train.features, train.labels, cfg.train, cfg.loss, cfg.lof)
    preds = predict_batch(state.store, encode_in_batches(state.net, test.features))
    return accuracy(preds, test.labels)
