"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteError
from .importance import MASState, SIState, reg_penalty
from .losses import LossWeights, loss_add, loss_base, loss_inc, sample_pairs
from .nn import Network


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    tol: float
    worst: tuple  # (parameter key, flat index)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def finite_diff_check(net: Network, loss_fn, batch, tol: float = 1e-4, step: float = 1e-5,
                      n_params: int = 100, rng: np.random.Generator | None = None,
                      keys=None, floor: float = 1e-8) -> GradCheckReport:
    """Compare ``loss_fn(net, batch) -> (loss, grads)`` with central differences.

    Checks ``n_params`` randomly chosen scalars (all of them if fewer exist)
    among ``keys`` (default: every key present in the analytic gradient).
    Relative error is |a - n| / max(|a|, |n|, floor).
    """
    rng = rng or np.random.default_rng(0)
    loss0, grads = loss_fn(net, batch)
    if not np.isfinite(loss0):
        raise NonFiniteError(f"loss is {loss0}; gradient check aborted")
    params = net.parameters()
    keys = list(grads) if keys is None else list(keys)
    slots = [(k, i) for k in keys for i in range(params[k].size)]
    if len(slots) > n_params:
        chosen = rng.choice(len(slots), size=n_params, replace=False)
        slots = [slots[j] for j in sorted(chosen)]
    worst, worst_at = 0.0, ("", -1)
    for k, i in slots:
        flat = params[k].reshape(-1)
        orig = flat[i]
        flat[i] = orig + step
        plus = loss_fn(net, batch)[0]
        flat[i] = orig - step
        minus = loss_fn(net, batch)[0]
        flat[i] = orig
        if not (np.isfinite(plus) and np.isfinite(minus)):
            raise NonFiniteError(f"non-finite loss while perturbing {k}[{i}]")
        numeric = (plus - minus) / (2 * step)
        analytic = grads[k].reshape(-1)[i]
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
        if err > worst:
            worst, worst_at = err, (k, i)
    return GradCheckReport(worst, len(slots), tol, worst_at)


def _fixture(seed: int, dims=(12, 6, 4), n: int = 16, classes: int = 3):
    rng = np.random.default_rng(seed)
    net = Network.create(dims, rng)
    for p in net.parameters().values():
        p += rng.normal(0, 0.05, p.shape)
    x = rng.normal(0, 1, (n, dims[0]))
    y = np.arange(n) % classes
    pairs = sample_pairs(y, n, rng)
    means = {c: rng.normal(0, 1, dims[-1]) for c in range(classes)}
    return net, x, y, pairs, means, rng


def _importance(net: Network, rng, kind: str):
    params = net.parameters()
    state = SIState.create(params) if kind == "si" else MASState.create(params)
    for k, v in params.items():
        state.omega[k] = rng.uniform(0, 2, v.shape)
        state.theta_ref[k] = v + rng.normal(0, 0.1, v.shape)
    return state


def loss_suite(seed: int = 0) -> dict:
    """Named ``(net, loss_fn, batch)`` cases covering every loss term and composite."""
    net, x, y, pairs, means, rng = _fixture(seed)
    si, mas = _importance(net, rng, "si"), _importance(net, rng, "mas")
    only = lambda **kw: LossWeights(**{"lambda_mse": 0, "lambda_cos": 0, "lambda_l1": 0,  # noqa: E731
                                       "lambda_reg": 0, "lambda_center": 0, **kw})
    defaults = LossWeights()

    def penalty_fn(state):
        return lambda n, b: reg_penalty(state, n.parameters())

    def inc_fn(state):
        return lambda n, b: loss_inc(n, b[0], b[1], pairs, defaults, reg_penalty(state, n.parameters()))

    batch = (x, y)
    cases = {
        "mse": lambda n, b: loss_base(n, b[0], b[1], pairs, only(lambda_mse=1)),
        "cos": lambda n, b: loss_base(n, b[0], b[1], pairs, only(lambda_cos=1)),
        "l1": lambda n, b: loss_base(n, b[0], b[1], pairs, only(lambda_l1=1)),
        "center": lambda n, b: loss_add(n, b[0], b[1], pairs, only(lambda_center=1), means),
        "si_penalty": penalty_fn(si),
        "mas_penalty": penalty_fn(mas),
        "base": lambda n, b: loss_base(n, b[0], b[1], pairs, defaults),
        "add": lambda n, b: loss_add(n, b[0], b[1], pairs, defaults, means),
        "inc_si": inc_fn(si),
        "inc_mas": inc_fn(mas),
    }
    return {name: (net, fn, batch) for name, fn in cases.items()}


def run_suite(seed: int = 0, tol: float = 1e-4, n_params: int = 100) -> dict[str, GradCheckReport]:
    reports = {}
    for name, (net, fn, batch) in loss_suite(seed).items():
        reports[name] = finite_diff_check(net, fn, batch, tol=tol, n_params=n_params,
                                          rng=np.random.default_rng(seed))
    return reports
