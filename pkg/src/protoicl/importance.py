"""Per-parameter importance (SI and MAS) and the quadratic drift penalty.

Both states keep a cumulative importance ``omega`` and reference parameters
``theta_ref`` frozen at the last task boundary.  The penalty is
``sum_k omega_k * (theta_ref_k - theta_k)^2``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, UsageError

log = logging.getLogger(__name__)

Params = dict  # str -> ndarray


def _copy(params: Params) -> Params:
    return {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}


def _zeros(params: Params) -> Params:
    return {k: np.zeros(np.shape(v)) for k, v in params.items()}


def _check_keys(ref: Params, other: Params, what: str):
    if set(other) != set(ref):
        raise DimensionError(f"{what}: parameter keys differ from the importance state")
    for k, v in other.items():
        if np.shape(v) != ref[k].shape:
            raise DimensionError(f"{what}: {k} has shape {np.shape(v)}, expected {ref[k].shape}")


@dataclass
class SIState:
    """Synaptic Intelligence bookkeeping.

    ``omega_accum`` is the running path integral for the current task,
    ``omega`` the normalized importance summed over finished tasks.
    """

    omega_accum: Params
    omega: Params
    theta_ref: Params
    theta_task_start: Params
    xi: float = 1e-3
    steps: int = 0

    kind = "si"

    def __post_init__(self):
        if not self.xi > 0:
            raise ValueError("xi must be positive")

    @classmethod
    def create(cls, params: Params, xi: float = 1e-3) -> "SIState":
        return cls(_zeros(params), _zeros(params), _copy(params), _copy(params), xi)


@dataclass
class MASState:
    """Memory Aware Synapses bookkeeping: summed |dF/dtheta| over observed samples."""

    grad_norm_sum: Params
    omega: Params
    theta_ref: Params
    sample_count: int = 0

    kind = "mas"

    @classmethod
    def create(cls, params: Params) -> "MASState":
        return cls(_zeros(params), _zeros(params), _copy(params))


def si_accumulate_step(state: SIState, grads: Params, delta_theta: Params) -> None:
    """omega_accum += -grad * delta for one optimizer step.

    ``grads`` must be taken at the pre-update parameters.  Keys missing from
    ``delta_theta`` (frozen parameters) contribute nothing.
    """
    for k, d in delta_theta.items():
        if k not in state.omega_accum:
            raise DimensionError(f"unknown parameter {k}")
        g = grads[k]
        if np.shape(g) != state.omega_accum[k].shape or np.shape(d) != state.omega_accum[k].shape:
            raise DimensionError(f"{k}: gradient/delta shape mismatch")
        state.omega_accum[k] -= g * d
    state.steps += 1


def si_consolidate(state: SIState, theta_now: Params) -> None:
    """Fold the task's path integral into omega and move the reference point.

    omega += max(0, omega_accum) / (Delta^2 + xi) with Delta the drift since
    the task started.
    """
    _check_keys(state.omega, theta_now, "si_consolidate")
    if state.steps == 0:
        log.warning("SI consolidation without any accumulated steps; skipping")
        return
    for k, theta in theta_now.items():
        drift = np.asarray(theta) - state.theta_task_start[k]
        state.omega[k] += np.maximum(state.omega_accum[k], 0.0) / (drift * drift + state.xi)
        state.omega_accum[k][...] = 0.0
    state.theta_ref = _copy(theta_now)
    state.theta_task_start = _copy(theta_now)
    state.steps = 0


def mas_accumulate_batch(state: MASState, abs_grad_sum: Params, batch_size: int) -> None:
    """Add per-sample gradient magnitudes summed over a batch of ``batch_size`` samples."""
    _check_keys(state.grad_norm_sum, abs_grad_sum, "mas_accumulate_batch")
    for k, g in abs_grad_sum.items():
        state.grad_norm_sum[k] += np.asarray(g)
    state.sample_count += int(batch_size)


def mas_consolidate(state: MASState, theta_now: Params) -> None:
    """omega += grad_norm_sum / sample_count; reset the sums; theta_ref <- theta_now."""
    _check_keys(state.omega, theta_now, "mas_consolidate")
    if state.sample_count <= 0:
        raise UsageError("MAS consolidation with no observed samples")
    for k in state.omega:
        state.omega[k] += state.grad_norm_sum[k] / state.sample_count
        state.grad_norm_sum[k][...] = 0.0
    state.sample_count = 0
    state.theta_ref = _copy(theta_now)


def reg_penalty(state, theta_now: Params):
    """Return ``(penalty, grads)`` for the quadratic drift penalty.

    Only keys present in ``theta_now`` are evaluated, so passing the encoder
    subset gives the encoder-only penalty.
    """
    total = 0.0
    grads = {}
    for k, theta in theta_now.items():
        diff = state.theta_ref[k] - np.asarray(theta)
        total += float(np.sum(state.omega[k] * diff * diff))
        grads[k] = -2.0 * state.omega[k] * diff
    return total, grads


def state_to_arrays(state) -> dict[str, np.ndarray]:
    """Flatten an importance state into named arrays for checkpointing."""
    out = {"kind": np.array(state.kind)}
    groups = ("omega_accum", "omega", "theta_ref", "theta_task_start") if state.kind == "si" \
        else ("grad_norm_sum", "omega", "theta_ref")
    for g in groups:
        for k, v in getattr(state, g).items():
            out[f"{g}/{k}"] = v
    if state.kind == "si":
        out["xi"] = np.array(state.xi)
        out["steps"] = np.array(state.steps)
    else:
        out["sample_count"] = np.array(state.sample_count)
    return out


def state_from_arrays(arrays: dict[str, np.ndarray]):
    kind = str(arrays["kind"])

    def group(name):
        prefix = name + "/"
        return {k[len(prefix):]: np.array(v, dtype=np.float64) for k, v in arrays.items()
                if k.startswith(prefix)}

    if kind == "si":
        return SIState(group("omega_accum"), group("omega"), group("theta_ref"),
                       group("theta_task_start"), float(arrays["xi"]), int(arrays["steps"]))
    if kind == "mas":
        return MASState(group("grad_norm_sum"), group("omega"), group("theta_ref"),
                        int(arrays["sample_count"]))
    raise ValueError(f"unknown importance kind {kind!r}")
