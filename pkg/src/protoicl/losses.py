"""Loss terms for the autoencoder and their weighted composites.

Every term is averaged over the batch (or over sampled pairs for the cosine
embedding term) so loss weights do not depend on batch size.  Composites
return ``(value, grads)`` where ``grads`` is keyed like
``Network.parameters()``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DimensionError
from .nn import Network, backward, forward

log = logging.getLogger(__name__)

NORM_EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    lambda_mse: float = 1.0
    lambda_cos: float = 10.0
    lambda_l1: float = 1e-3
    lambda_reg: float = 10.0
    lambda_center: float = 1.0

    def __post_init__(self):
        for name in ("lambda_mse", "lambda_cos", "lambda_l1", "lambda_reg", "lambda_center"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"{name} must be nonnegative, got {getattr(self, name)}")


@dataclass(frozen=True)
class PairSample:
    index_a: int
    index_b: int
    same_class: bool


def cosine_similarity(u, v) -> float:
    """u.v / (|u||v|) clamped to [-1, 1]; 0.0 (with a warning) if either norm is ~0."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < NORM_EPS or nv < NORM_EPS:
        log.warning("cosine similarity of a zero-norm vector; returning 0")
        return 0.0
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def sample_pairs(labels, count: int, rng: np.random.Generator) -> list[PairSample]:
    """Draw ``count`` index pairs (a != b), uniform over unordered pairs, with replacement."""
    labels = np.asarray(labels)
    n = len(labels)
    if n < 2 or count <= 0:
        return []
    a = rng.integers(0, n, size=count)
    b = rng.integers(0, n - 1, size=count)
    b = b + (b >= a)
    same = labels[a] == labels[b]
    return [PairSample(int(i), int(j), bool(s)) for i, j, s in zip(a, b, same)]


def _as_2d(x, what):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise DimensionError(f"{what} must be 2-D, got shape {x.shape}")
    return x


def _mse_terms(recon, target):
    recon, target = _as_2d(recon, "recon"), _as_2d(target, "target")
    if recon.shape != target.shape:
        raise DimensionError(f"recon {recon.shape} vs target {target.shape}")
    diff = recon - target
    n = diff.shape[0]
    return float(np.sum(diff * diff) / n), 2.0 * diff / n


def _l1_terms(codes):
    codes = _as_2d(codes, "codes")
    n = codes.shape[0]
    return float(np.abs(codes).sum() / n), np.sign(codes) / n


def _pair_arrays(pairs, n):
    if len(pairs) == 0:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(0, bool)
    a = np.fromiter((p.index_a for p in pairs), int, len(pairs))
    b = np.fromiter((p.index_b for p in pairs), int, len(pairs))
    same = np.fromiter((p.same_class for p in pairs), bool, len(pairs))
    if np.any(a == b) or a.min() < 0 or b.min() < 0 or max(a.max(), b.max()) >= n:
        raise DimensionError("pair indices must be distinct and within the batch")
    return a, b, same


def _cos_terms(codes, pairs):
    codes = _as_2d(codes, "codes")
    grad = np.zeros_like(codes)
    if len(pairs) == 0:
        log.info("cosine embedding loss called with no pairs; contributing 0")
        return 0.0, grad
    a, b, same = _pair_arrays(pairs, codes.shape[0])
    u, v = codes[a], codes[b]
    nu, nv = np.linalg.norm(u, axis=1), np.linalg.norm(v, axis=1)
    ok = (nu >= NORM_EPS) & (nv >= NORM_EPS)
    sim = np.zeros(len(a))
    sim[ok] = np.einsum("ij,ij->i", u[ok], v[ok]) / (nu[ok] * nv[ok])
    sim_c = np.clip(sim, -1.0, 1.0)
    terms = np.where(same, 1.0 - sim_c, np.maximum(0.0, sim_c))
    p = len(a)
    # d(term)/d(sim): -1 for same-class pairs, 1 for active different-class pairs
    dsim = np.where(same, -1.0, (sim > 0).astype(float)) * ok / p
    safe_nu = np.where(ok, nu, 1.0)[:, None]
    safe_nv = np.where(ok, nv, 1.0)[:, None]
    du = v / (safe_nu * safe_nv) - sim[:, None] * u / safe_nu**2
    dv = u / (safe_nu * safe_nv) - sim[:, None] * v / safe_nv**2
    np.add.at(grad, a, dsim[:, None] * du)
    np.add.at(grad, b, dsim[:, None] * dv)
    return float(terms.mean()), grad


def _mean_matrix(labels, means) -> np.ndarray:
    labels = np.asarray(labels)
    lookup = means.means if hasattr(means, "means") else means
    try:
        return np.stack([np.asarray(lookup[int(c)], dtype=np.float64) for c in labels])
    except KeyError as exc:
        raise ConfigError(f"no class mean for label {exc.args[0]}") from None


def _center_terms(codes, labels, means):
    codes = _as_2d(codes, "codes")
    mu = _mean_matrix(labels, means)
    if mu.shape != codes.shape:
        raise DimensionError(f"means {mu.shape} vs codes {codes.shape}")
    diff = codes - mu
    n = codes.shape[0]
    return float(np.sum(diff * diff) / n), 2.0 * diff / n


def loss_mse(recon, target) -> float:
    """Batch mean of ||recon - target||^2."""
    return _mse_terms(recon, target)[0]


def loss_l1(codes) -> float:
    """Batch mean of sum_i |h_i|."""
    return _l1_terms(codes)[0]


def loss_cos(codes, labels, pairs: Sequence[PairSample]) -> float:
    """Mean over pairs of 1 - cos (same class) or max(0, cos) (different class)."""
    return _cos_terms(codes, pairs)[0]


def loss_center(codes, labels, means: Mapping) -> float:
    """Batch mean of the squared distance from each code to its own class mean."""
    return _center_terms(codes, labels, means)[0]


def loss_base(net: Network, x, labels, pairs, weights: LossWeights):
    """lambda_mse*MSE + lambda_cos*cos + lambda_l1*L1 and gradients for all parameters."""
    codes, recon, cache = forward(net, x)
    mse, d_recon = _mse_terms(recon, x)
    cos, d_cos = _cos_terms(codes, pairs)
    l1, d_l1 = _l1_terms(codes)
    value = weights.lambda_mse * mse + weights.lambda_cos * cos + weights.lambda_l1 * l1
    grads = backward(net, cache,
                     d_codes=weights.lambda_cos * d_cos + weights.lambda_l1 * d_l1,
                     d_recon=weights.lambda_mse * d_recon)
    return value, grads


def loss_add(net: Network, x, labels, pairs, weights: LossWeights, means):
    """lambda_center*center + lambda_cos*cos; the decoder receives zero gradient."""
    codes, _, cache = forward(net, x, decode=False)
    center, d_center = _center_terms(codes, labels, means)
    cos, d_cos = _cos_terms(codes, pairs)
    value = weights.lambda_center * center + weights.lambda_cos * cos
    grads = backward(net, cache, d_codes=weights.lambda_center * d_center + weights.lambda_cos * d_cos)
    return value, grads


def loss_inc(net: Network, x, labels, pairs, weights: LossWeights, reg_penalty):
    """L_base plus lambda_reg times a drift penalty given as ``(value, grads)``."""
    value, grads = loss_base(net, x, labels, pairs, weights)
    if reg_penalty is not None and weights.lambda_reg > 0:
        pen, pen_grads = reg_penalty
        value += weights.lambda_reg * pen
        for k, g in pen_grads.items():
            grads[k] += weights.lambda_reg * g
    return value, grads


def per_sample_abs_grads(net: Network, x, labels, weights: LossWeights, means=None):
    """sum_i |dF(x_i)/dtheta| for the per-sample part of the task loss.

    F is lambda_mse*MSE + lambda_l1*L1 (+ lambda_center*center when ``means``
    is given).  The pairwise cosine term has no per-sample form and is left out.
    """
    codes, recon, cache = forward(net, x)
    diff = recon - np.asarray(x, dtype=np.float64)
    d_recon = weights.lambda_mse * 2.0 * diff
    d_codes = weights.lambda_l1 * np.sign(codes)
    if means is not None:
        d_codes = d_codes + weights.lambda_center * 2.0 * (codes - _mean_matrix(labels, means))
    return backward(net, cache, d_codes=d_codes, d_recon=d_recon, per_sample_abs=True)
