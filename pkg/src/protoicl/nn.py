"""
Dense autoencoder with ELU activations and hand-written backpropagation.

Layer weights are stored as (out_dim, in_dim) so a layer computes
``z = a @ W.T + b``.  Every encoder layer (including the code layer) is
followed by ELU; decoder hidden layers use ELU and the decoder output layer
is linear, since reconstruction targets are unbounded embeddings.

Parameters and gradients are exchanged as flat ``dict[str, ndarray]`` keyed
``"encoder.<i>.weights"`` / ``"decoder.<i>.biases"`` etc.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError, UsageError

ELU_ALPHA = 1.0


def elu(z):
    """ELU with alpha=1: z for z >= 0, exp(z) - 1 otherwise."""
    return np.where(z >= 0, z, ELU_ALPHA * np.expm1(np.minimum(z, 0.0)))


def elu_grad(z):
    """Derivative of ELU w.r.t. its pre-activation (equals 1 at z = 0 from both sides)."""
    return np.where(z >= 0, 1.0, ELU_ALPHA * np.exp(np.minimum(z, 0.0)))


@dataclass
class LayerParams:
    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise DimensionError(
                f"weights {self.weights.shape} and biases {self.biases.shape} are incompatible"
            )

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


def glorot_layer(in_dim: int, out_dim: int, rng: np.random.Generator) -> LayerParams:
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return LayerParams(rng.uniform(-limit, limit, size=(out_dim, in_dim)), np.zeros(out_dim))


class Network:
    """Encoder/decoder parameter store.

    ``encoder_dims`` lists the widths from input to code, e.g. ``[64, 16, 16]``;
    the decoder mirrors it back to the input width.
    """

    def __init__(self, encoder_layers: Sequence[LayerParams], decoder_layers: Sequence[LayerParams]):
        self.encoder_layers = list(encoder_layers)
        self.decoder_layers = list(decoder_layers)
        if not self.encoder_layers or not self.decoder_layers:
            raise DimensionError("encoder and decoder need at least one layer each")
        for seq in (self.encoder_layers, self.decoder_layers):
            for prev, nxt in zip(seq, seq[1:]):
                if prev.out_dim != nxt.in_dim:
                    raise DimensionError(f"layer widths {prev.out_dim} -> {nxt.in_dim} do not chain")
        if self.encoder_layers[-1].out_dim != self.decoder_layers[0].in_dim:
            raise DimensionError("code dimension differs between encoder and decoder")
        if self.encoder_layers[0].in_dim != self.decoder_layers[-1].out_dim:
            raise DimensionError("decoder output must reconstruct the encoder input dimension")

    @classmethod
    def create(cls, encoder_dims: Sequence[int], rng: np.random.Generator) -> "Network":
        dims = [int(d) for d in encoder_dims]
        if len(dims) < 2 or min(dims) < 1:
            raise DimensionError(f"invalid encoder dims {dims}")
        enc = [glorot_layer(i, o, rng) for i, o in zip(dims, dims[1:])]
        rev = dims[::-1]
        dec = [glorot_layer(i, o, rng) for i, o in zip(rev, rev[1:])]
        return cls(enc, dec)

    @property
    def input_dim(self) -> int:
        return self.encoder_layers[0].in_dim

    @property
    def code_dim(self) -> int:
        return self.encoder_layers[-1].out_dim

    @property
    def encoder_dims(self) -> list[int]:
        return [self.input_dim] + [layer.out_dim for layer in self.encoder_layers]

    def parameters(self) -> dict[str, np.ndarray]:
        """Live references to every parameter array, in a fixed order."""
        params = {}
        for part, layers in (("encoder", self.encoder_layers), ("decoder", self.decoder_layers)):
            for i, layer in enumerate(layers):
                params[f"{part}.{i}.weights"] = layer.weights
                params[f"{part}.{i}.biases"] = layer.biases
        return params

    def encoder_keys(self) -> list[str]:
        return [k for k in self.parameters() if k.startswith("encoder.")]

    def decoder_keys(self) -> list[str]:
        return [k for k in self.parameters() if k.startswith("decoder.")]

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.parameters().items()}

    def load_parameters(self, values: dict[str, np.ndarray]) -> None:
        """Copy values into the existing arrays (shapes must match)."""
        params = self.parameters()
        if set(values) != set(params):
            raise DimensionError("parameter keys do not match the network")
        for k, arr in params.items():
            src = np.asarray(values[k], dtype=np.float64)
            if src.shape != arr.shape:
                raise DimensionError(f"{k}: expected {arr.shape}, got {src.shape}")
            arr[...] = src

    def copy(self) -> "Network":
        clone = lambda ls: [LayerParams(l.weights.copy(), l.biases.copy()) for l in ls]  # noqa: E731
        return Network(clone(self.encoder_layers), clone(self.decoder_layers))


def zeros_like_params(net: Network) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in net.parameters().items()}


def _check_cols(x, expected: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != expected:
        raise DimensionError(f"{what}: expected {expected} columns, got shape {x.shape}")
    return x


def _run(layers, a, linear_last: bool, cache: list | None = None):
    for i, layer in enumerate(layers):
        z = a @ layer.weights.T + layer.biases
        last_linear = linear_last and i == len(layers) - 1
        if cache is not None:
            cache.append((a, z, not last_linear))
        a = z if last_linear else elu(z)
    return a


def forward_encode(net: Network, batch) -> np.ndarray:
    """Code vectors h(x) for each row of ``batch``."""
    x = _check_cols(batch, net.input_dim, "encoder input")
    return _run(net.encoder_layers, x, linear_last=False)


def forward_decode(net: Network, codes) -> np.ndarray:
    """Reconstructions g(c) for each row of ``codes``."""
    c = _check_cols(codes, net.code_dim, "decoder input")
    return _run(net.decoder_layers, c, linear_last=True)


@dataclass
class ForwardCache:
    """Activations retained by :func:`forward` for a subsequent :func:`backward`."""

    encoder: list = field(default_factory=list)
    decoder: list = field(default_factory=list)
    batch_size: int = 0


def forward(net: Network, batch, decode: bool = True):
    """Full pass returning ``(codes, recon, cache)``; ``recon`` is None when ``decode`` is False."""
    x = _check_cols(batch, net.input_dim, "encoder input")
    cache = ForwardCache(batch_size=x.shape[0])
    codes = _run(net.encoder_layers, x, linear_last=False, cache=cache.encoder)
    recon = _run(net.decoder_layers, codes, linear_last=True, cache=cache.decoder) if decode else None
    return codes, recon, cache


def _backprop(layers, cache, upstream, grads, prefix, per_sample_abs):
    d = upstream
    for i in range(len(layers) - 1, -1, -1):
        a_in, z, activated = cache[i]
        if activated:
            d = d * elu_grad(z)
        if per_sample_abs:
            grads[f"{prefix}.{i}.weights"] += np.abs(d).T @ np.abs(a_in)
            grads[f"{prefix}.{i}.biases"] += np.abs(d).sum(axis=0)
        else:
            grads[f"{prefix}.{i}.weights"] += d.T @ a_in
            grads[f"{prefix}.{i}.biases"] += d.sum(axis=0)
        d = d @ layers[i].weights
    return d


def backward(net: Network, cache: ForwardCache | None, d_codes=None, d_recon=None,
             per_sample_abs: bool = False) -> dict[str, np.ndarray]:
    """Gradients of a loss w.r.t. every parameter, given dL/dcodes and dL/drecon.

    With ``per_sample_abs`` the rows of the upstream gradients are treated as
    independent per-sample losses and the result is ``sum_i |dL_i/dtheta|``
    rather than ``|sum_i dL_i/dtheta|``.  That is exact for dense layers
    because the per-sample weight gradient is an outer product.
    """
    if cache is None or not cache.encoder:
        raise UsageError("backward() requires the cache from a preceding forward()")
    n = cache.batch_size
    grads = zeros_like_params(net)
    d_code_total = np.zeros((n, net.code_dim)) if d_codes is None else _check_cols(d_codes, net.code_dim, "d_codes")
    if d_recon is not None:
        if not cache.decoder:
            raise UsageError("forward() ran without decoding; no decoder activations cached")
        d_recon = _check_cols(d_recon, net.input_dim, "d_recon")
        d_code_total = d_code_total + _backprop(
            net.decoder_layers, cache.decoder, d_recon, grads, "decoder", per_sample_abs)
    _backprop(net.encoder_layers, cache.encoder, d_code_total, grads, "encoder", per_sample_abs)
    return grads
