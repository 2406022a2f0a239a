"""AMSGrad with Adam-style bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteError


@dataclass
class AMSGrad:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    bias_correction: bool = True
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    v_hat_max: dict = field(default_factory=dict)
    step_count: int = 0

    def step(self, params: dict, grads: dict) -> dict:
        """Update ``params`` in place for every key in ``grads``; return the applied deltas.

        Raises NonFiniteError (leaving state untouched) if any gradient is NaN/Inf.
        """
        for k, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"non-finite gradient for {k}; step rejected")
        self.step_count += 1
        t = self.step_count
        if self.bias_correction:
            bc1 = 1.0 - self.beta1**t
            bc2 = 1.0 - self.beta2**t
        else:
            bc1 = bc2 = 1.0
        deltas = {}
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(g, dtype=np.float64)
                self.v[k] = np.zeros_like(g, dtype=np.float64)
                self.v_hat_max[k] = np.zeros_like(g, dtype=np.float64)
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            np.maximum(self.v_hat_max[k], self.v[k], out=self.v_hat_max[k])
            delta = -self.lr * (self.m[k] / bc1) / (np.sqrt(self.v_hat_max[k] / bc2) + self.eps)
            params[k] += delta
            deltas[k] = delta
        return deltas

    def to_arrays(self) -> dict[str, np.ndarray]:
        out = {"hyper": np.array([self.lr, self.beta1, self.beta2, self.eps, float(self.bias_correction)]),
               "step_count": np.array(self.step_count)}
        for name in ("m", "v", "v_hat_max"):
            for k, arr in getattr(self, name).items():
                out[f"{name}/{k}"] = arr
        return out

    @classmethod
    def from_arrays(cls, arrays: dict) -> "AMSGrad":
        lr, b1, b2, eps, bc = (float(x) for x in arrays["hyper"])
        opt = cls(lr, b1, b2, eps, bool(bc), step_count=int(arrays["step_count"]))
        for name in ("m", "v", "v_hat_max"):
            prefix = name + "/"
            getattr(opt, name).update({k[len(prefix):]: np.array(v) for k, v in arrays.items()
                                       if k.startswith(prefix)})
        return opt
