"""Checkpoint files: a NumPy ``.npz`` archive written atomically.

Array groups are prefixed ``net/``, ``opt/``, ``imp/`` and ``proto/``; run
bookkeeping (RNG states, metric trace, next task) lives in a JSON blob under
``meta``.  Nothing is pickled.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fsutil import atomic_write_bytes
from .errors import CheckpointError
from .importance import state_from_arrays, state_to_arrays
from .nn import LayerParams, Network
from .optim import AMSGrad
from .prototypes import PrototypeStore

CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    net: Network
    store: PrototypeStore
    importance: object = None
    optimizer: AMSGrad | None = None
    rng_state: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


def _network_from_arrays(arrays: dict) -> Network:
    layers = {"encoder": [], "decoder": []}
    for part in layers:
        i = 0
        while f"{part}.{i}.weights" in arrays:
            layers[part].append(LayerParams(arrays[f"{part}.{i}.weights"].copy(),
                                            arrays[f"{part}.{i}.biases"].copy()))
            i += 1
    return Network(layers["encoder"], layers["decoder"])


def save_checkpoint(path, net: Network, store: PrototypeStore, importance=None,
                    optimizer: AMSGrad | None = None, rng_state: dict | None = None,
                    meta: dict | None = None) -> None:
    arrays = {f"net/{k}": v for k, v in net.parameters().items()}
    arrays.update({f"proto/{k}": v for k, v in store.to_arrays().items()})
    if importance is not None:
        arrays.update({f"imp/{k}": v for k, v in state_to_arrays(importance).items()})
    if optimizer is not None:
        arrays.update({f"opt/{k}": v for k, v in optimizer.to_arrays().items()})
    blob = {"version": CHECKPOINT_VERSION, "rng_state": rng_state or {}, "meta": meta or {}}
    arrays["meta"] = np.frombuffer(json.dumps(blob).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    atomic_write_bytes(Path(path), buf.getvalue())


def read_arrays(path) -> dict[str, np.ndarray]:
    """All arrays stored in a checkpoint, keyed by their archive names."""
    try:
        with np.load(Path(path), allow_pickle=False) as z:
            return {k: z[k] for k in z.files}
    except (zipfile.BadZipFile, EOFError, ValueError, OSError) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from None


def load_checkpoint(path) -> Checkpoint:
    arrays = read_arrays(path)
    if "meta" not in arrays:
        raise CheckpointError(f"{path}: missing metadata")
    blob = json.loads(arrays["meta"].tobytes().decode())
    if blob.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint version {blob.get('version')} is not supported (expected {CHECKPOINT_VERSION})")

    def group(prefix):
        return {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}

    imp = group("imp/")
    opt = group("opt/")
    return Checkpoint(
        net=_network_from_arrays(group("net/")),
        store=PrototypeStore.from_arrays(group("proto/")),
        importance=state_from_arrays(imp) if imp else None,
        optimizer=AMSGrad.from_arrays(opt) if opt else None,
        rng_state=blob["rng_state"],
        meta=blob["meta"],
    )
