"""Parameter checkpoints.

A checkpoint is a directory holding ``manifest.json`` (format_version,
parameter names and shapes in storage order, free-form ``config``, optimizer
metadata) and ``params.f64`` (little-endian float64, parameters concatenated
in manifest order).  When optimizer state is stored, ``adam_state.f64``
holds every first moment followed by every second moment, same order.
"""

import json
import os

import numpy as np

from ..errors import FormatError, ShapeMismatch

FORMAT_VERSION = 1


def save_checkpoint(path, params, config=None, adam_state=None):
    """Write ``params`` (name -> array or Tensor) to ``path``."""
    os.makedirs(path, exist_ok=True)
    names = list(params)
    arrays = [np.asarray(getattr(params[n], "data", params[n]), dtype="<f8") for n in names]
    with open(os.path.join(path, "params.f64"), "wb") as fh:
        for a in arrays:
            fh.write(np.ascontiguousarray(a).tobytes())
    manifest = {
        "format_version": FORMAT_VERSION,
        "names": names,
        "shapes": [list(a.shape) for a in arrays],
        "config": config or {},
        "optimizer_state": adam_state is not None,
    }
    if adam_state is not None:
        manifest["adam"] = {"step": adam_state.step, "beta1": adam_state.beta1,
                            "beta2": adam_state.beta2, "eps": adam_state.eps,
                            "weight_decay": adam_state.weight_decay}
        with open(os.path.join(path, "adam_state.f64"), "wb") as fh:
            for key in ("m", "v"):
                moments = getattr(adam_state, key)
                for n, a in zip(names, arrays):
                    fh.write(np.ascontiguousarray(moments.get(n, np.zeros_like(a)), dtype="<f8").tobytes())
    with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    """Return ``(params, config, adam_state_or_None)`` with params as name -> array."""
    from .optim import AdamState

    try:
        with open(os.path.join(path, "manifest.json"), encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise FormatError(f"no checkpoint manifest in {path}") from None
    if manifest.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint format {manifest.get('format_version')!r}")
    names = manifest["names"]
    shapes = [tuple(s) for s in manifest["shapes"]]
    sizes = [int(np.prod(s)) for s in shapes]
    flat = np.fromfile(os.path.join(path, "params.f64"), dtype="<f8")
    if flat.size != sum(sizes):
        raise ShapeMismatch(f"params.f64 holds {flat.size} values, manifest implies {sum(sizes)}")
    offsets = np.cumsum([0] + sizes)
    params = {n: flat[a:b].reshape(s).astype(np.float64)
              for n, s, a, b in zip(names, shapes, offsets[:-1], offsets[1:])}
    adam = None
    if manifest.get("optimizer_state"):
        meta = manifest["adam"]
        raw = np.fromfile(os.path.join(path, "adam_state.f64"), dtype="<f8")
        total = sum(sizes)
        if raw.size != 2 * total:
            raise ShapeMismatch("adam_state.f64 size does not match parameters")
        adam = AdamState(beta1=meta["beta1"], beta2=meta["beta2"], eps=meta["eps"],
                         weight_decay=meta.get("weight_decay", 0.0), step=meta["step"])
        for k, key in enumerate(("m", "v")):
            base = k * total
            getattr(adam, key).update({n: raw[base + a:base + b].reshape(s).astype(np.float64)
                                       for n, s, a, b in zip(names, shapes, offsets[:-1], offsets[1:])})
    return params, manifest.get("config", {}), adam
