"""Model checkpointing.

One file: a compact JSON header line (model config, tensor manifest,
caller metadata) terminated by a newline, then the raw little-endian
float64 bytes of every tensor in manifest order. Serialization is fully
deterministic so identical training runs produce identical bytes.
"""
import json
import os

import numpy as np

from .errors import DataError
from .model import ModelConfig, ModelParams, init_params

FORMAT_NAME = "vampcf-checkpoint-v1"


def save_checkpoint(path, params, extra=None):
    """Write params to path atomically (tmp file + rename)."""
    named = params.named_parameters()
    header = {
        "format": FORMAT_NAME,
        "config": params.config.to_dict(),
        "tensors": [{"name": n, "shape": list(m.shape)} for n, m in named.items()],
        "extra": extra or {},
    }
    line = json.dumps(header, sort_keys=True, separators=(",", ":"))
    tmp = path + ".partial"
    with open(tmp, "wb") as f:
        f.write(line.encode("utf-8") + b"\n")
        for m in named.values():
            f.write(np.ascontiguousarray(m.data, dtype="<f8").tobytes())
    os.replace(tmp, path)
    return path


def load_checkpoint(path):
    """Read a checkpoint; returns (ModelParams, extra dict)."""
    try:
        f = open(path, "rb")
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from e
    with f:
        line = f.readline()
        if not line.endswith(b"\n"):
            raise DataError(f"{path}: truncated checkpoint header")
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise DataError(f"{path}: invalid checkpoint header: {e}") from e
        if header.get("format") != FORMAT_NAME:
            raise DataError(f"{path}: unknown checkpoint format {header.get('format')!r}")
        config = ModelConfig(**header["config"])
        params = init_params(config, np.random.default_rng(0))
        named = params.named_parameters()
        declared = [t["name"] for t in header["tensors"]]
        if declared != list(named):
            raise DataError(f"{path}: tensor manifest does not match the "
                            f"declared model configuration")
        for t in header["tensors"]:
            shape = tuple(t["shape"])
            target = named[t["name"]]
            if target.shape != shape:
                raise DataError(f"{path}: tensor {t['name']} has shape {shape}, "
                                f"expected {target.shape}")
            n_bytes = int(np.prod(shape)) * 8
            buf = f.read(n_bytes)
            if len(buf) != n_bytes:
                raise DataError(f"{path}: truncated tensor {t['name']}")
            target.data[:] = np.frombuffer(buf, dtype="<f8").reshape(shape)
        if f.read(1):
            raise DataError(f"{path}: trailing bytes after declared tensors")
    return params, header.get("extra", {})
