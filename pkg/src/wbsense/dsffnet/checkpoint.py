"""Binary checkpoint format.

Layout (all multi-byte values little-endian):
    bytes 0-3   magic "DSFF"
    uint32      format version (1)
    uint32      manifest length in bytes
    ...         manifest JSON (topology, hyperparameters, seeds)
    float32[]   parameters in manifest["param_order"], then BN running
                statistics in manifest["buffer_order"]
    uint8       1 if a threshold vector follows, else 0
    float64     target_pf            (only when the flag is 1)
    float64[N]  per-subband thresholds
"""

import json
import struct

import numpy as np

from ..errors import InvalidInputError
from .model import DsffModel, ModelConfig

MAGIC = b"DSFF"
VERSION = 1


def save_checkpoint(model: DsffModel, path: str, *, train_settings=None,
                    thresholds=None, target_pf=None) -> None:
    params = model.parameters()
    buffers = []
    for prefix, layer in model._conv_blocks():
        for bname, arr in layer.buffers().items():
            buffers.append((f"{prefix}.{bname}", arr))

    manifest = {
        "model": model.config.to_dict(),
        "param_order": [name for name, _ in params],
        "param_shapes": [list(arr.shape) for _, arr in params],
        "buffer_order": [name for name, _ in buffers],
        "buffer_shapes": [list(arr.shape) for _, arr in buffers],
        "train_settings": train_settings,
    }
    blob = json.dumps(manifest, sort_keys=True).encode()

    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(blob)))
        f.write(blob)
        for _, arr in params + buffers:
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        if thresholds is not None:
            f.write(struct.pack("<B", 1))
            f.write(struct.pack("<d", float(target_pf)))
            f.write(np.ascontiguousarray(thresholds, dtype="<f8").tobytes())
        else:
            f.write(struct.pack("<B", 0))


def load_checkpoint(path: str):
    """Returns (model, manifest, thresholds_or_None, target_pf_or_None)."""
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise InvalidInputError(f"{path} is not a DSFF checkpoint")
        version, blob_len = struct.unpack("<II", f.read(8))
        if version != VERSION:
            raise InvalidInputError(f"unsupported checkpoint version {version}")
        manifest = json.loads(f.read(blob_len).decode())
        model = DsffModel(ModelConfig.from_dict(manifest["model"]))

        state = {}
        names = manifest["param_order"] + manifest["buffer_order"]
        shapes = manifest["param_shapes"] + manifest["buffer_shapes"]
        for name, shape in zip(names, shapes):
            count = int(np.prod(shape))
            arr = np.frombuffer(f.read(4 * count), dtype="<f4").reshape(shape)
            state[name] = arr.astype(np.float32)
        model.load_state(state)

        thresholds = None
        target_pf = None
        flag = f.read(1)
        if flag and flag[0] == 1:
            target_pf = struct.unpack("<d", f.read(8))[0]
            n = model.config.num_subbands
            thresholds = np.frombuffer(f.read(8 * n), dtype="<f8").copy()
    return model, manifest, thresholds, target_pf
