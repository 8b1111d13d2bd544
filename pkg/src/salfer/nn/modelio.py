"""Single-file model archive.

Layout::

    b"SALFER-MODEL\\x00"  magic
    uint16 LE            format version
    uint32 LE            header length
    header               UTF-8 JSON: class order, input mean, backbone config,
                         dropout, config echo, tensor table (name, shape)
    payload              tensors in table order, little-endian float32
"""
import json
import struct
from pathlib import Path

import numpy as np

from .model import BACKBONES, AlexNetBackbone, ClassifierModel, ReferenceBackbone

MAGIC = b"SALFER-MODEL\x00"
VERSION = 1


class ModelFormatError(ValueError):
    pass


def save_model(model, path, config=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # backbone tensors are only stored for trainable-by-design backbones
    tensors = dict(model.head)
    if isinstance(model.backbone, ReferenceBackbone):
        tensors = {**model.backbone.params, **tensors}
    header = {
        "class_order": list(model.class_order),
        "input_mean": model.input_mean,
        "dropout_p": model.dropout_p,
        "backbone": model.backbone.config(),
        "trainable": sorted(model.trainable),
        "config": config or {},
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in tensors.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(blob)))
        fh.write(blob)
        for v in tensors.values():
            fh.write(np.ascontiguousarray(v, dtype="<f4").tobytes())


def read_header(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ModelFormatError(f"{path}: not a model file (bad magic)")
        version, n = struct.unpack("<HI", fh.read(6))
        if version != VERSION:
            raise ModelFormatError(f"{path}: unsupported model format version {version}")
        header = json.loads(fh.read(n).decode("utf-8"))
        return header, fh.read()


def load_model(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"model file not found: {path}")
    header, payload = read_header(path)
    tensors = {}
    off = 0
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = 4 * count
        if off + nbytes > len(payload):
            raise ModelFormatError(f"{path}: truncated tensor {entry['name']}")
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=off)
        tensors[entry["name"]] = arr.reshape(entry["shape"]).astype(np.float64)
        off += nbytes
    if off != len(payload):
        raise ModelFormatError(f"{path}: {len(payload) - off} trailing bytes")

    bb = header["backbone"]
    if bb["id"] not in BACKBONES:
        raise ModelFormatError(f"{path}: unknown backbone {bb['id']!r}")
    if bb["id"] == "reference":
        backbone = ReferenceBackbone({k: v for k, v in tensors.items() if not k.startswith("head.")})
    else:
        backbone = AlexNetBackbone(bb.get("weights"))
    model = ClassifierModel(backbone, dropout_p=header["dropout_p"], input_mean=header["input_mean"])
    model.class_order = tuple(header["class_order"])
    model.head = {"head.weight": tensors["head.weight"], "head.bias": tensors["head.bias"]}
    model.trainable = set(header.get("trainable", model.trainable))
    model.config = header.get("config", {})
    return model
