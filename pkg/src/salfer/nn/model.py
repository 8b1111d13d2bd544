"""The 7-way expression classifier: a backbone, dropout, and a linear softmax head."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..dataset import CLASS_NAMES
from . import layers

N_CLASSES = 7
INPUT_SIZE = 256


class BackboneError(Exception):
    pass


def he_normal(rng, shape, fan_in):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


class ReferenceBackbone:
    """Small CNN for 256x256x1 faces.

    conv 8@7x7/4 (pad 3) -> ReLU -> maxpool 2 -> conv 16@5x5 (pad 2) -> ReLU
    -> maxpool 2 -> flatten (4096) -> fc 64 -> ReLU.
    """

    id = "reference"
    uses_mean = True
    supports_grad = True
    n_features = 64
    SHAPES = {
        "conv1.weight": (8, 1, 7, 7),
        "conv1.bias": (8,),
        "conv2.weight": (16, 8, 5, 5),
        "conv2.bias": (16,),
        "fc1.weight": (16 * 16 * 16, 64),
        "fc1.bias": (64,),
    }

    def __init__(self, params=None, seed=0):
        if params is None:
            rng = np.random.default_rng(seed)
            params = {}
            for name, shape in self.SHAPES.items():
                if name.endswith(".bias"):
                    params[name] = np.zeros(shape)
                else:
                    fan_in = int(np.prod(shape[1:])) if name.startswith("conv") else shape[0]
                    params[name] = he_normal(rng, shape, fan_in)
        missing = set(self.SHAPES) - set(params)
        if missing:
            raise BackboneError(f"reference backbone is missing tensors: {sorted(missing)}")
        for name, shape in self.SHAPES.items():
            if tuple(params[name].shape) != shape:
                raise BackboneError(f"{name}: expected shape {shape}, got {params[name].shape}")
        self.params = {k: np.asarray(params[k], dtype=np.float64) for k in self.SHAPES}
        self._cache = None

    def config(self):
        return {"id": self.id}

    def forward(self, x, keep_cache=False):
        p = self.params
        if x.ndim == 3:
            x = x[:, None]
        if x.shape[1:] != (1, INPUT_SIZE, INPUT_SIZE):
            raise ValueError(f"reference backbone expects (N, 1, 256, 256) input, got {x.shape}")
        c1, k1 = layers.conv_forward(x, p["conv1.weight"], p["conv1.bias"], stride=4, pad=3)
        r1 = layers.relu_forward(c1)
        p1, i1 = layers.maxpool_forward(r1)
        c2, k2 = layers.conv_forward(p1, p["conv2.weight"], p["conv2.bias"], stride=1, pad=2)
        r2 = layers.relu_forward(c2)
        p2, i2 = layers.maxpool_forward(r2)
        flat = p2.reshape(p2.shape[0], -1)
        f1 = layers.relu_forward(layers.affine_forward(flat, p["fc1.weight"], p["fc1.bias"]))
        self._cache = (k1, r1, i1, k2, r2, i2, p2.shape, flat, f1) if keep_cache else None
        return f1

    def backward(self, dfeat):
        if self._cache is None:
            raise RuntimeError("backbone backward without a cached training forward pass")
        k1, r1, i1, k2, r2, i2, p2_shape, flat, f1 = self._cache
        p = self.params
        g = {}
        d = layers.relu_backward(dfeat, f1)
        dflat, g["fc1.weight"], g["fc1.bias"] = layers.affine_backward(d, flat, p["fc1.weight"])
        d = layers.maxpool_backward(dflat.reshape(p2_shape), i2, r2.shape)
        d = layers.relu_backward(d, r2)
        d, g["conv2.weight"], g["conv2.bias"] = layers.conv_backward(d, k2, p["conv2.weight"])
        d = layers.maxpool_backward(d, i1, r1.shape)
        d = layers.relu_backward(d, r1)
        _, g["conv1.weight"], g["conv1.bias"] = layers.conv_backward(d, k1, p["conv1.weight"], need_dx=False)
        return g


class AlexNetBackbone:
    """Frozen ImageNet AlexNet (torchvision layout) used as a 4096-d feature extractor.

    Weights are never downloaded; pass the path of a torchvision ``alexnet``
    state dict (``alexnet-owt-7be5be79.pth``).
    """

    id = "alexnet"
    uses_mean = False
    supports_grad = False
    n_features = 4096

    def __init__(self, weights_path):
        if weights_path is None or not Path(weights_path).is_file():
            raise BackboneError(
                f"AlexNet weights not found at {weights_path!r}. Obtain the torchvision ImageNet "
                "checkpoint (alexnet-owt-7be5be79.pth) yourself and pass its path with --weights; "
                "it is never downloaded automatically.")
        try:
            import torch
            import torchvision
        except ImportError as exc:
            raise BackboneError("the alexnet backbone needs torch and torchvision installed") from exc
        net = torchvision.models.alexnet(weights=None)
        net.load_state_dict(torch.load(weights_path, map_location="cpu"))
        net.eval()
        self._torch = torch
        self._net = net
        self.weights_path = str(weights_path)
        self.params = {}

    def config(self):
        return {"id": self.id, "weights": self.weights_path}

    def forward(self, x, keep_cache=False):
        torch = self._torch
        if x.ndim == 4:
            x = x[:, 0]
        mean = np.array([0.485, 0.456, 0.406])[None, :, None, None]
        std = np.array([0.229, 0.224, 0.225])[None, :, None, None]
        off = (x.shape[-1] - 224) // 2
        x = x[:, off : off + 224, off : off + 224]
        x3 = (np.repeat(x[:, None], 3, axis=1) - mean) / std
        with torch.no_grad():
            t = torch.from_numpy(x3.astype(np.float32))
            f = self._net.avgpool(self._net.features(t)).flatten(1)
            # classifier[:6] = dropout, fc6, relu, dropout, fc7, relu; dropouts inactive in eval mode
            f = self._net.classifier[:6](f)
        return f.numpy().astype(np.float64)

    def backward(self, dfeat):
        raise BackboneError("the alexnet backbone is frozen-feature-only")


BACKBONES = {"reference": ReferenceBackbone, "alexnet": AlexNetBackbone}


def load_backbone(adapter_id="reference", weights_path=None, seed=0):
    """Build a backbone. ``reference`` without weights is He-initialized from ``seed``."""
    if adapter_id not in BACKBONES:
        raise BackboneError(f"unknown backbone {adapter_id!r}; known: {', '.join(sorted(BACKBONES))}")
    if adapter_id == "reference":
        if weights_path is None:
            return ReferenceBackbone(seed=seed)
        from .modelio import load_model

        path = Path(weights_path)
        if not path.is_file():
            raise BackboneError(f"reference weights file not found: {path}")
        return load_model(path).backbone
    return AlexNetBackbone(weights_path)


class ClassifierModel:
    """backbone -> dropout -> linear head (7 logits).

    ``forward`` in train mode draws the dropout mask from the supplied generator
    and caches what ``backward`` needs.
    """

    def __init__(self, backbone=None, dropout_p=0.5, seed=0, head_init="he", input_mean=0.0):
        if not 0.0 <= dropout_p < 1.0:
            raise ValueError(f"dropout_p must lie in [0, 1), got {dropout_p}")
        self.backbone = backbone if backbone is not None else ReferenceBackbone(seed=seed)
        self.dropout_p = float(dropout_p)
        self.class_order = CLASS_NAMES
        self.input_mean = float(input_mean)
        nf = self.backbone.n_features
        if head_init == "zeros":
            w = np.zeros((nf, N_CLASSES))
        else:
            w = he_normal(np.random.default_rng([seed, 1]), (nf, N_CLASSES), nf)
        self.head = {"head.weight": w, "head.bias": np.zeros(N_CLASSES)}
        self.trainable = set(self.head)
        if self.backbone.supports_grad:
            self.trainable |= set(self.backbone.params)
        self._cache = None

    @property
    def params(self):
        return {**self.backbone.params, **self.head}

    def set_param(self, name, value):
        target = self.head if name in self.head else self.backbone.params
        if name not in target:
            raise KeyError(name)
        target[name][...] = value

    def freeze(self, which="backbone"):
        """Mark parameters non-trainable: ``"backbone"``, ``"all"``, or an iterable of name prefixes."""
        if which == "backbone":
            names = set(self.backbone.params)
        elif which == "all":
            names = set(self.params)
        else:
            prefixes = tuple(which)
            names = {n for n in self.params if n.startswith(prefixes)}
        self.trainable -= names

    def unfreeze(self, which="backbone"):
        names = set(self.backbone.params) if which == "backbone" else set(self.params)
        if names & set(self.backbone.params) and not self.backbone.supports_grad:
            raise BackboneError(f"backbone {self.backbone.id!r} cannot be trained")
        self.trainable |= names

    def n_parameters(self):
        return int(sum(v.size for v in self.params.values()))

    def _prepare(self, images):
        x = np.asarray(images)
        if x.ndim == 2:
            x = x[None]
        if x.ndim == 4 and x.shape[1] == 1:
            x = x[:, 0]
        if x.ndim != 3 or x.shape[1:] != (INPUT_SIZE, INPUT_SIZE):
            raise ValueError(f"expected a batch of 256x256 gray images, got shape {np.shape(images)}")
        x = x.astype(np.float64) / 255.0
        if self.backbone.uses_mean:
            x = x - self.input_mean
        return x

    def forward(self, images, mode="eval", rng=None):
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        train = mode == "train"
        x = self._prepare(images)
        need_backbone_grad = train and bool(self.trainable & set(self.backbone.params))
        feat = self.backbone.forward(x, keep_cache=need_backbone_grad)
        mask = None
        if train and self.dropout_p > 0.0:
            if rng is None:
                raise ValueError("train-mode forward needs a random generator for dropout")
            keep = 1.0 - self.dropout_p
            mask = (rng.random(feat.shape) < keep) / keep
            dropped = feat * mask
        else:
            dropped = feat
        logits = layers.affine_forward(dropped, self.head["head.weight"], self.head["head.bias"])
        self._cache = (logits, dropped, mask, need_backbone_grad) if train else None
        return logits

    def predict_proba(self, images, batch_size=64):
        out = []
        for i in range(0, len(images), batch_size):
            out.append(layers.softmax(self.forward(images[i : i + batch_size], "eval")))
        return np.concatenate(out) if out else np.zeros((0, N_CLASSES))

    def backward(self, labels):
        """Mean cross-entropy of the last train-mode forward pass and gradients of every trainable parameter."""
        if self._cache is None:
            raise RuntimeError("backward needs a preceding train-mode forward pass")
        logits, dropped, mask, need_backbone_grad = self._cache
        labels = np.asarray(labels, dtype=np.intp)
        n = labels.shape[0]
        probs = layers.softmax(logits)
        loss = float(layers.cross_entropy(probs, labels).mean())
        dlogits = probs.copy()
        dlogits[np.arange(n), labels] -= 1.0
        dlogits /= n
        dfeat, dw, db = layers.affine_backward(dlogits, dropped, self.head["head.weight"])
        grads = {"head.weight": dw, "head.bias": db}
        if need_backbone_grad:
            if mask is not None:
                dfeat = dfeat * mask
            grads.update(self.backbone.backward(dfeat))
        return loss, {k: v for k, v in grads.items() if k in self.trainable}

    def copy(self):
        import copy

        other = copy.copy(self)
        other.head = {k: v.copy() for k, v in self.head.items()}
        if self.backbone.params:
            other.backbone = copy.copy(self.backbone)
            other.backbone.params = {k: v.copy() for k, v in self.backbone.params.items()}
            other.backbone._cache = None
        other.trainable = set(self.trainable)
        other._cache = None
        return other
