from .layers import cross_entropy, softmax
from .model import (
    BACKBONES,
    AlexNetBackbone,
    BackboneError,
    ClassifierModel,
    ReferenceBackbone,
    load_backbone,
)
from .modelio import ModelFormatError, load_model, save_model

__all__ = [
    "BACKBONES", "AlexNetBackbone", "BackboneError", "ClassifierModel", "ModelFormatError",
    "ReferenceBackbone", "cross_entropy", "load_backbone", "load_model", "save_model", "softmax",
]
