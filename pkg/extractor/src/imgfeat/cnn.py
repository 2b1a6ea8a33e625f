"""Penultimate-layer image embeddings from a classification backbone.

Pretrained weights are used when they can be fetched; otherwise the same
architecture is initialized from a fixed seed so extraction stays fully
deterministic, and a warning records the substitution.
"""

from __future__ import annotations

import warnings

import numpy as np
import torch
from torchvision import models
from torchvision.transforms import functional as tvf

_IMAGENET_MEAN = [0.485, 0.456, 0.406]
_IMAGENET_STD = [0.229, 0.224, 0.225]

BACKBONES = {
    "resnet18": (models.resnet18, 512),
    "resnet34": (models.resnet34, 512),
    "squeezenet1_0": (models.squeezenet1_0, 512),
}


class CnnBackbone:
    """Frozen feature extractor: resized RGB in, pooled activations out."""

    def __init__(self, name: str = "resnet18", seed: int = 0):
        if name not in BACKBONES:
            raise ValueError(
                f"unknown backbone {name!r}; choose from {sorted(BACKBONES)}"
            )
        ctor, dim = BACKBONES[name]
        self.name = name
        self.dim = dim
        self.pretrained = True
        try:
            net = ctor(weights="DEFAULT")
        except Exception as exc:
            warnings.warn(
                f"pretrained weights for {name} unavailable ({exc}); "
                f"falling back to a seed-{seed} initialized backbone",
                stacklevel=2,
            )
            torch.manual_seed(seed)
            net = ctor(weights=None)
            self.pretrained = False
        net.eval()
        if name.startswith("resnet"):
            modules = list(net.children())[:-1]  # drop the classifier head
            self.net = torch.nn.Sequential(*modules)
        else:  # squeezenet: features + global pool
            self.net = torch.nn.Sequential(
                net.features, torch.nn.AdaptiveAvgPool2d(1)
            )
        for param in self.net.parameters():
            param.requires_grad_(False)

    def embed(self, rgb) -> np.ndarray:
        """Vector for one float RGB array in [0, 1] of shape (H, W, 3)."""
        tensor = torch.from_numpy(np.ascontiguousarray(rgb)).float()
        tensor = tensor.permute(2, 0, 1).unsqueeze(0)
        tensor = tvf.resize(tensor, [224, 224], antialias=True)
        tensor = tvf.normalize(tensor, _IMAGENET_MEAN, _IMAGENET_STD)
        with torch.no_grad():
            out = self.net(tensor)
        vec = out.reshape(-1).numpy().astype(np.float64)
        if vec.shape[0] != self.dim:
            raise RuntimeError(
                f"backbone {self.name} produced {vec.shape[0]} dims, "
                f"expected {self.dim}"
            )
        return vec
