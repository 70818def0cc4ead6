"""The transfer model: frozen VGG-16 convolutional base plus a dense head.

The base is the standard 13-conv/5-pool stack ending in 512 channels;
global average pooling turns its feature map into a 512-vector, and the
head classifies masked vs unmasked on top. Matching never sees the head:
only the base (through pooling) is exported.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import torch
from torch import nn

from .dataset import AugmentRanges
from .errors import WeightsUnavailable

#: Channel widths of the convolutional stack; "M" marks a 2x2 max pool.
#: 13 convolution layers in five stages, the last stage 512 wide.
VGG16_LAYOUT = (64, 64, "M", 128, 128, "M", 256, 256, 256, "M",
                512, 512, 512, "M", 512, 512, 512, "M")

#: Embedding width the base produces after global average pooling.
BACKBONE_DIM = 512

#: Per-channel normalization the backbone expects on [0, 1] RGB input.
#: Training applies it before the base; export bakes it into the graph,
#: so the matching engine feeds plain [0, 1] tensors.
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

#: frozen_through value meaning the whole convolutional base.
FREEZE_BASE = "base"


@dataclass(frozen=True)
class TrainSpec:
    """Everything a training run depends on, in one value.

    frozen_through: FREEZE_BASE freezes the entire convolutional base
    (the reproducible default), None freezes nothing, and an integer n
    freezes base modules [0, n) so upper conv layers can fine-tune.
    """

    epochs: int = 20
    frozen_through: Union[str, int, None] = FREEZE_BASE
    head: Tuple[int, ...] = (256, 2)
    augmentation: AugmentRanges = field(default_factory=AugmentRanges)
    seed: int = 42

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not self.head:
            raise ValueError("head needs at least one dense layer for classification")
        if any(w < 1 for w in self.head):
            raise ValueError(f"head widths must be positive, got {self.head}")
        ok = (
            self.frozen_through is None
            or self.frozen_through == FREEZE_BASE
            or (isinstance(self.frozen_through, int) and self.frozen_through >= 0)
        )
        if not ok:
            raise ValueError(
                f"frozen_through must be {FREEZE_BASE!r}, None, or a module index; "
                f"got {self.frozen_through!r}"
            )


def _conv_base() -> nn.Sequential:
    """Build the convolutional stack with its standard initialization.

    Module order matches the torchvision VGG-16 feature extractor
    exactly, so pretrained weights load by index.
    """
    layers = []
    channels = 3
    for entry in VGG16_LAYOUT:
        if entry == "M":
            layers.append(nn.MaxPool2d(kernel_size=2, stride=2))
            continue
        conv = nn.Conv2d(channels, int(entry), kernel_size=3, padding=1)
        nn.init.kaiming_normal_(conv.weight, mode="fan_out", nonlinearity="relu")
        nn.init.zeros_(conv.bias)
        layers.append(conv)
        layers.append(nn.ReLU(inplace=True))
        channels = int(entry)
    return nn.Sequential(*layers)


def _load_pretrained_features() -> nn.Sequential:
    """Fetch the pretrained convolutional base; isolated for patching."""
    from torchvision.models import VGG16_Weights, vgg16

    return vgg16(weights=VGG16_Weights.IMAGENET1K_V1).features


def _head(widths: Tuple[int, ...]) -> nn.Sequential:
    layers = []
    fan_in = BACKBONE_DIM
    for width in widths[:-1]:
        layers.append(nn.Linear(fan_in, width))
        layers.append(nn.ReLU(inplace=True))
        fan_in = width
    layers.append(nn.Linear(fan_in, widths[-1]))  # logits; loss applies softmax
    return nn.Sequential(*layers)


class TransferModel(nn.Module):
    """Conv base -> global average pool -> dense head."""

    def __init__(self, features: nn.Sequential, head_widths: Tuple[int, ...]) -> None:
        super().__init__()
        self.features = features
        self.head = _head(head_widths)

    def forward_features(self, x: torch.Tensor) -> torch.Tensor:
        """(N, 3, H, W) -> (N, 512) pooled base features."""
        return self.features(x).mean(dim=(2, 3))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.forward_features(x))

    @property
    def base_fully_frozen(self) -> bool:
        return all(not p.requires_grad for p in self.features.parameters())


def _apply_freeze(model: TransferModel, frozen_through: Union[str, int, None]) -> None:
    if frozen_through is None:
        return
    if frozen_through == FREEZE_BASE:
        for param in model.features.parameters():
            param.requires_grad = False
        return
    for module in list(model.features)[:frozen_through]:
        for param in module.parameters():
            param.requires_grad = False


def build_transfer_model(spec: TrainSpec, *, pretrained: bool = True) -> TransferModel:
    """Assemble the model with the freeze policy in ``spec`` applied.

    pretrained=False draws the standard random initialization from the
    spec seed instead; the offline path for environments that cannot
    fetch weights, and the one the test suite exercises.
    """
    torch.manual_seed(spec.seed)
    if pretrained:
        try:
            features = _load_pretrained_features()
        except Exception as exc:
            raise WeightsUnavailable(
                "pretrained backbone weights could not be loaded "
                f"({exc}); pass pretrained=False to train from random "
                "initialization"
            ) from exc
    else:
        features = _conv_base()
    model = TransferModel(features, spec.head)
    _apply_freeze(model, spec.frozen_through)
    return model


def trainable_parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters() if p.requires_grad)


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
