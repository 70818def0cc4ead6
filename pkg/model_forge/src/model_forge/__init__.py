"""Transfer-model trainer and backbone exporter for the matching engine."""

from .dataset import CLASS_NAMES, AugmentRanges, Item, scan
from .errors import DatasetEmpty, ExportFailure, ForgeError, WeightsUnavailable
from .export import export_backbone
from .model import (
    BACKBONE_DIM,
    FREEZE_BASE,
    TrainSpec,
    TransferModel,
    build_transfer_model,
    parameter_count,
    trainable_parameter_count,
)
from .training import CURVE_HEADER, EpochMetrics, train, write_curve_csv

__version__ = "0.1.0"

__all__ = [
    "AugmentRanges",
    "BACKBONE_DIM",
    "CLASS_NAMES",
    "CURVE_HEADER",
    "DatasetEmpty",
    "EpochMetrics",
    "ExportFailure",
    "ForgeError",
    "FREEZE_BASE",
    "Item",
    "TrainSpec",
    "TransferModel",
    "WeightsUnavailable",
    "build_transfer_model",
    "export_backbone",
    "parameter_count",
    "scan",
    "train",
    "trainable_parameter_count",
    "write_curve_csv",
]
