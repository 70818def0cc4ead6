"""Serializing the trained backbone for the matching engine.

The exported graph is self-contained: a [0, 1] RGB tensor goes in,
channel normalization happens inside, and a (1, 512) pooled feature
vector comes out. The classification head is deliberately left behind;
embeddings must not depend on how the head was trained.
"""

from __future__ import annotations

from pathlib import Path
from typing import List, Union

import numpy as np
from torch import nn

from . import onnx_writer
from .dataset import INPUT_SIZE
from .errors import ExportFailure
from .model import BACKBONE_DIM, IMAGENET_MEAN, IMAGENET_STD, TransferModel

INPUT_NAME = "image"
OUTPUT_NAME = "embedding"


def _emit(model: TransferModel) -> bytes:
    nodes: List[bytes] = []
    initializers: List[bytes] = []

    mean = np.asarray(IMAGENET_MEAN, dtype=np.float32).reshape(1, 3, 1, 1)
    std = np.asarray(IMAGENET_STD, dtype=np.float32).reshape(1, 3, 1, 1)
    initializers.append(onnx_writer.float_tensor("norm_mean", mean))
    initializers.append(onnx_writer.float_tensor("norm_std", std))
    nodes.append(onnx_writer.node("Sub", [INPUT_NAME, "norm_mean"], ["centered"]))
    nodes.append(onnx_writer.node("Div", ["centered", "norm_std"], ["normalized"]))

    current = "normalized"
    conv_index = 0
    channels = 3
    for module in model.features:
        if isinstance(module, nn.Conv2d):
            conv_index += 1
            weight = module.weight.detach().cpu().numpy()
            bias = module.bias.detach().cpu().numpy()
            kh, kw = module.kernel_size
            ph, pw = module.padding
            sh, sw = module.stride
            w_name, b_name = f"conv{conv_index}_w", f"conv{conv_index}_b"
            initializers.append(onnx_writer.float_tensor(w_name, weight))
            initializers.append(onnx_writer.float_tensor(b_name, bias))
            out_name = f"conv{conv_index}_out"
            nodes.append(
                onnx_writer.node(
                    "Conv",
                    [current, w_name, b_name],
                    [out_name],
                    attrs={
                        "kernel_shape": (kh, kw),
                        "pads": (ph, pw, ph, pw),
                        "strides": (sh, sw),
                    },
                )
            )
            current = out_name
            channels = module.out_channels
        elif isinstance(module, nn.ReLU):
            out_name = f"relu{conv_index}_out"
            nodes.append(onnx_writer.node("Relu", [current], [out_name]))
            current = out_name
        elif isinstance(module, nn.MaxPool2d):
            out_name = f"pool_after_conv{conv_index}"
            k = module.kernel_size
            s = module.stride
            kh, kw = (k, k) if isinstance(k, int) else k
            sh, sw = (s, s) if isinstance(s, int) else s
            nodes.append(
                onnx_writer.node(
                    "MaxPool",
                    [current],
                    [out_name],
                    attrs={"kernel_shape": (kh, kw), "strides": (sh, sw)},
                )
            )
            current = out_name
        else:
            raise ExportFailure(
                f"base contains {type(module).__name__}, which the "
                "interchange graph does not represent"
            )
    if channels != BACKBONE_DIM:
        raise ExportFailure(
            f"base ends at {channels} channels; the embedding contract "
            f"requires {BACKBONE_DIM}"
        )

    nodes.append(onnx_writer.node("GlobalAveragePool", [current], ["pooled"]))
    nodes.append(onnx_writer.node("Flatten", ["pooled"], [OUTPUT_NAME], attrs={"axis": 1}))

    return onnx_writer.model(
        nodes=nodes,
        inputs=[onnx_writer.value_info(INPUT_NAME, (1, 3, INPUT_SIZE, INPUT_SIZE))],
        outputs=[onnx_writer.value_info(OUTPUT_NAME, (1, BACKBONE_DIM))],
        initializers=initializers,
        graph_name="face_backbone",
        producer="model-forge",
    )


def export_backbone(model: TransferModel, path: Union[str, Path]) -> Path:
    """Write the backbone graph; byte-deterministic for fixed weights."""
    payload = _emit(model)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_bytes(payload)
        tmp.replace(path)
    except OSError as exc:
        raise ExportFailure(f"cannot write model file {path}: {exc}") from exc
    finally:
        tmp.unlink(missing_ok=True)
    return path
