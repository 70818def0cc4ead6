"""Minimal interchange-format writer: enough protobuf to serialize one
feed-forward graph (nodes, float32 initializers, typed inputs/outputs).

Only non-negative integers occur in the messages built here (dims,
attribute values, enum tags), so plain unsigned varints suffice.
"""

from __future__ import annotations

from typing import Dict, Sequence, Tuple

import numpy as np

_WIRE_VARINT = 0
_WIRE_LEN = 2

_FLOAT = 1  # tensor element type

# AttributeProto.type values
_ATTR_INT = 2
_ATTR_INTS = 7


def _varint(value: int) -> bytes:
    if value < 0:
        raise ValueError(f"negative varint {value}")
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _tag(field: int, wire: int) -> bytes:
    return _varint((field << 3) | wire)


def _uint(field: int, value: int) -> bytes:
    return _tag(field, _WIRE_VARINT) + _varint(value)


def _chunk(field: int, payload: bytes) -> bytes:
    return _tag(field, _WIRE_LEN) + _varint(len(payload)) + payload


def _string(field: int, text: str) -> bytes:
    return _chunk(field, text.encode("utf-8"))


def float_tensor(name: str, array: np.ndarray) -> bytes:
    """TensorProto: float32 payload as little-endian raw bytes."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    parts = [_uint(1, int(d)) for d in arr.shape]
    parts.append(_uint(2, _FLOAT))
    parts.append(_string(8, name))
    parts.append(_chunk(9, arr.tobytes()))
    return b"".join(parts)


def _attribute(name: str, value) -> bytes:
    parts = [_string(1, name)]
    if isinstance(value, int):
        parts.append(_uint(3, value))
        parts.append(_uint(20, _ATTR_INT))
    elif isinstance(value, (tuple, list)):
        parts.extend(_uint(8, int(v)) for v in value)
        parts.append(_uint(20, _ATTR_INTS))
    else:
        raise ValueError(f"attribute {name!r}: unsupported value {value!r}")
    return b"".join(parts)


def node(
    op_type: str,
    inputs: Sequence[str],
    outputs: Sequence[str],
    attrs: Dict[str, object] | None = None,
    name: str = "",
) -> bytes:
    """NodeProto for the default operator domain."""
    parts = [_string(1, i) for i in inputs]
    parts.extend(_string(2, o) for o in outputs)
    if name:
        parts.append(_string(3, name))
    parts.append(_string(4, op_type))
    for attr_name, attr_value in (attrs or {}).items():
        parts.append(_chunk(5, _attribute(attr_name, attr_value)))
    return b"".join(parts)


def value_info(name: str, shape: Sequence[int]) -> bytes:
    """ValueInfoProto: float32 tensor with fully known dims."""
    dims = b"".join(_chunk(1, _uint(1, int(d))) for d in shape)
    tensor_type = _uint(1, _FLOAT) + _chunk(2, dims)
    return _string(1, name) + _chunk(2, _chunk(1, tensor_type))


def model(
    nodes: Sequence[bytes],
    inputs: Sequence[bytes],
    outputs: Sequence[bytes],
    initializers: Sequence[bytes],
    graph_name: str,
    producer: str,
    ir_version: int = 8,
    opset: int = 13,
) -> bytes:
    """Assemble the full serialized model file."""
    graph_parts = [_chunk(1, n) for n in nodes]
    graph_parts.append(_string(2, graph_name))
    graph_parts.extend(_chunk(5, t) for t in initializers)
    graph_parts.extend(_chunk(11, v) for v in inputs)
    graph_parts.extend(_chunk(12, v) for v in outputs)
    opset_import = _string(1, "") + _uint(2, opset)
    return b"".join(
        [
            _uint(1, ir_version),
            _string(2, producer),
            _chunk(7, b"".join(graph_parts)),
            _chunk(8, opset_import),
        ]
    )
