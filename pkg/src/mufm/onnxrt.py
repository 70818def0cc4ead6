"""Minimal ONNX model reader and numpy executor.

Parses the protobuf wire format directly (no protobuf runtime) and
evaluates the small operator subset a convolutional backbone needs:

    Identity, Conv, Relu, MaxPool, GlobalAveragePool, ReduceMean,
    Flatten, Reshape, Transpose, Add, Sub, Mul, Div

Models are treated as immutable after load; ``run`` keeps all state in
locals so concurrent calls on one model cannot interleave.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InferenceFailure, ModelLoadFailure

# Protobuf wire types.
_WIRE_VARINT = 0
_WIRE_FIXED64 = 1
_WIRE_LEN = 2
_WIRE_FIXED32 = 5

# TensorProto.DataType values we accept.
_DTYPE_FLOAT = 1
_DTYPE_INT32 = 6
_DTYPE_INT64 = 7
_DTYPE_DOUBLE = 11

_NUMPY_DTYPES = {
    _DTYPE_FLOAT: np.dtype("<f4"),
    _DTYPE_INT32: np.dtype("<i4"),
    _DTYPE_INT64: np.dtype("<i8"),
    _DTYPE_DOUBLE: np.dtype("<f8"),
}


# ---------------------------------------------------------------------------
# Wire-level primitives


def _read_varint(buf: bytes, pos: int) -> Tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(buf):
            raise ModelLoadFailure("truncated varint")
        byte = buf[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7
        if shift > 63:
            raise ModelLoadFailure("varint exceeds 64 bits")


def _signed(value: int) -> int:
    # int64 fields carry two's-complement values in an unsigned varint.
    return value - (1 << 64) if value >= (1 << 63) else value


def _read_tag(buf: bytes, pos: int) -> Tuple[int, int, int]:
    key, pos = _read_varint(buf, pos)
    return key >> 3, key & 0x7, pos


def _read_chunk(buf: bytes, pos: int) -> Tuple[bytes, int]:
    size, pos = _read_varint(buf, pos)
    end = pos + size
    if end > len(buf):
        raise ModelLoadFailure("length-delimited field overruns buffer")
    return buf[pos:end], end


def _skip(buf: bytes, pos: int, wire: int) -> int:
    if wire == _WIRE_VARINT:
        _, pos = _read_varint(buf, pos)
        return pos
    if wire == _WIRE_FIXED64:
        return pos + 8
    if wire == _WIRE_LEN:
        _, pos = _read_chunk(buf, pos)
        return pos
    if wire == _WIRE_FIXED32:
        return pos + 4
    raise ModelLoadFailure(f"unsupported wire type {wire}")


def _repeated_varints(buf: bytes, pos: int, wire: int, out: List[int]) -> int:
    """Collect a repeated integer field; accepts packed and unpacked forms."""
    if wire == _WIRE_VARINT:
        value, pos = _read_varint(buf, pos)
        out.append(_signed(value))
        return pos
    if wire == _WIRE_LEN:
        chunk, pos = _read_chunk(buf, pos)
        sub = 0
        while sub < len(chunk):
            value, sub = _read_varint(chunk, sub)
            out.append(_signed(value))
        return pos
    raise ModelLoadFailure("integer field with non-integer wire type")


def _repeated_floats(buf: bytes, pos: int, wire: int, out: List[float]) -> int:
    if wire == _WIRE_FIXED32:
        out.append(struct.unpack_from("<f", buf, pos)[0])
        return pos + 4
    if wire == _WIRE_LEN:
        chunk, pos = _read_chunk(buf, pos)
        out.extend(np.frombuffer(chunk, dtype="<f4").tolist())
        return pos
    raise ModelLoadFailure("float field with non-float wire type")


# ---------------------------------------------------------------------------
# Message structures


@dataclass(frozen=True)
class TensorSpec:
    """Declared graph input/output: name plus shape (None = symbolic dim)."""

    name: str
    shape: Tuple[Optional[int], ...]


@dataclass
class GraphNode:
    op_type: str
    inputs: Tuple[str, ...]
    outputs: Tuple[str, ...]
    attrs: Dict[str, object] = field(default_factory=dict)
    name: str = ""


def _parse_dim(buf: bytes) -> Optional[int]:
    pos = 0
    value: Optional[int] = None
    while pos < len(buf):
        fld, wire, pos = _read_tag(buf, pos)
        if fld == 1 and wire == _WIRE_VARINT:  # dim_value
            raw, pos = _read_varint(buf, pos)
            value = _signed(raw)
        else:  # dim_param or denotation: symbolic, keep None
            pos = _skip(buf, pos, wire)
    return value


def _parse_shape(buf: bytes) -> Tuple[Optional[int], ...]:
    pos = 0
    dims: List[Optional[int]] = []
    while pos < len(buf):
        fld, wire, pos = _read_tag(buf, pos)
        if fld == 1 and wire == _WIRE_LEN:  # dim
            chunk, pos = _read_chunk(buf, pos)
            dims.append(_parse_dim(chunk))
        else:
            pos = _skip(buf, pos, wire)
    return tuple(dims)


def _parse_type(buf: bytes) -> Tuple[Optional[int], ...]:
    pos = 0
    shape: Tuple[Optional[int], ...] = ()
    while pos < len(buf):
        fld, wire, pos = _read_tag(buf, pos)
        if fld == 1 and wire == _WIRE_LEN:  # tensor_type
            chunk, pos = _read_chunk(buf, pos)
            sub = 0
            while sub < len(chunk):
                sfld, swire, sub = _read_tag(chunk, sub)
                if sfld == 2 and swire == _WIRE_LEN:  # shape
                    schunk, sub = _read_chunk(chunk, sub)
                    shape = _parse_shape(schunk)
                else:
                    sub = _skip(chunk, sub, swire)
        else:
            pos = _skip(buf, pos, wire)
    return shape


def _parse_value_info(buf: bytes) -> TensorSpec:
    pos = 0
    name = ""
    shape: Tuple[Optional[int], ...] = ()
    while pos < len(buf):
        fld, wire, pos = _read_tag(buf, pos)
        if fld == 1 and wire == _WIRE_LEN:  # name
            chunk, pos = _read_chunk(buf, pos)
            name = chunk.decode("utf-8")
        elif fld == 2 and wire == _WIRE_LEN:  # type
            chunk, pos = _read_chunk(buf, pos)
            shape = _parse_type(chunk)
        else:
            pos = _skip(buf, pos, wire)
    return TensorSpec(name=name, shape=shape)


def _parse_tensor(buf: bytes) -> Tuple[str, np.ndarray]:
    pos = 0
    dims: List[int] = []
    data_type = 0
    name = ""
    raw: Optional[bytes] = None
    floats: List[float] = []
    int32s: List[int] = []
    int64s: List[int] = []
    while pos < len(buf):
        fld, wire, pos = _read_tag(buf, pos)
        if fld == 1:  # dims
            pos = _repeated_varints(buf, pos, wire, dims)
        elif fld == 2 and wire == _WIRE_VARINT:  # data_type
            data_type, pos = _read_varint(buf, pos)
        elif fld == 4:  # float_data
            pos = _repeated_floats(buf, pos, wire, floats)
        elif fld == 5:  # int32_data
            pos = _repeated_varints(buf, pos, wire, int32s)
        elif fld == 7:  # int64_data
            pos = _repeated_varints(buf, pos, wire, int64s)
        elif fld == 8 and wire == _WIRE_LEN:  # name
            chunk, pos = _read_chunk(buf, pos)
            name = chunk.decode("utf-8")
        elif fld == 9 and wire == _WIRE_LEN:  # raw_data
            raw, pos = _read_chunk(buf, pos)
        else:
            pos = _skip(buf, pos, wire)
    if data_type not in _NUMPY_DTYPES:
        raise ModelLoadFailure(f"tensor {name!r}: unsupported data type {data_type}")
    dtype = _NUMPY_DTYPES[data_type]
    if raw is not None:
        flat = np.frombuffer(raw, dtype=dtype).copy()
    elif data_type == _DTYPE_FLOAT:
        flat = np.asarray(floats, dtype=dtype)
    elif data_type == _DTYPE_INT64:
        flat = np.asarray(int64s, dtype=dtype)
    elif data_type == _DTYPE_INT32:
        flat = np.asarray(int32s, dtype=dtype)
    else:
        raise ModelLoadFailure(f"tensor {name!r}: no payload")
    shape = tuple(dims)
    expected = int(np.prod(shape, dtype=np.int64)) if shape else 1
    if flat.size != expected:
        raise ModelLoadFailure(
            f"tensor {name!r}: payload has {flat.size} elements, dims imply {expected}"
        )
    return name, flat.reshape(shape)


def _parse_attribute(buf: bytes) -> Tuple[str, object]:
    pos = 0
    name = ""
    value: object = None
    floats: List[float] = []
    ints: List[int] = []
    while pos < len(buf):
        fld, wire, pos = _read_tag(buf, pos)
        if fld == 1 and wire == _WIRE_LEN:  # name
            chunk, pos = _read_chunk(buf, pos)
            name = chunk.decode("utf-8")
        elif fld == 2 and wire == _WIRE_FIXED32:  # f
            value = struct.unpack_from("<f", buf, pos)[0]
            pos += 4
        elif fld == 3 and wire == _WIRE_VARINT:  # i
            raw, pos = _read_varint(buf, pos)
            value = _signed(raw)
        elif fld == 4 and wire == _WIRE_LEN:  # s
            chunk, pos = _read_chunk(buf, pos)
            value = chunk.decode("utf-8")
        elif fld == 5 and wire == _WIRE_LEN:  # t
            chunk, pos = _read_chunk(buf, pos)
            value = _parse_tensor(chunk)[1]
        elif fld == 7:  # floats
            pos = _repeated_floats(buf, pos, wire, floats)
        elif fld == 8:  # ints
            pos = _repeated_varints(buf, pos, wire, ints)
        else:  # type tag, doc_string, graph attrs: not needed
            pos = _skip(buf, pos, wire)
    if floats:
        value = tuple(floats)
    elif ints:
        value = tuple(ints)
    return name, value


def _parse_node(buf: bytes) -> GraphNode:
    pos = 0
    inputs: List[str] = []
    outputs: List[str] = []
    op_type = ""
    name = ""
    attrs: Dict[str, object] = {}
    while pos < len(buf):
        fld, wire, pos = _read_tag(buf, pos)
        if fld == 1 and wire == _WIRE_LEN:  # input
            chunk, pos = _read_chunk(buf, pos)
            inputs.append(chunk.decode("utf-8"))
        elif fld == 2 and wire == _WIRE_LEN:  # output
            chunk, pos = _read_chunk(buf, pos)
            outputs.append(chunk.decode("utf-8"))
        elif fld == 3 and wire == _WIRE_LEN:  # name
            chunk, pos = _read_chunk(buf, pos)
            name = chunk.decode("utf-8")
        elif fld == 4 and wire == _WIRE_LEN:  # op_type
            chunk, pos = _read_chunk(buf, pos)
            op_type = chunk.decode("utf-8")
        elif fld == 5 and wire == _WIRE_LEN:  # attribute
            chunk, pos = _read_chunk(buf, pos)
            aname, avalue = _parse_attribute(chunk)
            attrs[aname] = avalue
        elif fld == 7 and wire == _WIRE_LEN:  # domain
            chunk, pos = _read_chunk(buf, pos)
            if chunk not in (b"", b"ai.onnx"):
                raise ModelLoadFailure(
                    f"node domain {chunk.decode('utf-8', 'replace')!r} not supported"
                )
        else:
            pos = _skip(buf, pos, wire)
    if not op_type:
        raise ModelLoadFailure("node without op_type")
    return GraphNode(
        op_type=op_type,
        inputs=tuple(inputs),
        outputs=tuple(outputs),
        attrs=attrs,
        name=name,
    )


@dataclass
class _Graph:
    name: str = ""
    nodes: List[GraphNode] = field(default_factory=list)
    initializers: Dict[str, np.ndarray] = field(default_factory=dict)
    inputs: List[TensorSpec] = field(default_factory=list)
    outputs: List[TensorSpec] = field(default_factory=list)


def _parse_graph(buf: bytes) -> _Graph:
    pos = 0
    graph = _Graph()
    while pos < len(buf):
        fld, wire, pos = _read_tag(buf, pos)
        if fld == 1 and wire == _WIRE_LEN:  # node
            chunk, pos = _read_chunk(buf, pos)
            graph.nodes.append(_parse_node(chunk))
        elif fld == 2 and wire == _WIRE_LEN:  # name
            chunk, pos = _read_chunk(buf, pos)
            graph.name = chunk.decode("utf-8")
        elif fld == 5 and wire == _WIRE_LEN:  # initializer
            chunk, pos = _read_chunk(buf, pos)
            tname, tvalue = _parse_tensor(chunk)
            graph.initializers[tname] = tvalue
        elif fld == 11 and wire == _WIRE_LEN:  # input
            chunk, pos = _read_chunk(buf, pos)
            graph.inputs.append(_parse_value_info(chunk))
        elif fld == 12 and wire == _WIRE_LEN:  # output
            chunk, pos = _read_chunk(buf, pos)
            graph.outputs.append(_parse_value_info(chunk))
        else:  # value_info, doc_string, sparse initializers
            pos = _skip(buf, pos, wire)
    return graph


class OnnxModel:
    """A parsed model: graph structure plus weight tensors, immutable."""

    def __init__(
        self,
        graph: _Graph,
        ir_version: int,
        opset_version: int,
        producer: str,
    ) -> None:
        self._graph = graph
        self.ir_version = ir_version
        self.opset_version = opset_version
        self.producer = producer
        # Declared inputs minus initializers = tensors callers must feed.
        self.inputs: Tuple[TensorSpec, ...] = tuple(
            spec for spec in graph.inputs if spec.name not in graph.initializers
        )
        self.outputs: Tuple[TensorSpec, ...] = tuple(graph.outputs)

    @property
    def graph_name(self) -> str:
        return self._graph.name

    @property
    def nodes(self) -> Tuple[GraphNode, ...]:
        return tuple(self._graph.nodes)

    @property
    def initializers(self) -> Dict[str, np.ndarray]:
        return dict(self._graph.initializers)

    def run(self, feeds: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
        """Evaluate the graph on ``feeds``; returns all declared outputs.

        Nodes are evaluated in stored order (ONNX requires topological
        order).  All intermediate state lives in this call's frame, so
        concurrent runs on one model do not interact.
        """
        values: Dict[str, np.ndarray] = dict(self._graph.initializers)
        for spec in self.inputs:
            if spec.name not in feeds:
                raise InferenceFailure(f"missing feed for input {spec.name!r}")
        for name, array in feeds.items():
            values[name] = np.asarray(array)
        for node in self._graph.nodes:
            args = []
            for tensor_name in node.inputs:
                if tensor_name == "":
                    args.append(None)  # optional input slot left empty
                    continue
                if tensor_name not in values:
                    raise InferenceFailure(
                        f"node {node.op_type}: input tensor {tensor_name!r} "
                        "not produced by any earlier node"
                    )
                args.append(values[tensor_name])
            handler = _OP_HANDLERS.get(node.op_type)
            if handler is None:
                raise InferenceFailure(f"unsupported operator {node.op_type!r}")
            try:
                results = handler(args, node.attrs)
            except InferenceFailure:
                raise
            except Exception as exc:
                raise InferenceFailure(
                    f"operator {node.op_type} failed: {exc}"
                ) from exc
            for out_name, result in zip(node.outputs, results):
                values[out_name] = result
        missing = [s.name for s in self.outputs if s.name not in values]
        if missing:
            raise InferenceFailure(f"graph outputs never produced: {missing}")
        return {s.name: values[s.name] for s in self.outputs}


def load_model(source: Union[str, Path, bytes]) -> OnnxModel:
    """Parse an ONNX file (path or raw bytes) into an executable model."""
    if isinstance(source, (str, Path)):
        try:
            data = Path(source).read_bytes()
        except OSError as exc:
            raise ModelLoadFailure(f"cannot read model file: {exc}") from exc
    else:
        data = source
    graph: Optional[_Graph] = None
    ir_version = 0
    opset_version = 0
    producer = ""
    pos = 0
    try:
        while pos < len(data):
            fld, wire, pos = _read_tag(data, pos)
            if fld == 1 and wire == _WIRE_VARINT:  # ir_version
                raw, pos = _read_varint(data, pos)
                ir_version = _signed(raw)
            elif fld == 2 and wire == _WIRE_LEN:  # producer_name
                chunk, pos = _read_chunk(data, pos)
                producer = chunk.decode("utf-8")
            elif fld == 7 and wire == _WIRE_LEN:  # graph
                chunk, pos = _read_chunk(data, pos)
                graph = _parse_graph(chunk)
            elif fld == 8 and wire == _WIRE_LEN:  # opset_import
                chunk, pos = _read_chunk(data, pos)
                sub = 0
                while sub < len(chunk):
                    sfld, swire, sub = _read_tag(chunk, sub)
                    if sfld == 2 and swire == _WIRE_VARINT:  # version
                        raw, sub = _read_varint(chunk, sub)
                        opset_version = max(opset_version, _signed(raw))
                    else:
                        sub = _skip(chunk, sub, swire)
            else:
                pos = _skip(data, pos, wire)
    except ModelLoadFailure:
        raise
    except Exception as exc:
        raise ModelLoadFailure(f"malformed model file: {exc}") from exc
    if graph is None:
        raise ModelLoadFailure("model file has no graph")
    if not graph.outputs:
        raise ModelLoadFailure("model graph declares no outputs")
    return OnnxModel(graph, ir_version, opset_version, producer)


# ---------------------------------------------------------------------------
# Operator implementations.  Inputs arrive as numpy arrays in declared
# order (None for empty optional slots); each handler returns a tuple of
# outputs.  Arithmetic stays in the incoming dtype (float32 for models).


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise InferenceFailure(message)


def _op_identity(args: Sequence, attrs: Dict) -> Tuple[np.ndarray]:
    return (np.array(args[0], copy=True),)


def _op_relu(args: Sequence, attrs: Dict) -> Tuple[np.ndarray]:
    return (np.maximum(args[0], 0),)


def _op_add(args: Sequence, attrs: Dict) -> Tuple[np.ndarray]:
    return (args[0] + args[1],)


def _op_sub(args: Sequence, attrs: Dict) -> Tuple[np.ndarray]:
    return (args[0] - args[1],)


def _op_mul(args: Sequence, attrs: Dict) -> Tuple[np.ndarray]:
    return (args[0] * args[1],)


def _op_div(args: Sequence, attrs: Dict) -> Tuple[np.ndarray]:
    return (args[0] / args[1],)


def _op_flatten(args: Sequence, attrs: Dict) -> Tuple[np.ndarray]:
    x = args[0]
    axis = int(attrs.get("axis", 1))
    if axis < 0:
        axis += x.ndim
    lead = int(np.prod(x.shape[:axis], dtype=np.int64)) if axis else 1
    return (x.reshape(lead, -1),)


def _op_reshape(args: Sequence, attrs: Dict) -> Tuple[np.ndarray]:
    x, shape = args[0], args[1]
    target = [int(v) for v in np.asarray(shape).ravel()]
    # 0 copies the input dim at that position; -1 is inferred by numpy.
    resolved = [
        x.shape[i] if v == 0 else v for i, v in enumerate(target)
    ]
    return (x.reshape(resolved),)


def _op_transpose(args: Sequence, attrs: Dict) -> Tuple[np.ndarray]:
    perm = attrs.get("perm")
    if perm is None:
        return (np.transpose(args[0]),)
    return (np.transpose(args[0], [int(p) for p in perm]),)


def _op_global_average_pool(args: Sequence, attrs: Dict) -> Tuple[np.ndarray]:
    x = args[0]
    _require(x.ndim >= 3, "GlobalAveragePool expects (N, C, spatial...)")
    axes = tuple(range(2, x.ndim))
    return (x.mean(axis=axes, keepdims=True),)


def _op_reduce_mean(args: Sequence, attrs: Dict) -> Tuple[np.ndarray]:
    x = args[0]
    if len(args) > 1 and args[1] is not None:  # opset >= 18: axes as input
        axes = tuple(int(v) for v in np.asarray(args[1]).ravel())
    else:
        raw = attrs.get("axes")
        axes = tuple(int(v) for v in raw) if raw is not None else None
    keepdims = bool(attrs.get("keepdims", 1))
    return (x.mean(axis=axes, keepdims=keepdims),)


def _conv_pads(attrs: Dict, rank: int) -> Tuple[Tuple[int, int], ...]:
    auto_pad = attrs.get("auto_pad", "NOTSET")
    _require(
        auto_pad in ("", "NOTSET"),
        f"auto_pad {auto_pad!r} not supported; use explicit pads",
    )
    pads = attrs.get("pads")
    if pads is None:
        return tuple((0, 0) for _ in range(rank))
    pads = [int(p) for p in pads]
    _require(len(pads) == 2 * rank, "pads length must be twice the spatial rank")
    return tuple((pads[i], pads[i + rank]) for i in range(rank))


def _op_conv(args: Sequence, attrs: Dict) -> Tuple[np.ndarray]:
    x, w = args[0], args[1]
    b = args[2] if len(args) > 2 else None
    _require(x.ndim == 4 and w.ndim == 4, "Conv supports 2-D only: (N,C,H,W)")
    _require(int(attrs.get("group", 1)) == 1, "grouped Conv not supported")
    dilations = tuple(int(d) for d in attrs.get("dilations", (1, 1)))
    _require(dilations == (1, 1), "dilated Conv not supported")
    strides = tuple(int(s) for s in attrs.get("strides", (1, 1)))
    (pt, pb), (pl, pr) = _conv_pads(attrs, 2)
    n, c, h, wdt = x.shape
    m, cw, kh, kw = w.shape
    _require(cw == c, f"Conv weight expects {cw} channels, input has {c}")
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    ho = (h + pt + pb - kh) // strides[0] + 1
    wo = (wdt + pl + pr - kw) // strides[1] + 1
    _require(ho > 0 and wo > 0, "Conv kernel larger than padded input")
    out = np.zeros((n, m, ho, wo), dtype=np.result_type(x, w))
    # Shift-and-add: one (M,C) x (C,Ho*Wo) product per kernel offset keeps
    # peak memory at one input-sized slice instead of a full im2col buffer.
    for ki in range(kh):
        for kj in range(kw):
            xs = xp[
                :,
                :,
                ki : ki + (ho - 1) * strides[0] + 1 : strides[0],
                kj : kj + (wo - 1) * strides[1] + 1 : strides[1],
            ]
            out += np.einsum("mc,nchw->nmhw", w[:, :, ki, kj], xs, optimize=True)
    if b is not None:
        out += b.reshape(1, m, 1, 1)
    return (out,)


def _op_maxpool(args: Sequence, attrs: Dict) -> Tuple[np.ndarray]:
    x = args[0]
    _require(x.ndim == 4, "MaxPool supports 2-D only: (N,C,H,W)")
    _require(int(attrs.get("ceil_mode", 0)) == 0, "ceil_mode not supported")
    kernel = tuple(int(k) for k in attrs["kernel_shape"])
    strides = tuple(int(s) for s in attrs.get("strides", kernel))
    (pt, pb), (pl, pr) = _conv_pads(attrs, 2)
    n, c, h, w = x.shape
    kh, kw = kernel
    if any((pt, pb, pl, pr)):
        fill = np.finfo(x.dtype).min if np.issubdtype(x.dtype, np.floating) else np.iinfo(x.dtype).min
        xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)), constant_values=fill)
    else:
        xp = x
    ho = (h + pt + pb - kh) // strides[0] + 1
    wo = (w + pl + pr - kw) // strides[1] + 1
    _require(ho > 0 and wo > 0, "MaxPool window larger than padded input")
    out = np.full((n, c, ho, wo), -np.inf, dtype=x.dtype)
    for ki in range(kh):
        for kj in range(kw):
            xs = xp[
                :,
                :,
                ki : ki + (ho - 1) * strides[0] + 1 : strides[0],
                kj : kj + (wo - 1) * strides[1] + 1 : strides[1],
            ]
            np.maximum(out, xs, out=out)
    return (out,)


_OP_HANDLERS = {
    "Identity": _op_identity,
    "Relu": _op_relu,
    "Add": _op_add,
    "Sub": _op_sub,
    "Mul": _op_mul,
    "Div": _op_div,
    "Flatten": _op_flatten,
    "Reshape": _op_reshape,
    "Transpose": _op_transpose,
    "GlobalAveragePool": _op_global_average_pool,
    "ReduceMean": _op_reduce_mean,
    "Conv": _op_conv,
    "MaxPool": _op_maxpool,
}

SUPPORTED_OPS = frozenset(_OP_HANDLERS)
