"""Feature extraction: preprocessed tensors in, unit embeddings out.

Two sources: a backbone model file run through the bundled runtime, or a
precomputed embedding file for model-free operation and testing.  Every
embedding leaving this module is L2-normalized, which makes cosine
similarity a plain dot product downstream.

Embedding files come in two interchangeable layouts, detected by the
first byte:

* binary — magic ``MUFM``, u32 version, u32 dimension, u64 count, then
  per row: u32-length-prefixed UTF-8 source_id, u32-length-prefixed
  subject (empty = absent), u8 mask status (0 unmasked / 1 masked /
  2 unknown), dimension little-endian float32 values;
* JSON lines — a header object ``{"version", "dimension", "count"}``
  followed by one row object per line.

Values are stored at 32-bit precision and computed at 64-bit.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .embedding import Embedding, MaskStatus, global_average_pool, l2_normalize
from .errors import (
    DimensionMismatch,
    DuplicateSourceId,
    IoError,
    MixedDimensions,
    ModelLoadFailure,
    ParseError,
    ShapeMismatch,
    ZeroVector,
)
from .onnxrt import OnnxModel, load_model

MAGIC = b"MUFM"
FORMAT_VERSION = 1
UNIT_NORM_TOLERANCE = 1e-6

_STATUS_CODE = {MaskStatus.UNMASKED: 0, MaskStatus.MASKED: 1, MaskStatus.UNKNOWN: 2}
_CODE_STATUS = {code: status for status, code in _STATUS_CODE.items()}


class Mode(str, Enum):
    MODEL_FILE = "model-file"
    PRECOMPUTED = "precomputed"


class InputLayout(str, Enum):
    HWC = "hwc"  # model wants (1, H, W, 3)
    CHW = "chw"  # model wants (1, 3, H, W)


class OutputKind(str, Enum):
    FEATURE_MAP = "feature-map"  # (1, H, W, C): pooled here
    VECTOR = "vector"  # (1, D): taken as-is


@dataclass(frozen=True)
class ExtractorConfig:
    """How to turn a (H, W, 3) tensor into an embedding."""

    mode: Mode
    model_path: Optional[Path] = None
    input_layout: InputLayout = InputLayout.HWC
    output_kind: OutputKind = OutputKind.FEATURE_MAP
    expected_dim: int = 512

    def __post_init__(self) -> None:
        if self.mode == Mode.MODEL_FILE and self.model_path is None:
            raise ValueError("mode=MODEL_FILE requires model_path")
        if self.expected_dim <= 0:
            raise ValueError(f"expected_dim must be positive, got {self.expected_dim}")


def _dims_compatible(declared: Tuple[Optional[int], ...], actual: Tuple[int, ...]) -> bool:
    if len(declared) != len(actual):
        return False
    return all(d is None or d == a for d, a in zip(declared, actual))


class Extractor:
    """One loaded model, reusable across calls.

    The model handle is immutable after construction; concurrent extract
    calls share it safely because per-call state stays on the stack.
    """

    def __init__(self, cfg: ExtractorConfig) -> None:
        if cfg.mode != Mode.MODEL_FILE:
            raise ValueError("Extractor requires mode=MODEL_FILE; "
                             "use load_precomputed for embedding files")
        self.cfg = cfg
        self._model = load_model(cfg.model_path)
        if len(self._model.inputs) != 1 or len(self._model.outputs) != 1:
            raise ModelLoadFailure(
                "backbone contract wants exactly one input and one output; "
                f"model declares {len(self._model.inputs)} and {len(self._model.outputs)}"
            )

    @classmethod
    def for_model(cls, model_path: Union[str, Path]) -> "Extractor":
        """Build a config by inspecting the model's declared shapes.

        Layout comes from where the 3-channel axis sits in the input;
        output kind and dimension come from the output rank.
        """
        model = load_model(model_path)
        if len(model.inputs) != 1 or len(model.outputs) != 1:
            raise ModelLoadFailure(
                "backbone contract wants exactly one input and one output"
            )
        in_shape = model.inputs[0].shape
        out_shape = model.outputs[0].shape
        if len(in_shape) != 4:
            raise ModelLoadFailure(f"cannot infer layout from input shape {in_shape}")
        if in_shape[3] == 3:
            layout = InputLayout.HWC
        elif in_shape[1] == 3:
            layout = InputLayout.CHW
        else:
            raise ModelLoadFailure(
                f"no 3-channel axis in declared input shape {in_shape}"
            )
        if len(out_shape) == 2 and out_shape[1] is not None:
            kind, dim = OutputKind.VECTOR, out_shape[1]
        elif len(out_shape) == 4 and out_shape[3] is not None:
            kind, dim = OutputKind.FEATURE_MAP, out_shape[3]
        else:
            raise ModelLoadFailure(
                f"cannot infer output kind from declared shape {out_shape}"
            )
        cfg = ExtractorConfig(
            mode=Mode.MODEL_FILE,
            model_path=Path(model_path),
            input_layout=layout,
            output_kind=kind,
            expected_dim=dim,
        )
        return cls(cfg)

    @property
    def model(self) -> OnnxModel:
        return self._model

    def extract(
        self,
        tensor: np.ndarray,
        source_id: str,
        subject: Optional[str] = None,
        mask_status: MaskStatus = MaskStatus.UNKNOWN,
    ) -> Embedding:
        """Run the backbone on one (H, W, 3) tensor and normalize the result."""
        arr = np.asarray(tensor, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ShapeMismatch(f"expected an (H, W, 3) tensor, got {arr.shape}")
        if self.cfg.input_layout == InputLayout.CHW:
            feed = arr.transpose(2, 0, 1)[None]
        else:
            feed = arr[None]
        declared = self._model.inputs[0].shape
        if not _dims_compatible(declared, feed.shape):
            raise ShapeMismatch(
                f"model declares input {declared}, tensor maps to {feed.shape}"
            )
        feed32 = feed.astype(np.float32)
        output = self._model.run({self._model.inputs[0].name: feed32})
        raw = np.asarray(output[self._model.outputs[0].name], dtype=np.float64)
        if self.cfg.output_kind == OutputKind.VECTOR:
            if raw.ndim != 2 or raw.shape[0] != 1:
                raise ShapeMismatch(f"vector output must be (1, D), got {raw.shape}")
            if raw.shape[1] != self.cfg.expected_dim:
                raise ShapeMismatch(
                    f"model produced {raw.shape[1]} values, expected "
                    f"{self.cfg.expected_dim}"
                )
            vector = raw[0]
        else:
            if raw.ndim != 4 or raw.shape[0] != 1:
                raise ShapeMismatch(
                    f"feature-map output must be (1, H, W, C), got {raw.shape}"
                )
            if raw.shape[3] != self.cfg.expected_dim:
                raise ShapeMismatch(
                    f"model produced {raw.shape[3]} channels, expected "
                    f"{self.cfg.expected_dim}"
                )
            vector = global_average_pool(raw[0])
        return Embedding(
            values=l2_normalize(vector),
            source_id=source_id,
            subject=subject,
            mask_status=mask_status,
        )


def extract(
    tensor: np.ndarray,
    cfg: ExtractorConfig,
    source_id: str = "probe",
    subject: Optional[str] = None,
    mask_status: MaskStatus = MaskStatus.UNKNOWN,
) -> Embedding:
    """One-shot convenience; loads the model per call.  Prefer Extractor
    when extracting more than one tensor from the same model."""
    return Extractor(cfg).extract(tensor, source_id, subject, mask_status)


# ---------------------------------------------------------------------------
# Embedding files


def _status_to_code(status: MaskStatus) -> int:
    return _STATUS_CODE[MaskStatus(status)]


def _renormalized(emb: Embedding) -> Embedding:
    """Uphold the unit-norm boundary invariant for file-sourced rows."""
    norm = float(np.linalg.norm(emb.values))
    if abs(norm - 1.0) <= UNIT_NORM_TOLERANCE:
        return emb
    try:
        return replace(emb, values=l2_normalize(emb.values))
    except ZeroVector as exc:
        raise ParseError(
            f"row {emb.source_id!r} has zero norm; no direction to recover"
        ) from exc


def save_embeddings(
    embeddings: Sequence[Embedding],
    path: Union[str, Path],
    fmt: str = "binary",
) -> None:
    """Write embeddings so load_precomputed can read them back.

    The write is atomic: a temp file in the target directory is renamed
    over the destination, so readers never observe a half-written file.
    """
    items = list(embeddings)
    if items:
        dim = items[0].dimension
        for emb in items:
            if emb.dimension != dim:
                raise MixedDimensions(
                    f"cannot mix dimensions {dim} and {emb.dimension} in one file"
                )
    else:
        dim = 0
    seen = set()
    for emb in items:
        if emb.source_id in seen:
            raise DuplicateSourceId(f"source_id {emb.source_id!r} appears twice")
        seen.add(emb.source_id)
    if fmt == "binary":
        payload = _encode_binary(items, dim)
    elif fmt == "jsonl":
        payload = _encode_jsonl(items, dim)
    else:
        raise ValueError(f"unknown embedding file format {fmt!r}")
    _atomic_write(Path(path), payload)


def atomic_write_bytes(path: Union[str, Path], payload: bytes) -> None:
    """Write via temp file + rename in the target directory; readers
    never observe a partial file.  Raises IoError on OS failures."""
    _atomic_write(Path(path), payload)


def _atomic_write(path: Path, payload: bytes) -> None:
    try:
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp_name, path)
    except OSError as exc:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise IoError(f"cannot write {path}: {exc}") from exc


def _encode_binary(items: List[Embedding], dim: int) -> bytes:
    parts = [MAGIC, struct.pack("<IIQ", FORMAT_VERSION, dim, len(items))]
    for emb in items:
        sid = emb.source_id.encode("utf-8")
        subj = (emb.subject or "").encode("utf-8")
        parts.append(struct.pack("<I", len(sid)))
        parts.append(sid)
        parts.append(struct.pack("<I", len(subj)))
        parts.append(subj)
        parts.append(struct.pack("B", _status_to_code(emb.mask_status)))
        parts.append(emb.values.astype("<f4").tobytes())
    return b"".join(parts)


def _encode_jsonl(items: List[Embedding], dim: int) -> bytes:
    lines = [
        json.dumps(
            {"version": FORMAT_VERSION, "dimension": dim, "count": len(items)}
        )
    ]
    for emb in items:
        lines.append(
            json.dumps(
                {
                    "source_id": emb.source_id,
                    "subject": emb.subject,
                    "mask_status": emb.mask_status.value,
                    "values": [float(np.float32(v)) for v in emb.values],
                }
            )
        )
    return ("\n".join(lines) + "\n").encode("utf-8")


def load_precomputed(path: Union[str, Path]) -> List[Embedding]:
    """Read an embedding file (either layout); rows come back unit-norm."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read embedding file: {exc}") from exc
    if not data:
        raise ParseError("empty file is not a valid embedding file")
    if data[:1] == b"{":
        rows = _decode_jsonl(data)
    elif data[: len(MAGIC)] == MAGIC:
        rows = _decode_binary(data)
    else:
        raise ParseError(
            "unrecognized embedding file: expected MUFM magic or a JSON header"
        )
    seen = set()
    for emb in rows:
        if emb.source_id in seen:
            raise ParseError(f"duplicate source_id {emb.source_id!r} in file")
        seen.add(emb.source_id)
    return [_renormalized(emb) for emb in rows]


def _decode_binary(data: bytes) -> List[Embedding]:
    header_size = len(MAGIC) + struct.calcsize("<IIQ")
    if len(data) < header_size:
        raise ParseError("truncated header")
    version, dim, count = struct.unpack_from("<IIQ", data, len(MAGIC))
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported format version {version}")
    pos = header_size
    rows: List[Embedding] = []
    row_bytes = dim * 4

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise ParseError(f"row {len(rows)}: file ends mid-record")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    for _ in range(count):
        (sid_len,) = struct.unpack("<I", take(4))
        sid = take(sid_len).decode("utf-8")
        (subj_len,) = struct.unpack("<I", take(4))
        subj = take(subj_len).decode("utf-8") or None
        code = take(1)[0]
        if code not in _CODE_STATUS:
            raise ParseError(f"row {sid!r}: unknown mask status code {code}")
        values = np.frombuffer(take(row_bytes), dtype="<f4").astype(np.float64)
        rows.append(
            Embedding(
                values=values,
                source_id=sid,
                subject=subj,
                mask_status=_CODE_STATUS[code],
            )
        )
    if pos != len(data):
        raise ParseError(f"{len(data) - pos} trailing bytes after last row")
    return rows


def _decode_jsonl(data: bytes) -> List[Embedding]:
    lines = [ln for ln in data.decode("utf-8").splitlines() if ln.strip()]
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad header line: {exc}") from exc
    if not isinstance(header, dict) or "dimension" not in header:
        raise ParseError("header must be an object with a dimension field")
    if header.get("version") != FORMAT_VERSION:
        raise ParseError(f"unsupported format version {header.get('version')}")
    dim = int(header["dimension"])
    declared_count = int(header.get("count", len(lines) - 1))
    body = lines[1:]
    if len(body) != declared_count:
        raise ParseError(
            f"header declares {declared_count} rows, file has {len(body)}"
        )
    rows: List[Embedding] = []
    for lineno, line in enumerate(body, start=2):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
        try:
            values = np.asarray(obj["values"], dtype=np.float64)
            sid = obj["source_id"]
            status = MaskStatus(obj.get("mask_status", "unknown"))
        except (KeyError, TypeError) as exc:
            raise ParseError(f"line {lineno}: missing or malformed field: {exc}") from exc
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
        if values.ndim != 1 or values.size != dim:
            raise DimensionMismatch(
                f"line {lineno}: row has {values.size} values, header says {dim}"
            )
        rows.append(
            Embedding(
                values=values,
                source_id=sid,
                subject=obj.get("subject"),
                mask_status=status,
            )
        )
    return rows
