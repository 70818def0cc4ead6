"""Extractor and embedding-file tests.

Model-backed extraction runs against tiny fixture models; file layout
tests cover both the binary and JSON-lines variants plus their failure
modes.
"""

import numpy as np
import pytest

from mufm.embedding import Embedding, MaskStatus, l2_normalize
from mufm.errors import (
    DimensionMismatch,
    DuplicateSourceId,
    IoError,
    MixedDimensions,
    ModelLoadFailure,
    ParseError,
    ShapeMismatch,
)
from mufm.extractor import (
    Extractor,
    ExtractorConfig,
    InputLayout,
    Mode,
    OutputKind,
    extract,
    load_precomputed,
    save_embeddings,
)

import onnx_build as ob


def write_model(tmp_path, name, raw):
    path = tmp_path / name
    path.write_bytes(raw)
    return path


def random_unit_embeddings(rng, count, dim=16):
    out = []
    statuses = [MaskStatus.UNMASKED, MaskStatus.MASKED, MaskStatus.UNKNOWN]
    for i in range(count):
        values = l2_normalize(rng.standard_normal(dim))
        out.append(
            Embedding(
                values=values,
                source_id=f"img-{i:04d}",
                subject=None if i % 5 == 0 else f"subj-{i % 7}",
                mask_status=statuses[i % 3],
            )
        )
    return out


class TestExtract:
    def test_mean_model_on_constant_tensor(self, tmp_path):
        path = write_model(tmp_path, "mean.onnx", ob.mean_hwc(side=8))
        cfg = ExtractorConfig(
            mode=Mode.MODEL_FILE,
            model_path=path,
            input_layout=InputLayout.HWC,
            output_kind=OutputKind.VECTOR,
            expected_dim=3,
        )
        tensor = np.zeros((8, 8, 3))
        tensor[:, :, 0] = 0.3
        tensor[:, :, 1] = 0.4
        tensor[:, :, 2] = 0.0
        emb = Extractor(cfg).extract(tensor, "probe-1")
        # Channel means (0.3, 0.4, 0.0) normalize to (0.6, 0.8, 0.0);
        # tolerance allows for the float32 model feed.
        np.testing.assert_allclose(emb.values, [0.6, 0.8, 0.0], atol=1e-6)
        assert emb.source_id == "probe-1"

    def test_feature_map_output_is_pooled(self, tmp_path):
        path = write_model(tmp_path, "ident.onnx", ob.identity_hwc(side=8))
        cfg = ExtractorConfig(
            mode=Mode.MODEL_FILE,
            model_path=path,
            output_kind=OutputKind.FEATURE_MAP,
            expected_dim=3,
        )
        rng = np.random.default_rng(4)
        tensor = rng.random((8, 8, 3))
        emb = Extractor(cfg).extract(tensor, "x")
        # Model feeds are float32, so the oracle rounds the same way.
        pooled = tensor.astype(np.float32).astype(np.float64).mean(axis=(0, 1))
        np.testing.assert_allclose(emb.values, l2_normalize(pooled), atol=1e-12)

    def test_layouts_agree_on_the_same_tensor(self, tmp_path):
        hwc = Extractor(
            ExtractorConfig(
                mode=Mode.MODEL_FILE,
                model_path=write_model(tmp_path, "hwc.onnx", ob.mean_hwc(side=8)),
                input_layout=InputLayout.HWC,
                output_kind=OutputKind.VECTOR,
                expected_dim=3,
            )
        )
        chw = Extractor(
            ExtractorConfig(
                mode=Mode.MODEL_FILE,
                model_path=write_model(tmp_path, "chw.onnx", ob.mean_chw(side=8)),
                input_layout=InputLayout.CHW,
                output_kind=OutputKind.VECTOR,
                expected_dim=3,
            )
        )
        tensor = np.random.default_rng(9).random((8, 8, 3))
        np.testing.assert_allclose(
            hwc.extract(tensor, "a").values,
            chw.extract(tensor, "a").values,
            atol=1e-7,
        )

    def test_extraction_is_deterministic(self, tmp_path):
        rng = np.random.default_rng(12)
        path = write_model(tmp_path, "conv.onnx", ob.conv_chw(rng, side=32, filters=4))
        extractor = Extractor.for_model(path)
        tensor = rng.random((32, 32, 3))
        first = extractor.extract(tensor, "p", subject="s", mask_status=MaskStatus.MASKED)
        second = extractor.extract(tensor, "p", subject="s", mask_status=MaskStatus.MASKED)
        np.testing.assert_array_equal(first.values, second.values)
        assert first == second

    def test_embeddings_leave_unit_normed(self, tmp_path):
        rng = np.random.default_rng(13)
        path = write_model(tmp_path, "conv.onnx", ob.conv_chw(rng, side=32, filters=4))
        extractor = Extractor.for_model(path)
        for trial in range(5):
            emb = extractor.extract(rng.random((32, 32, 3)), f"p{trial}")
            assert abs(np.linalg.norm(emb.values) - 1.0) < 1e-9

    def test_for_model_infers_chw_feature_map(self, tmp_path):
        rng = np.random.default_rng(14)
        path = write_model(tmp_path, "conv.onnx", ob.conv_chw(rng, side=32, filters=4))
        extractor = Extractor.for_model(path)
        assert extractor.cfg.input_layout == InputLayout.CHW
        assert extractor.cfg.output_kind == OutputKind.FEATURE_MAP
        assert extractor.cfg.expected_dim == 4

    def test_for_model_infers_hwc_vector(self, tmp_path):
        path = write_model(tmp_path, "mean.onnx", ob.mean_hwc(side=8))
        extractor = Extractor.for_model(path)
        assert extractor.cfg.input_layout == InputLayout.HWC
        assert extractor.cfg.output_kind == OutputKind.VECTOR
        assert extractor.cfg.expected_dim == 3

    def test_wrong_tensor_dims_rejected(self, tmp_path):
        path = write_model(tmp_path, "ident.onnx", ob.identity_hwc(side=16))
        cfg = ExtractorConfig(
            mode=Mode.MODEL_FILE, model_path=path, expected_dim=3
        )
        extractor = Extractor(cfg)
        with pytest.raises(ShapeMismatch):
            extractor.extract(np.zeros((8, 8, 3)), "x")
        with pytest.raises(ShapeMismatch):
            extractor.extract(np.zeros((16, 16, 1)), "x")

    def test_channel_count_disagreement_rejected(self, tmp_path):
        path = write_model(tmp_path, "ident.onnx", ob.identity_hwc(side=8))
        cfg = ExtractorConfig(
            mode=Mode.MODEL_FILE, model_path=path, expected_dim=7
        )
        with pytest.raises(ShapeMismatch, match="expected 7"):
            Extractor(cfg).extract(np.ones((8, 8, 3)), "x")

    def test_two_output_model_rejected(self, tmp_path):
        raw = ob.model(
            ob.graph(
                nodes=[
                    ob.node("Identity", ["x"], ["y"]),
                    ob.node("Identity", ["x"], ["z"]),
                ],
                inputs=[ob.value_info("x", (1, 4, 4, 3))],
                outputs=[
                    ob.value_info("y", (1, 4, 4, 3)),
                    ob.value_info("z", (1, 4, 4, 3)),
                ],
            )
        )
        path = write_model(tmp_path, "twoout.onnx", raw)
        with pytest.raises(ModelLoadFailure, match="one input and one output"):
            Extractor.for_model(path)

    def test_config_invariants(self):
        with pytest.raises(ValueError, match="model_path"):
            ExtractorConfig(mode=Mode.MODEL_FILE)
        with pytest.raises(ValueError, match="positive"):
            ExtractorConfig(mode=Mode.PRECOMPUTED, expected_dim=0)

    def test_one_shot_helper(self, tmp_path):
        path = write_model(tmp_path, "mean.onnx", ob.mean_hwc(side=8))
        cfg = ExtractorConfig(
            mode=Mode.MODEL_FILE,
            model_path=path,
            output_kind=OutputKind.VECTOR,
            expected_dim=3,
        )
        emb = extract(np.full((8, 8, 3), 0.5), cfg, source_id="q")
        np.testing.assert_allclose(emb.values, np.full(3, 1 / np.sqrt(3)), atol=1e-7)


class TestEmbeddingFiles:
    @pytest.mark.parametrize("fmt", ["binary", "jsonl"])
    def test_round_trip_preserves_every_field(self, tmp_path, fmt):
        rng = np.random.default_rng(31)
        embs = random_unit_embeddings(rng, 100)
        path = tmp_path / f"gallery.{fmt}"
        save_embeddings(embs, path, fmt=fmt)
        loaded = load_precomputed(path)
        assert len(loaded) == 100
        for orig, back in zip(embs, loaded):
            assert back.source_id == orig.source_id
            assert back.subject == orig.subject
            assert back.mask_status == orig.mask_status
            # Lossless at stored (float32) precision.
            np.testing.assert_array_equal(
                back.values, orig.values.astype(np.float32).astype(np.float64)
            )

    @pytest.mark.parametrize("fmt", ["binary", "jsonl"])
    def test_empty_collection_round_trips(self, tmp_path, fmt):
        path = tmp_path / f"empty.{fmt}"
        save_embeddings([], path, fmt=fmt)
        assert load_precomputed(path) == []

    def test_formats_load_identically(self, tmp_path):
        rng = np.random.default_rng(32)
        embs = random_unit_embeddings(rng, 20)
        save_embeddings(embs, tmp_path / "a.mufm", fmt="binary")
        save_embeddings(embs, tmp_path / "b.jsonl", fmt="jsonl")
        via_binary = load_precomputed(tmp_path / "a.mufm")
        via_jsonl = load_precomputed(tmp_path / "b.jsonl")
        for x, y in zip(via_binary, via_jsonl):
            assert x == y

    def test_mixed_dimensions_rejected(self, tmp_path):
        a = Embedding(values=l2_normalize(np.ones(4)), source_id="a")
        b = Embedding(values=l2_normalize(np.ones(8)), source_id="b")
        with pytest.raises(MixedDimensions):
            save_embeddings([a, b], tmp_path / "bad.mufm")

    def test_duplicate_source_ids_rejected_on_save(self, tmp_path):
        emb = Embedding(values=l2_normalize(np.ones(4)), source_id="dup")
        with pytest.raises(DuplicateSourceId):
            save_embeddings([emb, emb], tmp_path / "bad.mufm")

    def test_short_row_raises_dimension_mismatch(self, tmp_path):
        path = tmp_path / "short.jsonl"
        lines = [
            '{"version": 1, "dimension": 4, "count": 1}',
            '{"source_id": "a", "subject": null, "mask_status": "unknown",'
            ' "values": [1.0, 0.0, 0.0]}',
        ]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DimensionMismatch):
            load_precomputed(path)

    def test_truncated_binary_raises_parse_error(self, tmp_path):
        rng = np.random.default_rng(33)
        path = tmp_path / "full.mufm"
        save_embeddings(random_unit_embeddings(rng, 10), path)
        data = path.read_bytes()
        clipped = tmp_path / "clipped.mufm"
        clipped.write_bytes(data[: len(data) - 7])
        with pytest.raises(ParseError):
            load_precomputed(clipped)

    def test_garbage_rejected(self, tmp_path):
        path = tmp_path / "noise.bin"
        path.write_bytes(b"\x00\x01\x02 not an embedding file")
        with pytest.raises(ParseError, match="unrecognized"):
            load_precomputed(path)

    def test_unsupported_version_rejected(self, tmp_path):
        path = tmp_path / "v2.mufm"
        save_embeddings([], path)
        data = bytearray(path.read_bytes())
        data[4] = 2  # version field sits right after the magic
        path.write_bytes(bytes(data))
        with pytest.raises(ParseError, match="version"):
            load_precomputed(path)

    def test_duplicate_ids_in_file_rejected(self, tmp_path):
        path = tmp_path / "dup.jsonl"
        row = '{"source_id": "same", "values": [1.0, 0.0]}'
        path.write_text(
            '{"version": 1, "dimension": 2, "count": 2}\n' + row + "\n" + row + "\n"
        )
        with pytest.raises(ParseError, match="duplicate"):
            load_precomputed(path)

    def test_non_unit_rows_are_normalized_on_load(self, tmp_path):
        path = tmp_path / "raw.jsonl"
        path.write_text(
            '{"version": 1, "dimension": 2, "count": 1}\n'
            '{"source_id": "a", "values": [3.0, 4.0]}\n'
        )
        (emb,) = load_precomputed(path)
        np.testing.assert_allclose(emb.values, [0.6, 0.8], atol=1e-12)

    def test_zero_row_rejected(self, tmp_path):
        path = tmp_path / "zero.jsonl"
        path.write_text(
            '{"version": 1, "dimension": 2, "count": 1}\n'
            '{"source_id": "a", "values": [0.0, 0.0]}\n'
        )
        with pytest.raises(ParseError, match="zero norm"):
            load_precomputed(path)

    def test_unwritable_destination_raises_io_error(self, tmp_path):
        target = tmp_path / "missing-dir" / "out.mufm"
        with pytest.raises(IoError):
            save_embeddings([], target)

    def test_overwrite_leaves_single_valid_file(self, tmp_path):
        rng = np.random.default_rng(34)
        path = tmp_path / "gallery.mufm"
        save_embeddings(random_unit_embeddings(rng, 5), path)
        second = random_unit_embeddings(rng, 3)
        save_embeddings(second, path)
        assert [p.name for p in tmp_path.iterdir()] == ["gallery.mufm"]
        loaded = load_precomputed(path)
        assert [e.source_id for e in loaded] == [e.source_id for e in second]
