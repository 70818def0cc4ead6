import numpy as np
import pytest
import torch
from torch import nn

from model_forge.errors import ExportFailure
from model_forge.export import export_backbone
from model_forge.model import (
    IMAGENET_MEAN,
    IMAGENET_STD,
    TrainSpec,
    TransferModel,
    build_transfer_model,
)

from mufm.extractor import Extractor


@pytest.fixture(scope="module")
def exported(tmp_path_factory):
    model = build_transfer_model(TrainSpec(seed=3), pretrained=False)
    path = tmp_path_factory.mktemp("export") / "backbone.onnx"
    export_backbone(model, path)
    return model, path


class TestExportedFile:
    def test_matching_engine_reads_the_contract(self, exported):
        _, path = exported
        extractor = Extractor.for_model(path)
        assert extractor.cfg.input_layout.value == "chw"
        assert extractor.cfg.output_kind.value == "vector"
        assert extractor.cfg.expected_dim == 512

    def test_constant_image_gives_unit_embedding(self, exported):
        _, path = exported
        extractor = Extractor.for_model(path)
        emb = extractor.extract(np.full((224, 224, 3), 0.5), "probe")
        assert emb.values.shape == (512,)
        assert abs(float(np.linalg.norm(emb.values)) - 1.0) < 1e-9

    def test_repeat_export_is_byte_identical(self, exported, tmp_path):
        model, path = exported
        again = tmp_path / "again.onnx"
        export_backbone(model, again)
        assert again.read_bytes() == path.read_bytes()

    def test_graph_agrees_with_the_torch_model(self, exported):
        model, path = exported
        extractor = Extractor.for_model(path)
        image = np.random.default_rng(17).random((224, 224, 3))
        emb = extractor.extract(image.copy(), "probe")

        arr = (image.astype(np.float32) - np.asarray(IMAGENET_MEAN, dtype=np.float32)) / (
            np.asarray(IMAGENET_STD, dtype=np.float32)
        )
        with torch.no_grad():
            feats = model.forward_features(
                torch.from_numpy(arr).permute(2, 0, 1)[None]
            ).numpy()[0]
        reference = feats / np.linalg.norm(feats)

        assert float(np.dot(reference, emb.values)) > 1.0 - 1e-6
        assert float(np.max(np.abs(reference - emb.values))) < 1e-4


class TestExportErrors:
    def test_unsupported_module_is_rejected(self, tmp_path):
        features = nn.Sequential(
            nn.Conv2d(3, 512, kernel_size=3, padding=1), nn.ReLU(), nn.Dropout()
        )
        model = TransferModel(features, (2,))
        with pytest.raises(ExportFailure, match="Dropout"):
            export_backbone(model, tmp_path / "bad.onnx")

    def test_wrong_final_width_is_rejected(self, tmp_path):
        features = nn.Sequential(nn.Conv2d(3, 64, kernel_size=3, padding=1), nn.ReLU())
        model = TransferModel(features, (2,))
        with pytest.raises(ExportFailure, match="64 channels"):
            export_backbone(model, tmp_path / "narrow.onnx")

    def test_failed_write_leaves_no_partial_file(self, tmp_path):
        model = TransferModel(
            nn.Sequential(nn.Conv2d(3, 512, kernel_size=3, padding=1), nn.ReLU()), (2,)
        )
        target = tmp_path / "missing-dir" / "backbone.onnx"
        with pytest.raises(ExportFailure):
            export_backbone(model, target)
        assert not target.exists()
