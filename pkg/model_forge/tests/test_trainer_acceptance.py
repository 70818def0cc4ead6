"""Acceptance gate for the trainer: the three end-to-end criteria.

Each test consumes the trainer's artifacts exactly the way the matching
engine does, through the exported model file and the curve-log CSV.
"""

import numpy as np
import pytest

from model_forge.export import export_backbone
from model_forge.model import TrainSpec, build_transfer_model
from model_forge.training import train

from mufm import cosine_similarity
from mufm.evaluation import load_curve_log, smoothed_losses
from mufm.extractor import Extractor


@pytest.mark.criterion(
    "trainer export: the matching engine consumes the backbone file; 512-dim "
    "unit-norm embeddings, repeat exports agree within 1e-5"
)
def test_export_contract(tmp_path):
    model = build_transfer_model(TrainSpec(seed=3), pretrained=False)
    first = tmp_path / "a.onnx"
    second = tmp_path / "b.onnx"
    export_backbone(model, first)
    export_backbone(model, second)

    images = [
        np.full((224, 224, 3), 0.5),
        np.random.default_rng(41).random((224, 224, 3)),
    ]
    outputs = []
    for path in (first, second):
        extractor = Extractor.for_model(path)
        run = []
        for i, image in enumerate(images):
            emb = extractor.extract(image.copy(), f"probe{i}")
            assert emb.values.shape == (512,)
            assert abs(float(np.linalg.norm(emb.values)) - 1.0) < 1e-9
            run.append(emb.values)
        outputs.append(run)
    for a, b in zip(*outputs):
        assert float(np.max(np.abs(a - b))) < 1e-5


@pytest.mark.criterion(
    "trainer curves: 20 epochs on a 32-image smoke set emit exactly 20 "
    "consecutive rows with window-3 smoothed training loss non-increasing"
)
def test_curve_shape(prepared_factory, tmp_path):
    root = prepared_factory(8, 2)  # 8 subjects x 2 images x 2 classes = 32
    spec = TrainSpec(epochs=20, seed=11)
    model = build_transfer_model(spec, pretrained=False)
    curve_path = tmp_path / "curves.csv"
    rows = train(model, root, spec, curve_path=curve_path)
    assert len(rows) == 20

    curve = load_curve_log(curve_path)  # the engine's own reader
    assert [row.epoch for row in curve.rows] == list(range(1, 21))
    smoothed = smoothed_losses(curve, window=3)
    for earlier, later in zip(smoothed, smoothed[1:]):
        assert later <= earlier


@pytest.mark.criterion(
    "trainer separation: mean genuine cosine exceeds mean impostor cosine "
    "on a 5-subject masked/unmasked smoke set"
)
def test_separation_smoke(prepared_factory, tmp_path):
    root = prepared_factory(5, 1)
    model = build_transfer_model(TrainSpec(seed=3), pretrained=False)
    path = tmp_path / "backbone.onnx"
    export_backbone(model, path)
    extractor = Extractor.for_model(path)

    from model_forge.dataset import load_pixels, scan

    by_subject = {}
    for item in scan(root):
        pixels = load_pixels(item).astype(np.float64)
        emb = extractor.extract(pixels, item.source_id)
        by_subject.setdefault(item.subject, {})[item.label] = emb.values
    assert len(by_subject) == 5

    genuine = []
    impostor = []
    subjects = sorted(by_subject)
    for a in subjects:
        for b in subjects:
            score = cosine_similarity(by_subject[a][0], by_subject[b][1])
            (genuine if a == b else impostor).append(score)
    assert len(genuine) == 5 and len(impostor) == 20
    assert float(np.mean(genuine)) > float(np.mean(impostor))
