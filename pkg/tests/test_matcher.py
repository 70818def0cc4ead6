"""Matcher tests: decision behavior, tie rules, and the calibration
sweep checked against an independent exhaustive oracle."""

import numpy as np
import pytest

from mufm.embedding import Embedding, MaskStatus, l2_normalize
from mufm.errors import DimensionMismatch, EmptyScores, RoleViolation
from mufm.knn_index import build
from mufm.matcher import MatchConfig, calibrate_threshold, match, match_all


def gallery_entry(values, source_id, subject, status=MaskStatus.UNMASKED):
    return Embedding(
        values=l2_normalize(np.asarray(values, dtype=np.float64)),
        source_id=source_id,
        subject=subject,
        mask_status=status,
    )


def probe_of(values, probe_id="p"):
    return Embedding(
        values=l2_normalize(np.asarray(values, dtype=np.float64)),
        source_id=probe_id,
        mask_status=MaskStatus.MASKED,
    )


def orthonormal_gallery(n):
    entries = []
    for i in range(n):
        values = np.zeros(n)
        values[i] = 1.0
        entries.append(gallery_entry(values, f"g{i:02d}", f"subj{i:02d}"))
    return entries


class TestMatch:
    def test_exact_duplicate_accepted_at_any_threshold(self):
        gallery = orthonormal_gallery(4)
        index = build(gallery)
        result = match(probe_of(gallery[2].values), index, MatchConfig(threshold=1.0))
        assert result.best_id == "g02"
        assert result.best_subject == "subj02"
        assert result.similarity == pytest.approx(1.0, abs=1e-12)
        assert result.accepted

    def test_orthogonal_gallery_scores(self):
        index = build(orthonormal_gallery(3))
        result = match(
            probe_of([0.0, 1.0, 0.0]), index, MatchConfig(shortlist_k=3, threshold=0.7)
        )
        assert result.accepted and result.best_id == "g01"
        others = [sim for sid, sim in result.shortlist if sid != "g01"]
        assert others == pytest.approx([0.0, 0.0], abs=1e-12)

    def test_synthetic_clusters_recover_true_subject(self):
        rng = np.random.default_rng(200)
        d, n_subjects = 64, 20
        subjects = [l2_normalize(rng.standard_normal(d)) for _ in range(n_subjects)]
        index = build(
            [
                gallery_entry(vec, f"g{i:02d}", f"subj{i:02d}")
                for i, vec in enumerate(subjects)
            ]
        )
        hits = 0
        for trial in range(100):
            true = int(rng.integers(n_subjects))
            noisy = subjects[true] + rng.normal(0.0, 0.1, size=d)
            result = match(probe_of(noisy, f"p{trial}"), index)
            hits += result.best_subject == f"subj{true:02d}"
        assert hits == 100

    def test_prenormalization_scale_invariance(self):
        rng = np.random.default_rng(201)
        index = build(
            [gallery_entry(rng.standard_normal(8), f"g{i}", f"s{i}") for i in range(10)]
        )
        raw = rng.standard_normal(8)
        base = match(probe_of(raw), index)
        for alpha in (1e-6, 0.5, 3.0, 1e6):
            scaled = match(probe_of(alpha * raw), index)
            assert scaled.best_id == base.best_id
            assert scaled.accepted == base.accepted

    def test_full_shortlist_is_global_argmax(self):
        rng = np.random.default_rng(202)
        gallery = [
            gallery_entry(rng.standard_normal(8), f"g{i:02d}", f"s{i}")
            for i in range(15)
        ]
        index = build(gallery)
        for trial in range(20):
            probe = probe_of(rng.standard_normal(8), f"p{trial}")
            result = match(probe, index, MatchConfig(shortlist_k=15))
            sims = {g.source_id: float(np.dot(probe.values, g.values)) for g in gallery}
            brute_best = min(sims, key=lambda sid: (-sims[sid], sid))
            assert result.best_id == brute_best
            assert len(result.shortlist) == 15

    def test_shortlisting_never_changes_the_winner(self):
        rng = np.random.default_rng(203)
        gallery = [
            gallery_entry(rng.standard_normal(8), f"g{i:02d}", f"s{i}")
            for i in range(20)
        ]
        index = build(gallery)
        for trial in range(20):
            probe = probe_of(rng.standard_normal(8), f"p{trial}")
            full = match(probe, index, MatchConfig(shortlist_k=20))
            for k in (1, 3, 7):
                short = match(probe, index, MatchConfig(shortlist_k=k))
                assert short.best_id == full.best_id
                assert short.similarity == full.similarity

    def test_threshold_monotonicity(self):
        rng = np.random.default_rng(204)
        index = build(
            [gallery_entry(rng.standard_normal(6), f"g{i}", f"s{i}") for i in range(8)]
        )
        thresholds = [-1.0, -0.3, 0.0, 0.4, 0.7, 0.9, 1.0]
        for trial in range(20):
            probe = probe_of(rng.standard_normal(6), f"p{trial}")
            accepted = [
                match(probe, index, MatchConfig(threshold=t)).accepted
                for t in thresholds
            ]
            # Once rejected at some threshold, stays rejected above it.
            assert accepted == sorted(accepted, reverse=True)

    def test_shortlist_tie_order_by_source_id(self):
        vec = l2_normalize(np.array([1.0, 1.0, 0.0]))
        gallery = [
            Embedding(values=vec.copy(), source_id="zz", subject="a",
                      mask_status=MaskStatus.UNMASKED),
            Embedding(values=vec.copy(), source_id="aa", subject="b",
                      mask_status=MaskStatus.UNMASKED),
        ]
        index = build(gallery)
        result = match(probe_of([1.0, 0.9, 0.1]), index, MatchConfig(shortlist_k=2))
        assert [sid for sid, _ in result.shortlist] == ["aa", "zz"]
        assert result.best_id == "aa"

    def test_repeat_match_identical(self):
        rng = np.random.default_rng(205)
        index = build(
            [gallery_entry(rng.standard_normal(8), f"g{i}", f"s{i}") for i in range(10)]
        )
        probe = probe_of(rng.standard_normal(8))
        assert match(probe, index) == match(probe, index)

    def test_dimension_mismatch(self):
        index = build(orthonormal_gallery(3))
        with pytest.raises(DimensionMismatch):
            match(probe_of([1.0, 0.0]), index)

    def test_masked_gallery_rejected_unless_waived(self):
        gallery = [
            gallery_entry([1, 0], "g0", "s0", status=MaskStatus.MASKED),
            gallery_entry([0, 1], "g1", "s1"),
        ]
        index = build(gallery)
        probe = probe_of([1.0, 0.1])
        with pytest.raises(RoleViolation):
            match(probe, index)
        relaxed = MatchConfig(require_unmasked_gallery=False)
        assert match(probe, index, relaxed).best_id == "g0"

    def test_config_validation(self):
        with pytest.raises(ValueError):
            MatchConfig(shortlist_k=0)
        with pytest.raises(ValueError):
            MatchConfig(threshold=1.5)


class TestMatchAll:
    def test_empty_probe_list(self):
        index = build(orthonormal_gallery(2))
        assert match_all([], index) == []

    def test_singleton_equals_scalar_call(self):
        index = build(orthonormal_gallery(3))
        probe = probe_of([0.2, 0.9, 0.1])
        assert match_all([probe], index) == [match(probe, index)]

    def test_batch_equals_scalar_calls_elementwise(self):
        rng = np.random.default_rng(206)
        index = build(
            [gallery_entry(rng.standard_normal(8), f"g{i}", f"s{i}") for i in range(12)]
        )
        probes = [probe_of(rng.standard_normal(8), f"p{i}") for i in range(10)]
        batch = match_all(probes, index)
        assert batch == [match(p, index) for p in probes]
        assert [r.probe_id for r in batch] == [p.source_id for p in probes]


def sweep_oracle(genuine, impostor):
    """Max accuracy over a candidate grid strictly denser than the
    implementation's: all scores, all midpoints, both endpoints."""
    scores = sorted(set(genuine) | set(impostor))
    candidates = {-1.0, 1.0}
    candidates.update(scores)
    candidates.update((a + b) / 2 for a, b in zip(scores, scores[1:]))
    total = len(genuine) + len(impostor)
    return max(
        (sum(1 for s in genuine if s >= t) + sum(1 for s in impostor if s < t)) / total
        for t in candidates
    )


class TestCalibrateThreshold:
    def test_separated_cluster_example(self):
        threshold, accuracy = calibrate_threshold([0.9, 0.8], [0.2, 0.1])
        assert accuracy == 1.0
        assert threshold == pytest.approx(0.5, abs=1e-12)

    def test_perfectly_separated_pair(self):
        threshold, accuracy = calibrate_threshold([1.0], [-1.0])
        assert accuracy == 1.0

    def test_indistinguishable_scores(self):
        threshold, accuracy = calibrate_threshold([0.5], [0.5])
        assert accuracy == 0.5

    def test_tie_resolves_to_larger_threshold(self):
        # acc(-1) = 2/3 (all accepted) and acc(0.7) = 2/3 tie; 0.7 wins.
        threshold, accuracy = calibrate_threshold([0.5, 0.9], [0.5])
        assert accuracy == pytest.approx(2 / 3)
        assert threshold == pytest.approx(0.7, abs=1e-12)

    def test_empty_scores_rejected(self):
        with pytest.raises(EmptyScores):
            calibrate_threshold([], [0.1])
        with pytest.raises(EmptyScores):
            calibrate_threshold([0.9], [])

    def test_achieved_accuracy_matches_exhaustive_sweep(self):
        rng = np.random.default_rng(207)
        for trial in range(100):
            n_gen = int(rng.integers(1, 40))
            n_imp = int(rng.integers(1, 40))
            # Coarse grid makes duplicate scores (and plateaus) common.
            genuine = list(np.round(rng.uniform(-1, 1, n_gen), 2))
            impostor = list(np.round(rng.uniform(-1, 1, n_imp), 2))
            _, accuracy = calibrate_threshold(genuine, impostor)
            assert accuracy == sweep_oracle(genuine, impostor), f"trial {trial}"

    def test_returned_threshold_achieves_returned_accuracy(self):
        rng = np.random.default_rng(208)
        for _ in range(50):
            genuine = list(rng.uniform(0.2, 1.0, 20))
            impostor = list(rng.uniform(-1.0, 0.6, 30))
            threshold, accuracy = calibrate_threshold(genuine, impostor)
            correct = sum(1 for s in genuine if s >= threshold) + sum(
                1 for s in impostor if s < threshold
            )
            assert accuracy == correct / 50
