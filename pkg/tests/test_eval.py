import csv
import json

import numpy as np
import pytest
from scipy.stats import ortho_group

from auginv.core import RngStream
from auginv.errors import DegenerateSampleError, InvalidInputError
from auginv.evaluate import (
    PairAccuracy,
    aligned_collision_rate,
    collision_rate,
    probe_pair_accuracy,
    report_dict,
    rigid_align,
    structure_report,
    write_embeddings_csv,
    write_report,
)


class LinearMap:
    """Duck-typed adapter: forward is a fixed matrix product."""

    def __init__(self, mat):
        self.mat = np.asarray(mat, dtype=np.float64)

    def forward(self, x):
        return x @ self.mat.T


class NearestCentroidProbe:
    probe_kind = "linear"

    def __init__(self, centroids):
        self.centroids = centroids

    def predict(self, x):
        d2 = ((x[:, None, :] - self.centroids[None]) ** 2).sum(axis=2)
        return np.argmin(d2, axis=1)


class TestStructure:
    def test_identity_map_is_exact_isometry(self):
        x = RngStream(0).normal(size=(40, 5))
        rep = structure_report(None, x)
        assert rep.l1 == pytest.approx(1.0, abs=1e-12)
        assert rep.l2 == pytest.approx(1.0, abs=1e-12)
        assert rep.slope == pytest.approx(1.0, abs=1e-12)
        assert rep.intercept == pytest.approx(0.0, abs=1e-12)
        assert rep.r2 == pytest.approx(1.0, abs=1e-12)
        assert rep.rmsd == pytest.approx(0.0, abs=1e-12)
        assert rep.pair_count == 40 * 39 // 2

    def test_uniform_scaling_by_two(self):
        x = RngStream(1).normal(size=(30, 4))
        rep = structure_report(LinearMap(2.0 * np.eye(4)), x)
        assert rep.slope == pytest.approx(2.0, abs=1e-10)
        assert rep.l1 == pytest.approx(2.0, abs=1e-10)
        assert rep.l2 == pytest.approx(2.0, abs=1e-10)
        assert rep.r2 == pytest.approx(1.0, abs=1e-12)
        # Residual from the y = x diagonal equals the rms of the distances.
        i, j = np.triu_indices(30, k=1)
        d = np.linalg.norm(x[i] - x[j], axis=1)
        assert rep.rmsd == pytest.approx(float(np.sqrt(np.mean(d ** 2))), rel=1e-10)
        assert rep.cvrmsd == pytest.approx(rep.rmsd / d.mean(), rel=1e-10)
        assert rep.nrmsd == pytest.approx(rep.rmsd / (d.max() - d.min()), rel=1e-10)

    @pytest.mark.parametrize("dim", [3, 64, 256])
    def test_orthogonal_map_preserves_distances(self, dim):
        q = ortho_group.rvs(dim, random_state=7)
        x = RngStream(2).normal(size=(25, dim))
        rep = structure_report(LinearMap(q), x)
        assert rep.l1 == pytest.approx(1.0, abs=1e-9)
        assert rep.l2 == pytest.approx(1.0, abs=1e-9)
        assert rep.rmsd < 1e-9

    def test_pair_budget_subsampling(self):
        x = RngStream(3).normal(size=(200, 3))
        rep = structure_report(None, x, pair_budget=500, rng=RngStream(4))
        assert rep.pair_count == 500
        assert rep.slope == pytest.approx(1.0, abs=1e-10)

    def test_degenerate_and_invalid(self):
        with pytest.raises(DegenerateSampleError):
            structure_report(None, np.ones((5, 3)))
        with pytest.raises(InvalidInputError):
            structure_report(None, np.zeros((2, 3)))
        with pytest.raises(InvalidInputError):
            structure_report(None, np.zeros((5, 3)), pair_budget=10)


class TestCollision:
    def test_one_dimensional_fixtures(self):
        clean = np.array([[0.0], [10.0]])
        labels = np.array([0, 1])
        # Augmented point at 7 is nearer the other class: a collision.
        assert collision_rate(clean, labels, np.array([[7.0]]), [0]) == 1.0
        # At 4 it stays nearest its own class: no collision.
        assert collision_rate(clean, labels, np.array([[4.0]]), [0]) == 0.0

    def test_tie_counts_as_non_collision(self):
        clean = np.array([[0.0], [10.0]])
        labels = np.array([0, 1])
        assert collision_rate(clean, labels, np.array([[5.0]]), [0]) == 0.0

    def test_mixed_rate(self):
        clean = np.array([[0.0], [10.0]])
        labels = np.array([0, 1])
        aug = np.array([[1.0], [9.0], [8.0], [2.0]])
        src = np.array([0, 0, 1, 1])
        assert collision_rate(clean, labels, aug, src) == 0.5

    def test_missing_class_rejected(self):
        clean = np.array([[0.0], [1.0]])
        labels = np.array([0, 0])
        with pytest.raises(IndexError):
            collision_rate(clean, labels, np.array([[0.5]]), [5])

    def test_chunking_matches_direct(self):
        rng = RngStream(5)
        clean = rng.child("c").normal(size=(50, 3))
        labels = np.arange(50) % 3
        aug = clean + 0.4 * rng.child("a").normal(size=(50, 3))
        src = np.arange(50)
        rate = collision_rate(clean, labels, aug, src)
        # direct loop oracle
        hits = 0
        for r, row in enumerate(aug):
            d2 = np.sum((clean - row) ** 2, axis=1)
            same = labels == labels[src[r]]
            if d2[~same].min() < d2[same].min():
                hits += 1
        assert rate == hits / 50


class TestRigidAlign:
    def test_recovers_planted_motion(self):
        rng = RngStream(6)
        src = rng.child("s").normal(size=(30, 4))
        q_true = ortho_group.rvs(4, random_state=11)
        b_true = np.array([1.0, -2.0, 0.5, 3.0])
        tgt = src @ q_true.T + b_true
        alignment = rigid_align(src, tgt)
        np.testing.assert_allclose(alignment.q, q_true, atol=1e-8)
        np.testing.assert_allclose(alignment.b, b_true, atol=1e-8)
        assert alignment.residual < 1e-8
        np.testing.assert_allclose(alignment.apply(src), tgt, atol=1e-8)

    def test_noise_residual_scales_with_sigma(self):
        rng = RngStream(7)
        n, d, sigma = 400, 3, 0.05
        src = rng.child("s").normal(size=(n, d))
        tgt = src + sigma * rng.child("e").normal(size=(n, d))
        residual = rigid_align(src, tgt).residual
        expected = sigma * np.sqrt(n * d)
        assert abs(residual - expected) / expected < 0.2

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            rigid_align(np.zeros((3, 2)), np.zeros((4, 2)))

    def test_aligned_collision_zero_after_exact_rotation(self):
        rng = RngStream(8)
        clean = np.concatenate([
            rng.child("a").normal(size=(20, 3)),
            np.array([6.0, 0, 0]) + rng.child("b").normal(size=(20, 3)),
        ])
        labels = np.repeat([0, 1], 20)
        q = ortho_group.rvs(3, random_state=13)
        aug = clean @ q.T + np.array([0.0, 2.0, -1.0])
        rep = aligned_collision_rate(clean, labels, aug, np.arange(40))
        assert rep.cr_aligned == 0.0
        assert rep.alignment_residual < 1e-8


class TestProbePairAccuracy:
    def test_clean_and_augmented_accuracy(self):
        clean = np.array([[0.0, 0.0], [4.0, 0.0], [0.1, 0.0], [3.9, 0.0]])
        labels = np.array([0, 1, 0, 1])
        probe = NearestCentroidProbe(np.array([[0.0, 0.0], [4.0, 0.0]]))
        aug = np.array([[0.2, 0.0], [3.5, 0.0], [3.0, 0.0]])
        src = np.array([0, 1, 2])  # last one lands on the wrong side
        pair = probe_pair_accuracy(probe, None, clean, aug, labels, src,
                                   loss_kind="mawa")
        assert pair.clean_acc == 100.0
        assert pair.aug_acc == pytest.approx(100.0 * 2 / 3)
        assert pair.loss_kind == "mawa" and pair.probe_kind == "linear"

    def test_adapter_applied_to_both_sides(self):
        clean = np.array([[0.0, 1.0], [4.0, 1.0]])
        labels = np.array([0, 1])
        probe = NearestCentroidProbe(np.array([[0.0], [8.0]]))
        adapter = LinearMap(np.array([[2.0, 0.0]]))
        pair = probe_pair_accuracy(probe, adapter, clean, clean, labels,
                                   np.array([0, 1]))
        assert pair.clean_acc == 100.0 and pair.aug_acc == 100.0

    def test_length_mismatch(self):
        probe = NearestCentroidProbe(np.zeros((2, 2)))
        with pytest.raises(InvalidInputError):
            probe_pair_accuracy(probe, None, np.zeros((3, 2)), np.zeros((2, 2)),
                                np.zeros(3, dtype=int), np.zeros(3, dtype=int))


class TestSerialization:
    def test_report_dict_field_names(self):
        x = RngStream(9).normal(size=(10, 3))
        structure = structure_report(None, x)
        collision = aligned_collision_rate(
            x, np.arange(10) % 2, x, np.arange(10))
        pair = PairAccuracy(98.0, 91.0, "linear", "waco")
        out = report_dict(pair, structure, collision, extra={"seed": 3})
        for key in ("l1", "l2", "slope", "intercept", "r2", "rmsd", "nrmsd",
                    "cvrmsd", "pair_count", "cr_raw", "cr_aligned",
                    "alignment_residual", "clean_acc", "aug_acc",
                    "probe_kind", "seed"):
            assert key in out
        assert out["clean_acc"] == 98.0

    def test_write_report_round_trip(self, tmp_path):
        path = tmp_path / "report.json"
        write_report(path, {"b": 2, "a": 1.5})
        text = path.read_text()
        assert json.loads(text) == {"a": 1.5, "b": 2}
        assert text.index('"a"') < text.index('"b"')  # sorted keys

    def test_embeddings_csv_appends_splits(self, tmp_path):
        path = tmp_path / "emb.csv"
        write_embeddings_csv(path, np.zeros((2, 3)), np.array([0, 1]), "clean")
        write_embeddings_csv(path, np.ones((1, 3)), np.array([1]), "aug")
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["split", "label", "dim0", "dim1", "dim2"]
        assert [r[0] for r in rows[1:]] == ["clean", "clean", "aug"]
        assert rows[3][2] == "1"
