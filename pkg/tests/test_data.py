import numpy as np
import pytest

from auginv.augment import AugmentationEnsemble, AugmentationSpec, standard_ensemble
from auginv.core import RngStream
from auginv.data import (
    SHAPE_CLASSES,
    FeatureDataset,
    ImageDataset,
    gen_shapes,
    load_aift,
    load_idx,
    make_batch,
    save_aift,
    save_idx,
)
from auginv.errors import CorruptFileError, InvalidInputError


def tiny_feature_ds(n=6, d=3, s_file=4, seed=0):
    rng = RngStream(seed)
    clean = rng.child("clean").normal(size=(n, d))
    aug = rng.child("aug").normal(size=(n * s_file, d))
    labels = np.arange(n) % 2
    return FeatureDataset(clean, labels, aug, s_file, metadata='{"note":"t"}')


class TestFeatureDataset:
    def test_validation(self):
        with pytest.raises(InvalidInputError):
            FeatureDataset(np.zeros((3, 2)), np.zeros(2), np.zeros((3, 2)), 1)
        with pytest.raises(InvalidInputError):
            FeatureDataset(np.zeros((3, 2)), np.array([-1, 0, 1]), np.zeros((3, 2)), 1)

    def test_aug_source_idx_grouping(self):
        ds = tiny_feature_ds(n=3, s_file=2)
        np.testing.assert_array_equal(ds.aug_source_idx(), [0, 0, 1, 1, 2, 2])


class TestAift:
    def test_round_trip(self, tmp_path):
        ds = tiny_feature_ds()
        path = tmp_path / "f.aift"
        save_aift(ds, path)
        back = load_aift(path)
        # Payload is stored as f32; compare at that precision.
        np.testing.assert_array_equal(back.clean, ds.clean.astype(np.float32))
        np.testing.assert_array_equal(back.aug, ds.aug.astype(np.float32))
        np.testing.assert_array_equal(back.labels, ds.labels)
        assert back.s_file == ds.s_file
        assert back.metadata == ds.metadata
        assert back.n_classes == ds.n_classes

    def test_save_is_byte_deterministic(self, tmp_path):
        ds = tiny_feature_ds()
        p1, p2 = tmp_path / "a.aift", tmp_path / "b.aift"
        save_aift(ds, p1)
        save_aift(ds, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_truncation_detected(self, tmp_path):
        ds = tiny_feature_ds()
        path = tmp_path / "f.aift"
        save_aift(ds, path)
        path.write_bytes(path.read_bytes()[:-9])
        with pytest.raises(CorruptFileError):
            load_aift(path)

    def test_single_byte_flip_detected(self, tmp_path):
        ds = tiny_feature_ds()
        path = tmp_path / "f.aift"
        save_aift(ds, path)
        raw = bytearray(path.read_bytes())
        raw[len(raw) // 2] ^= 0x01
        path.write_bytes(bytes(raw))
        with pytest.raises(CorruptFileError):
            load_aift(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "f.aift"
        path.write_bytes(b"XXXX" + b"\x00" * 40)
        with pytest.raises(CorruptFileError):
            load_aift(path)

    def test_zero_aug_round_trip(self, tmp_path):
        ds = FeatureDataset(np.eye(3), np.array([0, 1, 2]),
                            np.zeros((0, 3)), s_file=0)
        path = tmp_path / "f.aift"
        save_aift(ds, path)
        back = load_aift(path)
        assert back.s_file == 0 and back.aug.shape == (0, 3)


class TestIdx:
    def test_round_trip_quantized(self, tmp_path):
        rng = RngStream(1)
        images = np.round(rng.uniform(size=(5, 8, 8, 1)) * 255) / 255.0
        ds = ImageDataset(images, np.array([0, 1, 2, 3, 1]))
        save_idx(ds, tmp_path / "img.idx", tmp_path / "lab.idx")
        back = load_idx(tmp_path / "img.idx", tmp_path / "lab.idx")
        np.testing.assert_allclose(back.images, images, atol=1e-12)
        np.testing.assert_array_equal(back.labels, ds.labels)

    def test_full_scale_maps_to_one(self, tmp_path):
        ds = ImageDataset(np.ones((2, 4, 4, 1)), np.zeros(2, dtype=int))
        save_idx(ds, tmp_path / "i", tmp_path / "l")
        back = load_idx(tmp_path / "i", tmp_path / "l")
        assert back.images.max() == 1.0 and back.images.min() == 1.0

    def test_count_mismatch(self, tmp_path):
        ds = ImageDataset(np.zeros((3, 4, 4, 1)), np.zeros(3, dtype=int))
        save_idx(ds, tmp_path / "i", tmp_path / "l")
        other = ImageDataset(np.zeros((2, 4, 4, 1)), np.zeros(2, dtype=int))
        save_idx(other, tmp_path / "i2", tmp_path / "l2")
        with pytest.raises(CorruptFileError):
            load_idx(tmp_path / "i", tmp_path / "l2")

    def test_bad_magic(self, tmp_path):
        (tmp_path / "i").write_bytes(b"\x00" * 20)
        with pytest.raises(CorruptFileError):
            load_idx(tmp_path / "i", tmp_path / "i")


class TestGenShapes:
    def test_zero_jitter_identical_within_class(self):
        ds = gen_shapes(5, 3, 24, 0.0, RngStream(2))
        for cls in range(3):
            block = ds.images[ds.labels == cls]
            for img in block[1:]:
                np.testing.assert_array_equal(img, block[0])

    def test_balanced_and_labeled(self):
        ds = gen_shapes(4, len(SHAPE_CLASSES), 24, 0.05, RngStream(3))
        counts = np.bincount(ds.labels)
        assert np.all(counts == 4)
        assert ds.n == 4 * len(SHAPE_CLASSES)

    def test_deterministic(self):
        a = gen_shapes(3, 4, 24, 0.05, RngStream(4))
        b = gen_shapes(3, 4, 24, 0.05, RngStream(4))
        np.testing.assert_array_equal(a.images, b.images)

    def test_nearest_centroid_separable_at_small_jitter(self):
        ds = gen_shapes(20, 4, 28, 0.05, RngStream(5))
        flat = ds.flatten()
        centroids = np.stack([flat[ds.labels == c].mean(axis=0) for c in range(4)])
        d2 = ((flat[:, None, :] - centroids[None]) ** 2).sum(axis=2)
        acc = np.mean(np.argmin(d2, axis=1) == ds.labels)
        assert acc >= 0.95

    def test_too_many_classes(self):
        with pytest.raises(InvalidInputError):
            gen_shapes(2, len(SHAPE_CLASSES) + 1, 24, 0.0, RngStream(0))


class TestMakeBatchFeatures:
    def test_s_equals_s_file_uses_all_stored_rows(self):
        ds = tiny_feature_ds(n=4, s_file=3)
        batch = make_batch(ds, [1, 3], None, s=3, rng=RngStream(6))
        np.testing.assert_array_equal(batch.clean, ds.clean[[1, 3]])
        np.testing.assert_array_equal(batch.aug[:3], ds.aug[3:6])
        np.testing.assert_array_equal(batch.aug[3:], ds.aug[9:12])

    def test_subset_draw_without_replacement(self):
        ds = tiny_feature_ds(n=2, s_file=4)
        batch = make_batch(ds, [0], None, s=2, rng=RngStream(7))
        group = ds.aug[0:4]
        hits = [np.where((group == row).all(axis=1))[0][0] for row in batch.aug]
        assert len(set(hits)) == 2

    def test_s_larger_than_stored_rejected(self):
        ds = tiny_feature_ds(s_file=2)
        with pytest.raises(InvalidInputError):
            make_batch(ds, [0], None, s=3, rng=RngStream(0))

    def test_deterministic(self):
        ds = tiny_feature_ds(n=5, s_file=4)
        a = make_batch(ds, [0, 2, 4], None, s=2, rng=RngStream(8))
        b = make_batch(ds, [0, 2, 4], None, s=2, rng=RngStream(8))
        np.testing.assert_array_equal(a.aug, b.aug)

    def test_with_raw_copies_clean(self):
        ds = tiny_feature_ds()
        batch = make_batch(ds, [0, 1], None, s=1, rng=RngStream(9), with_raw=True)
        np.testing.assert_array_equal(batch.raw, batch.clean)
        assert batch.raw is not batch.clean


class TestMakeBatchImages:
    def _image_ds(self):
        return gen_shapes(4, 2, 20, 0.0, RngStream(10))

    def test_identity_ensemble_matches_clean(self):
        ds = self._image_ds()
        ens = AugmentationEnsemble([AugmentationSpec("identity")], [1.0])
        batch = make_batch(ds, [0, 5], ens, s=2, rng=RngStream(11))
        np.testing.assert_array_equal(batch.aug[:2], np.tile(batch.clean[0], (2, 1)))
        np.testing.assert_array_equal(batch.aug[2:], np.tile(batch.clean[1], (2, 1)))

    def test_grouping_per_image(self):
        ds = self._image_ds()
        ens = standard_ensemble("noise", s=2)
        batch = make_batch(ds, [0, 4], ens, s=2, rng=RngStream(12))
        assert batch.aug.shape == (4, ds.flat_dim)
        assert batch.s == 2
        np.testing.assert_array_equal(batch.labels, ds.labels[[0, 4]])

    def test_feature_map_applied_to_both_blocks(self):
        ds = self._image_ds()
        proj = RngStream(13).normal(size=(ds.flat_dim, 6))
        ens = standard_ensemble("rotation", s=1)
        batch = make_batch(ds, [1, 2], ens, s=1, rng=RngStream(14),
                           feature_map=lambda x: x @ proj)
        assert batch.clean.shape == (2, 6) and batch.aug.shape == (2, 6)
        np.testing.assert_allclose(batch.clean, ds.flatten()[[1, 2]] @ proj)

    def test_deterministic(self):
        ds = self._image_ds()
        ens = standard_ensemble("affine", s=2)
        a = make_batch(ds, [0, 1, 6], ens, s=2, rng=RngStream(15))
        b = make_batch(ds, [0, 1, 6], ens, s=2, rng=RngStream(15))
        np.testing.assert_array_equal(a.aug, b.aug)
