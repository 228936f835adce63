from __future__ import annotations

import gzip
import os
import tempfile
import unittest

import numpy as np
from numpy.testing import assert_array_equal
from sklearn.datasets import make_moons

import tests

from incboost.data import (
    BadMagicError,
    CountMismatchError,
    Dataset,
    DatasetError,
    SplitError,
    TruncatedFileError,
    blob_centres,
    check_split,
    holdout,
    load_cifar,
    load_idx,
    make_synthetic,
    split,
    stratified_subset,
    write_idx,
)
from incboost.layers import LayerSpec
from incboost.network import NetworkSpec, build_network, predict
from incboost.training import TrainConfig, train


def _tiny_images(n: int = 12, seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    pixels = rng.integers(0, 256, size=(n, 1, 5, 4)).astype(np.float32) / np.float32(255.0)
    return Dataset(examples=pixels, labels=rng.integers(0, 10, size=n), ids=np.arange(n), num_classes=10)


def _labelled(counts) -> Dataset:
    labels = np.repeat(np.arange(len(counts)), counts)
    return Dataset(
        examples=np.zeros((len(labels), 1), dtype=np.float32),
        labels=labels,
        ids=np.arange(len(labels)),
        num_classes=len(counts),
    )


class TestDataset(unittest.TestCase):
    def test_length_mismatch_is_rejected(self) -> None:
        with self.assertRaises(DatasetError):
            Dataset(examples=np.zeros((3, 2)), labels=[0, 1], ids=[0, 1, 2], num_classes=2)

    def test_labels_must_fit_the_class_count(self) -> None:
        with self.assertRaises(DatasetError):
            Dataset(examples=np.zeros((2, 2)), labels=[0, 2], ids=[0, 1], num_classes=2)

    def test_subset_keeps_ids_and_unique_collapses_repeats(self) -> None:
        base = _labelled([3, 3])
        drawn = base.subset([4, 1, 4, 4])
        assert_array_equal(drawn.ids, [4, 1, 4, 4])
        assert_array_equal(drawn.unique().ids, [1, 4])
        assert_array_equal(drawn.reindexed().ids, [0, 1, 2, 3])

    def test_arrays_are_read_only(self) -> None:
        base = _labelled([2, 2])
        with self.assertRaises(ValueError):
            base.labels[0] = 1


class TestIdx(unittest.TestCase):
    def test_round_trip_is_bit_identical(self) -> None:
        original = _tiny_images()
        with tempfile.TemporaryDirectory() as tmpdir:
            images = os.path.join(tmpdir, "images-idx3-ubyte")
            labels = os.path.join(tmpdir, "labels-idx1-ubyte")
            write_idx(original, images, labels)
            loaded = load_idx(images, labels, num_classes=10)
        assert_array_equal(loaded.examples, original.examples)
        assert_array_equal(loaded.labels, original.labels)
        assert_array_equal(loaded.ids, np.arange(12))
        self.assertEqual(loaded.examples.shape, (12, 1, 5, 4))

    def test_header_layout(self) -> None:
        with tempfile.TemporaryDirectory() as tmpdir:
            images = os.path.join(tmpdir, "images")
            labels = os.path.join(tmpdir, "labels")
            write_idx(_tiny_images(3), images, labels)
            with open(images, "rb") as handle:
                self.assertEqual(handle.read(16), bytes.fromhex("00000803 00000003 00000005 00000004"))
            with open(labels, "rb") as handle:
                self.assertEqual(handle.read(8), bytes.fromhex("00000801 00000003"))

    def test_pixels_are_scaled_into_unit_range(self) -> None:
        with tempfile.TemporaryDirectory() as tmpdir:
            images = os.path.join(tmpdir, "images")
            labels = os.path.join(tmpdir, "labels")
            write_idx(_tiny_images(30, seed=4), images, labels)
            loaded = load_idx(images, labels)
        self.assertGreaterEqual(float(loaded.examples.min()), 0.0)
        self.assertLessEqual(float(loaded.examples.max()), 1.0)

    def test_gzipped_files_load(self) -> None:
        original = _tiny_images()
        with tempfile.TemporaryDirectory() as tmpdir:
            images = os.path.join(tmpdir, "images")
            labels = os.path.join(tmpdir, "labels")
            write_idx(original, images, labels)
            for path in (images, labels):
                with open(path, "rb") as src, gzip.open(path + ".gz", "wb") as dst:
                    dst.write(src.read())
            loaded = load_idx(images + ".gz", labels + ".gz", num_classes=10)
        assert_array_equal(loaded.examples, original.examples)

    def test_swapped_paths_are_a_bad_magic_error(self) -> None:
        with tempfile.TemporaryDirectory() as tmpdir:
            images = os.path.join(tmpdir, "images")
            labels = os.path.join(tmpdir, "labels")
            write_idx(_tiny_images(), images, labels)
            with self.assertRaises(BadMagicError):
                load_idx(labels, images)

    def test_truncated_file(self) -> None:
        with tempfile.TemporaryDirectory() as tmpdir:
            images = os.path.join(tmpdir, "images")
            labels = os.path.join(tmpdir, "labels")
            write_idx(_tiny_images(), images, labels)
            with open(images, "rb") as handle:
                raw = handle.read()
            with open(images, "wb") as handle:
                handle.write(raw[:-7])
            with self.assertRaises(TruncatedFileError):
                load_idx(images, labels)
            with open(images, "wb") as handle:
                handle.write(raw[:10])
            with self.assertRaises(TruncatedFileError):
                load_idx(images, labels)

    def test_count_mismatch(self) -> None:
        with tempfile.TemporaryDirectory() as tmpdir:
            images = os.path.join(tmpdir, "images")
            labels = os.path.join(tmpdir, "labels")
            other_images = os.path.join(tmpdir, "other-images")
            other_labels = os.path.join(tmpdir, "other-labels")
            write_idx(_tiny_images(12), images, labels)
            write_idx(_tiny_images(9), other_images, other_labels)
            with self.assertRaises(CountMismatchError):
                load_idx(images, other_labels)


class TestCifar(unittest.TestCase):
    def _write(self, path: str, label_rows, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        pixels = rng.integers(0, 256, size=(len(label_rows), 3072), dtype=np.uint8)
        records = np.concatenate([np.asarray(label_rows, dtype=np.uint8), pixels], axis=1)
        with open(path, "wb") as handle:
            handle.write(records.tobytes())
        return pixels

    def test_cifar10_records(self) -> None:
        with tempfile.TemporaryDirectory() as tmpdir:
            first = os.path.join(tmpdir, "data_batch_1.bin")
            second = os.path.join(tmpdir, "data_batch_2.bin")
            pixels = self._write(first, [[3], [7]])
            self._write(second, [[1]], seed=1)
            data = load_cifar([first, second])
        self.assertEqual(data.examples.shape, (3, 3, 32, 32))
        assert_array_equal(data.labels, [3, 7, 1])
        self.assertEqual(data.num_classes, 10)
        assert_array_equal(data.examples[0], pixels[0].reshape(3, 32, 32).astype(np.float32) / np.float32(255.0))

    def test_cifar100_picks_the_requested_label(self) -> None:
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "train.bin")
            self._write(path, [[4, 88], [19, 2]])
            fine = load_cifar([path], label_kind="fine")
            coarse = load_cifar([path], label_kind="coarse")
        assert_array_equal(fine.labels, [88, 2])
        assert_array_equal(coarse.labels, [4, 19])
        self.assertEqual((fine.num_classes, coarse.num_classes), (100, 20))

    def test_partial_record(self) -> None:
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "data_batch_1.bin")
            with open(path, "wb") as handle:
                handle.write(b"\x01" * 3000)
            with self.assertRaises(TruncatedFileError):
                load_cifar([path])


class TestSynthetic(unittest.TestCase):
    def test_same_seed_is_bit_identical(self) -> None:
        for kind in ("two-moons", "gaussian-blobs"):
            a = make_synthetic(kind, 300, num_classes=3, noise=0.2, seed=5)
            b = make_synthetic(kind, 300, num_classes=3, noise=0.2, seed=5)
            assert_array_equal(a.examples, b.examples)
            assert_array_equal(a.labels, b.labels)

    def test_exact_balance_when_classes_divide_n(self) -> None:
        data = make_synthetic("two-moons", 1000, num_classes=4, seed=1)
        assert_array_equal(data.class_counts(), [250, 250, 250, 250])
        assert_array_equal(data.ids, np.arange(1000))
        self.assertEqual(data.input_shape, (2,))

    def test_two_classes_are_the_sklearn_moons(self) -> None:
        data = make_synthetic("two-moons", 301, noise=0.2, seed=8)
        points, labels = make_moons(n_samples=(151, 150), noise=0.2, shuffle=False, random_state=8)
        expected = np.column_stack([points.astype(np.float32), labels])
        actual = np.column_stack([data.examples, data.labels])
        assert_array_equal(expected[np.lexsort(expected.T)], actual[np.lexsort(actual.T)])

    def test_odd_class_count_keeps_a_lone_outer_arc(self) -> None:
        data = make_synthetic("two-moons", 90, num_classes=3, noise=0.0, seed=2)
        assert_array_equal(data.class_counts(), [30, 30, 30])
        lone = data.examples[data.labels == 2]
        self.assertTrue(np.all(lone[:, 1] >= -1e-6))
        self.assertGreater(float(lone[:, 0].min()), 1.9)

    def test_too_few_examples(self) -> None:
        with self.assertRaises(DatasetError):
            make_synthetic("gaussian-blobs", 3, num_classes=4)

    def test_well_separated_blobs_have_zero_nearest_centroid_error(self) -> None:
        data = make_synthetic("gaussian-blobs", 400, num_classes=5, noise=0.3, seed=2)
        centres = blob_centres(5)
        distances = np.linalg.norm(data.examples[:, None, :] - centres[None], axis=2)
        self.assertEqual(int(np.count_nonzero(distances.argmin(axis=1) != data.labels)), 0)

    def test_moons_defeat_a_linear_model_but_not_an_mlp(self) -> None:
        data = make_synthetic("two-moons", 1000, noise=0.0, seed=0)
        cfg = TrainConfig(epochs=150, batch_size=32, learning_rate=0.01)

        linear = build_network(NetworkSpec((2,), (LayerSpec.dense(2), LayerSpec.softmax())), seed=0)
        linear, _ = train(linear, data, data, cfg)
        self.assertGreater(float(np.mean(predict(linear, data.examples) != data.labels)), 0.05)

        mlp_spec = NetworkSpec(
            (2,),
            (LayerSpec.dense(32, activation="relu"), LayerSpec.dense(32, activation="relu"),
             LayerSpec.dense(2), LayerSpec.softmax()),
        )
        mlp, _ = train(build_network(mlp_spec, seed=0), data, data, cfg)
        self.assertLess(float(np.mean(predict(mlp, data.examples) != data.labels)), 0.02)


class TestSplits(unittest.TestCase):
    def test_full_mnist_sized_split(self) -> None:
        base = _labelled([6000] * 10)
        train_set, valid_set, test_set = split(base, (2 / 3, 1 / 6, 1 / 6), seed=0)
        self.assertEqual((len(train_set), len(valid_set), len(test_set)), (40000, 10000, 10000))

    def test_splits_partition_the_base_ids(self) -> None:
        rng = np.random.default_rng(0)
        for trial in range(100):
            counts = rng.integers(10, 40, size=int(rng.integers(2, 6)))
            base = _labelled(counts)
            parts = split(base, (0.6, 0.2, 0.2), seed=trial)
            ids = np.concatenate([part.ids for part in parts])
            self.assertEqual(len(ids), len(base))
            assert_array_equal(np.sort(ids), base.ids)

    def test_per_class_counts_are_proportional(self) -> None:
        base = _labelled([17, 23, 40])
        fractions = (0.5, 0.3, 0.2)
        for part, fraction in zip(split(base, fractions, seed=3), fractions):
            expected = base.class_counts() * fraction
            self.assertTrue(np.all(np.abs(part.class_counts() - expected) <= 1.0))

    def test_deterministic_per_seed(self) -> None:
        base = _labelled([20, 20])
        first = split(base, (0.5, 0.25, 0.25), seed=4)
        second = split(base, (0.5, 0.25, 0.25), seed=4)
        for a, b in zip(first, second):
            assert_array_equal(a.ids, b.ids)

    def test_split_too_small_for_a_class(self) -> None:
        with self.assertRaises(SplitError):
            split(_labelled([2, 10]), (0.8, 0.1, 0.1), seed=0)

    def test_split_feasibility_is_known_before_drawing(self) -> None:
        check_split([10, 10], (0.6, 0.2, 0.2))
        with self.assertRaisesRegex(SplitError, "class 1 has 2 examples, too few for split part 2"):
            check_split([10, 2], (0.6, 0.2, 0.2))
        self.assertTrue(issubclass(SplitError, DatasetError))

    def test_holdout_of_a_singleton_class(self) -> None:
        with self.assertRaises(SplitError):
            holdout(_labelled([1, 20]), 5, seed=0)

    def test_fractions_must_sum_to_one(self) -> None:
        with self.assertRaises(SplitError):
            split(_labelled([10, 10]), (0.5, 0.3, 0.3), seed=0)

    def test_holdout_and_subset(self) -> None:
        base = _labelled([500] * 10)
        subset = stratified_subset(base, 1200, seed=1)
        self.assertEqual(len(subset), 1200)
        assert_array_equal(subset.class_counts(), [120] * 10)
        train_set, valid_set = holdout(subset, 200, seed=1)
        self.assertEqual((len(train_set), len(valid_set)), (1000, 200))
        self.assertEqual(len(np.intersect1d(train_set.ids, valid_set.ids)), 0)


if __name__ == "__main__":
    unittest.main()
