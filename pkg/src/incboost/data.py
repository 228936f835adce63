"""Datasets: IDX and CIFAR loaders, synthetic generators and stratified splits."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.datasets import make_blobs, make_moons
from sklearn.model_selection import train_test_split

PathLike = Union[str, Path]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_IMAGE_BYTES = 3 * 32 * 32
CIFAR_CLASSES = {None: 10, "coarse": 20, "fine": 100}
SYNTHETIC_KINDS = ("two-moons", "gaussian-blobs")
BLOB_RADIUS = 5.0
MOON_SPACING = 3.0


class DatasetError(ValueError):
    pass


class IdxFormatError(ValueError):
    pass


class BadMagicError(IdxFormatError):
    pass


class TruncatedFileError(IdxFormatError):
    pass


class CountMismatchError(IdxFormatError):
    pass


class SplitError(DatasetError):
    pass


def _readonly(array: np.ndarray) -> np.ndarray:
    view = array.view()
    view.setflags(write=False)
    return view


@dataclass(frozen=True)
class Dataset:
    """Batch-major examples with labels and provenance ids.

    ``ids`` point back into the base dataset an example was drawn from, so a
    resampled set can be compared with another one by identity.
    """

    examples: np.ndarray
    labels: np.ndarray
    ids: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        examples = np.asarray(self.examples)
        labels = np.asarray(self.labels, dtype=np.int64)
        ids = np.asarray(self.ids, dtype=np.int64)
        if examples.ndim < 2:
            raise DatasetError("examples must have a leading batch dimension")
        if labels.ndim != 1 or ids.ndim != 1:
            raise DatasetError("labels and ids must be one-dimensional")
        if not len(labels) == len(ids) == len(examples):
            raise DatasetError(
                f"length mismatch: {len(examples)} examples, {len(labels)} labels, {len(ids)} ids"
            )
        if self.num_classes < 1:
            raise DatasetError("num_classes must be >= 1")
        if len(labels) and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise DatasetError(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "examples", _readonly(examples))
        object.__setattr__(self, "labels", _readonly(labels))
        object.__setattr__(self, "ids", _readonly(ids))
        object.__setattr__(self, "num_classes", int(self.num_classes))

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def input_shape(self) -> Tuple[int, ...]:
        return tuple(self.examples.shape[1:])

    def subset(self, indices: Sequence[int]) -> "Dataset":
        """Examples at ``indices`` (positions, repeats allowed), ids carried over."""

        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            examples=self.examples[indices],
            labels=self.labels[indices],
            ids=self.ids[indices],
            num_classes=self.num_classes,
        )

    def unique(self) -> "Dataset":
        """One example per id, ordered by id."""

        _, first = np.unique(self.ids, return_index=True)
        return self.subset(first)

    def reindexed(self) -> "Dataset":
        return Dataset(
            examples=self.examples,
            labels=self.labels,
            ids=np.arange(len(self), dtype=np.int64),
            num_classes=self.num_classes,
        )

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


def _open_binary(path: PathLike) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as handle:  # type: ignore[operator]
        return handle.read()


def _read_idx(path: PathLike, expected_magic: int) -> np.ndarray:
    # i32 magic (0x00000800 | ndim for unsigned bytes), i32 dims..., u8 payload
    raw = _open_binary(path)
    if len(raw) < 4:
        raise TruncatedFileError(f"{path}: file too short for an IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise BadMagicError(
            f"{path}: expected magic 0x{expected_magic:08x}, found 0x{magic:08x}"
        )
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise TruncatedFileError(f"{path}: truncated IDX header")
    dims = struct.unpack(">" + "I" * ndim, raw[4:header])
    size = int(np.prod(dims))
    if len(raw) - header < size:
        raise TruncatedFileError(
            f"{path}: expected {size} data bytes, found {len(raw) - header}"
        )
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)


def load_idx(
    images_path: PathLike,
    labels_path: PathLike,
    *,
    num_classes: Optional[int] = None,
    center: bool = False,
) -> Dataset:
    """Load an IDX image/label pair, pixels scaled to [0, 1], shape (n, 1, rows, cols)."""

    images = _read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC)
    if len(images) != len(labels):
        raise CountMismatchError(
            f"{images_path} holds {len(images)} images but {labels_path} holds {len(labels)} labels"
        )
    pixels = images.astype(np.float32) / np.float32(255.0)
    if center:
        pixels = pixels - pixels.mean(dtype=np.float64).astype(np.float32)
    n, rows, cols = images.shape
    labels = labels.astype(np.int64)
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if n else 1
    return Dataset(
        examples=pixels.reshape(n, 1, rows, cols),
        labels=labels,
        ids=np.arange(n, dtype=np.int64),
        num_classes=num_classes,
    )


def write_idx(dataset: Dataset, images_path: PathLike, labels_path: PathLike) -> None:
    """Write single-channel [0, 1] images and their labels as an IDX pair."""

    examples = dataset.examples
    if examples.ndim == 4 and examples.shape[1] == 1:
        examples = examples[:, 0]
    if examples.ndim != 3:
        raise DatasetError(f"IDX images must be (n, rows, cols), got {dataset.examples.shape}")
    if dataset.num_classes > 256:
        raise DatasetError("IDX labels are single bytes")
    n, rows, cols = examples.shape
    pixels = np.clip(np.rint(examples.astype(np.float64) * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as handle:
        handle.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        handle.write(pixels.tobytes())
    with open(labels_path, "wb") as handle:
        handle.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        handle.write(dataset.labels.astype(np.uint8).tobytes())


def load_cifar(paths: Sequence[PathLike], *, label_kind: Optional[str] = None) -> Dataset:
    """Load CIFAR binary batches.

    ``label_kind=None`` reads CIFAR-10 records (1 label byte); ``"coarse"`` or
    ``"fine"`` reads CIFAR-100 records (coarse byte, fine byte).
    """

    if label_kind not in CIFAR_CLASSES:
        raise DatasetError(f"unknown CIFAR label kind '{label_kind}'")
    label_bytes = 1 if label_kind is None else 2
    label_column = 1 if label_kind == "fine" else 0
    num_classes = CIFAR_CLASSES[label_kind]
    record = label_bytes + CIFAR_IMAGE_BYTES

    images: List[np.ndarray] = []
    labels: List[np.ndarray] = []
    for path in paths:
        raw = _open_binary(path)
        if len(raw) % record:
            raise TruncatedFileError(
                f"{path}: {len(raw)} bytes is not a whole number of {record}-byte records"
            )
        rows = np.frombuffer(raw, dtype=np.uint8).reshape(-1, record)
        labels.append(rows[:, label_column].astype(np.int64))
        images.append(rows[:, label_bytes:].reshape(-1, 3, 32, 32))
    if not images:
        raise DatasetError("no CIFAR files given")
    pixels = np.concatenate(images).astype(np.float32) / np.float32(255.0)
    all_labels = np.concatenate(labels)
    return Dataset(
        examples=pixels,
        labels=all_labels,
        ids=np.arange(len(all_labels), dtype=np.int64),
        num_classes=num_classes,
    )


def balanced_counts(n: int, num_classes: int) -> np.ndarray:
    counts = np.full(num_classes, n // num_classes, dtype=np.int64)
    counts[: n % num_classes] += 1
    return counts


def _moons(counts: np.ndarray, noise: float, random_state: np.random.RandomState) -> np.ndarray:
    # classes 2p and 2p + 1 are the outer and inner arc of pair p
    chunks = []
    for pair, start in enumerate(range(0, len(counts), 2)):
        outer = int(counts[start])
        inner = int(counts[start + 1]) if start + 1 < len(counts) else 0
        points, which = make_moons(
            n_samples=(outer, max(inner, 1)), noise=noise, shuffle=False, random_state=random_state
        )
        if inner == 0:
            points = points[which == 0]
        chunks.append(points + np.array([MOON_SPACING * pair, 0.0]))
    return np.concatenate(chunks)


def blob_centres(num_classes: int) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
    return BLOB_RADIUS * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def make_synthetic(
    kind: str,
    n: int,
    num_classes: int = 2,
    noise: float = 0.1,
    seed: int = 0,
) -> Dataset:
    """Two-dimensional toy data, exactly class-balanced when ``num_classes`` divides ``n``.

    ``two-moons`` with more than two classes places further interleaved
    pairs of arcs to the right of the first pair.
    """

    if kind not in SYNTHETIC_KINDS:
        raise DatasetError(f"unknown synthetic kind '{kind}'")
    if num_classes < 1 or n < num_classes:
        raise DatasetError("need n >= num_classes >= 1")
    if noise < 0:
        raise DatasetError("noise must be >= 0")
    random_state = np.random.RandomState(seed)
    counts = balanced_counts(n, num_classes)
    labels = np.repeat(np.arange(num_classes), counts)
    if kind == "two-moons":
        points = _moons(counts, noise, random_state)
    else:
        points, _ = make_blobs(
            n_samples=counts.tolist(),
            centers=blob_centres(num_classes),
            cluster_std=noise,
            shuffle=False,
            random_state=random_state,
        )
    order = random_state.permutation(n)
    return Dataset(
        examples=points[order].astype(np.float32),
        labels=labels[order],
        ids=np.arange(n, dtype=np.int64),
        num_classes=num_classes,
    )


def _allocate(count: int, fractions: Sequence[float]) -> np.ndarray:
    # largest remainder: every part is within one of count * fraction
    exact = count * np.asarray(fractions, dtype=np.float64)
    sizes = np.floor(exact + 1e-9).astype(np.int64)
    remainder = count - int(sizes.sum())
    if remainder > 0:
        order = np.argsort(-(exact - sizes), kind="stable")
        sizes[order[:remainder]] += 1
    return sizes


def _check_fractions(fractions: Sequence[float]) -> List[float]:
    fractions = [float(f) for f in fractions]
    if any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise SplitError(f"fractions must be positive and sum to 1, got {fractions}")
    return fractions


def check_split(class_counts: Sequence[int], fractions: Sequence[float]) -> None:
    """Raise SplitError when some present class cannot reach every part of the split."""

    fractions = _check_fractions(fractions)
    for label, count in enumerate(class_counts):
        count = int(count)
        if count == 0:
            continue
        for index, size in enumerate(_allocate(count, fractions)):
            if size == 0:
                raise SplitError(f"class {label} has {count} examples, too few for split part {index}")


def _stratified(indices: np.ndarray, labels: np.ndarray, seed: int, **sizes: int) -> Tuple[np.ndarray, np.ndarray]:
    try:
        kept, held = train_test_split(indices, stratify=labels, random_state=seed, **sizes)
    except ValueError as exc:
        raise SplitError(str(exc)) from exc
    return np.sort(kept), np.sort(held)


def split(
    base: Dataset,
    fractions: Tuple[float, float, float],
    seed: int,
) -> Tuple[Dataset, Dataset, Dataset]:
    """Stratified train/validation/test partition, deterministic per seed.

    The test part is drawn first and the validation part from what is left,
    each draw stratified by class.
    """

    if len(fractions) != 3:
        raise SplitError("split needs (train, valid, test) fractions")
    check_split(base.class_counts(), fractions)
    _, valid_size, test_size = _allocate(len(base), _check_fractions(fractions))
    rest, test_idx = _stratified(np.arange(len(base)), base.labels, seed, test_size=int(test_size))
    train_idx, valid_idx = _stratified(rest, base.labels[rest], seed, test_size=int(valid_size))
    return base.subset(train_idx), base.subset(valid_idx), base.subset(test_idx)


def holdout(base: Dataset, valid_size: int, seed: int) -> Tuple[Dataset, Dataset]:
    """Stratified (train, validation) pair with exactly ``valid_size`` validation examples."""

    if not 0 < valid_size < len(base):
        raise SplitError(f"valid_size must lie in (0, {len(base)})")
    train_idx, valid_idx = _stratified(np.arange(len(base)), base.labels, seed, test_size=valid_size)
    return base.subset(train_idx), base.subset(valid_idx)


def stratified_subset(base: Dataset, size: int, seed: int) -> Dataset:
    if size >= len(base):
        return base
    if size < 1:
        raise SplitError("subset size must be >= 1")
    kept, _ = _stratified(np.arange(len(base)), base.labels, seed, train_size=size)
    return base.subset(kept)
