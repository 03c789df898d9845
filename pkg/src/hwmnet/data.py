"""Image I/O, paired dataset indexing, patch sampling and flip augmentation."""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .autograd import Tensor
from .errors import ImageIOError, InvalidArgument, InvalidDataset, UnsupportedFormat

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
PATCHES_PER_IMAGE = 10


def load_image(path) -> Tensor:
    """Decode an 8-bit RGB PNG/JPEG into a (1, 3, h, w) float32 tensor with byte k -> k/255."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode != "RGB":
                raise UnsupportedFormat(f"{path}: expected 8-bit RGB, got mode {img.mode}")
            arr = np.asarray(img, dtype=np.uint8)
    except (FileNotFoundError, UnidentifiedImageError, OSError) as exc:
        if isinstance(exc, UnsupportedFormat):
            raise
        raise ImageIOError(f"{path}: cannot read image ({exc})") from exc
    data = arr.transpose(2, 0, 1)[None].astype(np.float32) / np.float32(255.0)
    return Tensor(data)


def to_bytes(image) -> np.ndarray:
    """Clamp to [0, 1] and round half up to uint8, (3, h, w) -> (h, w, 3)."""
    arr = np.asarray(image.data if isinstance(image, Tensor) else image, dtype=np.float64)
    if arr.ndim == 4:
        if arr.shape[0] != 1:
            raise InvalidArgument(f"save_image takes one image, got batch of {arr.shape[0]}")
        arr = arr[0]
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise InvalidArgument(f"expected (3, h, w) image, got {arr.shape}")
    return np.floor(np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8).transpose(1, 2, 0)


def quantize(image) -> np.ndarray:
    """The float image a save/load round trip would produce, as float32 (3, h, w)."""
    return to_bytes(image).transpose(2, 0, 1).astype(np.float32) / np.float32(255.0)


def save_image(image, path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(to_bytes(image), mode="RGB").save(path)
    except OSError as exc:
        raise ImageIOError(f"{path}: cannot write image ({exc})") from exc


@dataclass(frozen=True)
class ImagePairRecord:
    low_path: Path
    gt_path: Path
    dims: tuple[int, int]

    @property
    def name(self) -> str:
        return self.low_path.name


@dataclass
class DatasetIndex:
    """Low/ground-truth pairs matched by filename, in lexicographic order."""

    records: list[ImagePairRecord]
    split: str = "train"
    orphans: list[Path] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def names(self) -> list[str]:
        return [r.name for r in self.records]

    def pair(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Decoded (low, gt) as float32 (3, h, w) arrays; cached."""
        return _load_pair(self.records[i].low_path, self.records[i].gt_path)


@functools.lru_cache(maxsize=64)
def _load_pair(low_path: Path, gt_path: Path):
    return load_image(low_path).data[0], load_image(gt_path).data[0]


class ArrayPairs:
    """In-memory stand-in for :class:`DatasetIndex` (synthetic data, tests)."""

    def __init__(self, pairs: Sequence[tuple[np.ndarray, np.ndarray]], names: Sequence[str] | None = None):
        self._pairs = [(np.asarray(lo, np.float32), np.asarray(gt, np.float32)) for lo, gt in pairs]
        for lo, gt in self._pairs:
            if lo.shape != gt.shape or lo.ndim != 3:
                raise InvalidArgument(f"pair shapes differ or are not (c, h, w): {lo.shape} vs {gt.shape}")
        self._names = list(names) if names else [f"{i:04d}" for i in range(len(self._pairs))]

    def __len__(self) -> int:
        return len(self._pairs)

    def names(self) -> list[str]:
        return list(self._names)

    def pair(self, i: int):
        return self._pairs[i]


def _image_size(path: Path) -> tuple[int, int]:
    try:
        with Image.open(path) as img:
            return img.height, img.width
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageIOError(f"{path}: cannot read image ({exc})") from exc


def index_dataset(low_dir, gt_dir, split: str = "train") -> DatasetIndex:
    """Pair files with identical names in ``low_dir`` and ``gt_dir``.

    Files present on only one side are kept in ``orphans`` rather than silently dropped.
    """
    low_dir, gt_dir = Path(low_dir), Path(gt_dir)
    for d in (low_dir, gt_dir):
        if not d.is_dir():
            raise InvalidDataset(f"{d}: not a directory")

    def listing(d: Path) -> dict[str, Path]:
        return {p.name: p for p in d.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES}

    low, gt = listing(low_dir), listing(gt_dir)
    records = []
    for name in sorted(low.keys() & gt.keys()):
        dims = _image_size(low[name])
        gt_dims = _image_size(gt[name])
        if dims != gt_dims:
            raise InvalidDataset(f"{name}: low {dims} and gt {gt_dims} sizes differ")
        records.append(ImagePairRecord(low[name], gt[name], dims))
    orphans = sorted([low[n] for n in low.keys() - gt.keys()] + [gt[n] for n in gt.keys() - low.keys()])
    if not records:
        raise InvalidDataset(f"no paired images between {low_dir} and {gt_dir}")
    return DatasetIndex(records, split, orphans)


def index_root(root, split: str = "train") -> DatasetIndex:
    """Index the ``<root>/low`` + ``<root>/high`` layout."""
    root = Path(root)
    return index_dataset(root / "low", root / "high", split)


@dataclass(frozen=True)
class PatchSample:
    record: int
    origin: tuple[int, int]
    size: int
    hflip: bool
    vflip: bool


def sample_rng(seed: int, record: int, sample: int) -> np.random.Generator:
    """Independent stream per (seed, record, sample): order of drawing cannot matter."""
    return np.random.default_rng([seed, record, sample])


def draw_patch(record: int, h: int, w: int, size: int, rng: np.random.Generator,
               flips: bool = True) -> PatchSample:
    if h < size or w < size:
        raise InvalidArgument(f"image {h}x{w} smaller than patch {size}")
    y = int(rng.integers(0, h - size + 1))
    x = int(rng.integers(0, w - size + 1))
    hf, vf = (bool(b) for b in rng.integers(0, 2, size=2)) if flips else (False, False)
    return PatchSample(record, (y, x), size, hf, vf)


def flip(arr: np.ndarray, horizontal: bool, vertical: bool) -> np.ndarray:
    if horizontal:
        arr = arr[..., ::-1]
    if vertical:
        arr = arr[..., ::-1, :]
    return arr


def augment_flip(pair, horizontal: bool, vertical: bool):
    """Apply the same flips to both images of a pair."""
    return tuple(np.ascontiguousarray(flip(a, horizontal, vertical)) for a in pair)


def apply_patch(pair, s: PatchSample):
    y, x = s.origin
    cut = [a[..., y:y + s.size, x:x + s.size] for a in pair]
    return augment_flip(cut, s.hflip, s.vflip)


def sample_patch(pair, size: int, rng: np.random.Generator, flips: bool = True, record: int = 0):
    """Random crop (and flips) shared by the low and gt images of ``pair``."""
    h, w = pair[0].shape[-2:]
    return apply_patch(pair, draw_patch(record, h, w, size, rng, flips))


def center_crop(image, size: int):
    """Crop a ``size`` x ``size`` window at ((h - size) // 2, (w - size) // 2)."""
    arr = image.data if isinstance(image, Tensor) else np.asarray(image)
    h, w = arr.shape[-2:]
    if h < size or w < size:
        raise InvalidArgument(f"image {h}x{w} smaller than crop {size}")
    y, x = (h - size) // 2, (w - size) // 2
    out = np.ascontiguousarray(arr[..., y:y + size, x:x + size])
    return Tensor(out) if isinstance(image, Tensor) else out
