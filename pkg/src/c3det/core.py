"""Domain types, dataset on-disk format, and deterministic random streams."""

from __future__ import annotations

import hashlib
import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

SPLITS = ("train", "val", "test")

# Default catalog for the DOTA text import shim: the 8 tiny-object classes.
DOTA_TINY_CLASSES = (
    "plane",
    "bridge",
    "small-vehicle",
    "large-vehicle",
    "ship",
    "storage-tank",
    "swimming-pool",
    "helicopter",
)


class DatasetError(Exception):
    """A dataset on disk violates the expected format or an invariant."""


@dataclass(frozen=True)
class ClassCatalog:
    """Ordered set of class labels; class indices are 0..num_classes-1."""

    names: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"class names must be unique, got {self.names}")
        if not self.names:
            raise ValueError("catalog must contain at least one class")

    @property
    def num_classes(self) -> int:
        return len(self.names)

    def validate_class_id(self, class_id: int) -> None:
        if not 0 <= class_id < self.num_classes:
            raise ValueError(
                f"class_id {class_id} out of range [0, {self.num_classes})"
            )


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in pixels, origin top-left, y downward."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box {self.as_tuple()}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


@dataclass(frozen=True)
class GroundTruthObject:
    box: Box
    class_id: int


@dataclass(frozen=True, eq=False)
class LabeledImage:
    """An image with its ground-truth class-labeled boxes."""

    image_id: str
    pixels: np.ndarray  # (H, W, 3) float32 in [0, 1]
    objects: tuple[GroundTruthObject, ...]

    def __post_init__(self) -> None:
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"pixels must be HxWx3, got {self.pixels.shape}")
        h, w = self.pixels.shape[:2]
        for obj in self.objects:
            b = obj.box
            if b.x_min < 0 or b.y_min < 0 or b.x_max > w or b.y_max > h:
                raise ValueError(
                    f"image {self.image_id!r}: box {b.as_tuple()} outside "
                    f"{w}x{h} image bounds"
                )

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def num_objects(self) -> int:
        return len(self.objects)


@dataclass(frozen=True)
class UserInput:
    """A 2D click position plus an object-class index.

    gt_index records which ground-truth object a synthesized click came
    from; it is None for clicks made by a live user.
    """

    x: float
    y: float
    class_id: int
    gt_index: int | None = None


@dataclass(frozen=True)
class Detection:
    box: Box
    class_id: int
    score: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


class RandomSource:
    """Deterministic random stream keyed by (seed, stream_id).

    Identical (seed, stream_id) pairs produce identical draw sequences on
    every platform (PCG64 seeded from a SHA-256 of the key). The key is
    immutable; use child() to derive independent streams for concurrent
    work instead of sharing one instance.
    """

    def __init__(self, seed: int, stream_id: str = "") -> None:
        self.seed = int(seed)
        self.stream_id = stream_id
        digest = hashlib.sha256(f"{self.seed}|{stream_id}".encode()).digest()
        self._gen = np.random.Generator(
            np.random.PCG64(int.from_bytes(digest[:16], "little"))
        )

    def child(self, suffix: str) -> "RandomSource":
        return RandomSource(self.seed, f"{self.stream_id}/{suffix}")

    def integers(self, low: int, high: int) -> int:
        """Draw one integer uniformly from [low, high] inclusive."""
        return int(self._gen.integers(low, high + 1))

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        return float(self._gen.uniform(low, high))

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def choice_without_replacement(self, n: int, k: int) -> list[int]:
        """Sample k distinct indices from range(n)."""
        return [int(i) for i in self._gen.choice(n, size=k, replace=False)]

    def shuffled(self, items: list) -> list:
        out = list(items)
        self._gen.shuffle(out)
        return out

    @property
    def generator(self) -> np.random.Generator:
        return self._gen


def _canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path: Path, obj) -> None:
    """Write canonical JSON (stable byte-for-byte for identical content)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_canonical_json(obj), encoding="utf-8")


def read_json(path: Path):
    return json.loads(path.read_text(encoding="utf-8"))


def load_catalog(root: Path) -> ClassCatalog:
    meta_path = Path(root) / "meta.json"
    if not meta_path.is_file():
        raise DatasetError(f"missing meta file: {meta_path}")
    meta = read_json(meta_path)
    return ClassCatalog(tuple(meta["classes"]))


def load_dataset(root: Path, split: str) -> list[LabeledImage]:
    """Load one split; returns images sorted by image_id.

    Layout:
      root/meta.json                      {"classes": [...], "image_size": [W, H]}
      root/images/{split}/{image_id}.png
      root/labels/{split}/{image_id}.json {"objects": [{"class_id", "bbox"}]}
    """
    root = Path(root)
    if split not in SPLITS:
        raise DatasetError(f"unknown split {split!r}, expected one of {SPLITS}")
    catalog = load_catalog(root)
    images_dir = root / "images" / split
    labels_dir = root / "labels" / split
    if not images_dir.is_dir():
        raise DatasetError(f"missing images directory: {images_dir}")

    out: list[LabeledImage] = []
    for img_path in sorted(images_dir.glob("*.png")):
        image_id = img_path.stem
        label_path = labels_dir / f"{image_id}.json"
        if not label_path.is_file():
            raise DatasetError(f"image {image_id!r}: missing label file {label_path}")
        pixels = np.asarray(Image.open(img_path).convert("RGB"), dtype=np.float32)
        pixels /= 255.0
        label = read_json(label_path)
        objects = []
        for i, entry in enumerate(label.get("objects", [])):
            class_id = int(entry["class_id"])
            if not 0 <= class_id < catalog.num_classes:
                raise DatasetError(
                    f"image {image_id!r}: object {i} in {label_path} has "
                    f"class_id {class_id} >= {catalog.num_classes}"
                )
            try:
                box = Box(*[float(v) for v in entry["bbox"]])
            except ValueError as exc:
                raise DatasetError(
                    f"image {image_id!r}: object {i} in {label_path}: {exc}"
                ) from exc
            objects.append(GroundTruthObject(box=box, class_id=class_id))
        try:
            out.append(
                LabeledImage(image_id=image_id, pixels=pixels, objects=tuple(objects))
            )
        except ValueError as exc:
            raise DatasetError(str(exc)) from exc
    return out


def save_dataset(
    images: list[LabeledImage],
    root: Path,
    split: str,
    catalog: ClassCatalog,
    image_size: tuple[int, int] | None = None,
    write_pixels: bool = True,
) -> None:
    """Write a split in the on-disk format; label files are canonical JSON.

    Loading then saving a dataset reproduces its label files byte for byte.
    """
    root = Path(root)
    if image_size is None and images:
        image_size = (images[0].width, images[0].height)
    write_json(
        root / "meta.json",
        {"classes": list(catalog.names), "image_size": list(image_size or (0, 0))},
    )
    for img in images:
        if write_pixels:
            arr = np.clip(np.rint(img.pixels * 255.0), 0, 255).astype(np.uint8)
            img_path = root / "images" / split / f"{img.image_id}.png"
            img_path.parent.mkdir(parents=True, exist_ok=True)
            Image.fromarray(arr).save(img_path)
        write_json(
            root / "labels" / split / f"{img.image_id}.json",
            {
                "objects": [
                    {"bbox": list(o.box.as_tuple()), "class_id": o.class_id}
                    for o in img.objects
                ]
            },
        )


@dataclass
class ImportReport:
    """Outcome of a DOTA-text import."""

    images_imported: int = 0
    objects_per_class: dict[str, int] = field(default_factory=dict)
    skipped_unknown: dict[str, int] = field(default_factory=dict)
    skipped_degenerate: int = 0
    malformed_lines: list[str] = field(default_factory=list)

    def total_objects(self) -> int:
        return sum(self.objects_per_class.values())


def _polygon_envelope(coords: list[float]) -> tuple[float, float, float, float]:
    xs = coords[0::2]
    ys = coords[1::2]
    return (min(xs), min(ys), max(xs), max(ys))


def import_dota(
    text_dir: Path,
    out_root: Path,
    classes: tuple[str, ...] = DOTA_TINY_CLASSES,
    split: str = "train",
    image_size: tuple[int, int] = (1024, 1024),
) -> ImportReport:
    """Import DOTA-style text labels (8 polygon coords + class [+ difficulty]).

    Each polygon collapses to its axis-aligned envelope. Unknown class names
    are skipped and counted; malformed lines are reported and skipped without
    aborting the file. Images (PNG) are copied over when present next to the
    labels under an images/ directory.
    """
    text_dir = Path(text_dir)
    out_root = Path(out_root)
    label_dir = text_dir / "labelTxt"
    if not label_dir.is_dir():
        label_dir = text_dir
    catalog = ClassCatalog(tuple(classes))
    class_index = {name: i for i, name in enumerate(catalog.names)}
    report = ImportReport(objects_per_class={name: 0 for name in catalog.names})

    write_json(
        out_root / "meta.json",
        {"classes": list(catalog.names), "image_size": list(image_size)},
    )
    w, h = image_size

    for txt_path in sorted(label_dir.glob("*.txt")):
        image_id = txt_path.stem
        objects = []
        for line_no, line in enumerate(txt_path.read_text().splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith(("imagesource:", "gsd:")):
                continue
            tokens = line.split()
            if len(tokens) not in (9, 10):
                report.malformed_lines.append(
                    f"{txt_path.name}:{line_no}: expected 9 or 10 tokens, "
                    f"got {len(tokens)}"
                )
                continue
            try:
                coords = [float(t) for t in tokens[:8]]
            except ValueError:
                report.malformed_lines.append(
                    f"{txt_path.name}:{line_no}: non-numeric coordinate"
                )
                continue
            name = tokens[8]
            if name not in class_index:
                report.skipped_unknown[name] = report.skipped_unknown.get(name, 0) + 1
                continue
            x0, y0, x1, y1 = _polygon_envelope(coords)
            # Clamp to the patch; drop envelopes that collapse at the border.
            x0, y0 = max(0.0, x0), max(0.0, y0)
            x1, y1 = min(float(w), x1), min(float(h), y1)
            if not (x0 < x1 and y0 < y1):
                report.skipped_degenerate += 1
                continue
            objects.append(
                {"bbox": [x0, y0, x1, y1], "class_id": class_index[name]}
            )
            report.objects_per_class[name] += 1
        write_json(out_root / "labels" / split / f"{image_id}.json", {"objects": objects})
        src_img = text_dir / "images" / f"{image_id}.png"
        if src_img.is_file():
            dst = out_root / "images" / split / f"{image_id}.png"
            dst.parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(src_img, dst)
        report.images_imported += 1
    return report


def flip_horizontal(img: LabeledImage) -> LabeledImage:
    """Mirror an image and its boxes about the vertical axis."""
    w = img.width
    flipped = np.ascontiguousarray(img.pixels[:, ::-1, :])
    objects = tuple(
        GroundTruthObject(
            box=Box(w - o.box.x_max, o.box.y_min, w - o.box.x_min, o.box.y_max),
            class_id=o.class_id,
        )
        for o in img.objects
    )
    return LabeledImage(image_id=img.image_id, pixels=flipped, objects=objects)


__all__ = [
    "SPLITS",
    "DOTA_TINY_CLASSES",
    "DatasetError",
    "ClassCatalog",
    "Box",
    "GroundTruthObject",
    "LabeledImage",
    "UserInput",
    "Detection",
    "RandomSource",
    "ImportReport",
    "load_catalog",
    "load_dataset",
    "save_dataset",
    "import_dota",
    "flip_horizontal",
    "write_json",
    "read_json",
]
