"""Deterministic synthetic multi-class tiny-object dataset generator.

Eight sprite classes (shape x color) on a cluttered background. Two class
pairs are deliberately confusable: within each pair both classes share a
shape, and their two colors are drawn per image from one distribution and
assigned to the classes at random. Which color belongs to which class is
therefore unknowable from a single detection crop, and only resolvable
from a click on an exemplar, so the interactive signal carries real
information instead of saturating.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    Box,
    ClassCatalog,
    GroundTruthObject,
    LabeledImage,
    RandomSource,
    save_dataset,
    write_json,
)

# shape, display name, fixed RGB (None for per-image pair colors)
SPRITE_CLASSES = (
    ("disk", "disk-a", None),
    ("disk", "disk-b", None),
    ("square", "square-a", None),
    ("square", "square-b", None),
    ("triangle", "triangle", (0.95, 0.80, 0.20)),
    ("plus", "plus", (0.20, 0.85, 0.90)),
    ("ring", "ring", (0.90, 0.30, 0.85)),
    ("diamond", "diamond", (0.55, 0.95, 0.35)),
)

CONFUSABLE_PAIRS = ((0, 1), (2, 3))

_PAIR_PARTNER = {a: b for a, b in CONFUSABLE_PAIRS} | {b: a for a, b in CONFUSABLE_PAIRS}

DEFAULT_CATALOG = ClassCatalog(tuple(name for _, name, _ in SPRITE_CLASSES))

_SUPERSAMPLE = 4
_ALPHA_THRESHOLD = 0.5


@dataclass
class GenConfig:
    canvas: tuple[int, int] = (256, 256)  # (W, H)
    objects_per_image: tuple[int, int] = (10, 60)
    object_size: tuple[int, int] = (6, 16)
    max_overlap_iou: float = 0.3
    background_noise: float = 0.06
    # Per-instance color jitter, roughly half the pair color gap: instances
    # of one pair class no longer share an exact color, so a single click
    # resolves the pair only approximately.
    color_jitter: float = 0.05
    # Fraction of confusable-pair instances rendered with the partner
    # class's color (label unchanged). These are unresolvable from
    # appearance alone and make click-driven correction carry weight.
    pair_flip_prob: float = 0.2
    counts: dict[str, int] = field(
        default_factory=lambda: {"train": 500, "val": 50, "test": 100}
    )
    seed: int = 0
    max_placement_attempts: int = 10_000

    def __post_init__(self) -> None:
        if self.object_size[0] < 4:
            raise ValueError("object sizes below 4 px are not renderable")
        if self.object_size[1] >= min(self.canvas):
            raise ValueError("objects must fit the canvas")


def _sprite_alpha(shape: str, size_px: float) -> np.ndarray:
    """Anti-aliased alpha mask for a sprite, rendered by supersampling."""
    n = int(np.ceil(size_px)) * _SUPERSAMPLE
    c = (n - 1) / 2.0
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    u = (xx - c) / (size_px * _SUPERSAMPLE / 2.0)
    v = (yy - c) / (size_px * _SUPERSAMPLE / 2.0)
    if shape == "disk":
        mask = u * u + v * v <= 1.0
    elif shape == "square":
        mask = (np.abs(u) <= 0.92) & (np.abs(v) <= 0.92)
    elif shape == "triangle":
        mask = (v >= -1.0) & (np.abs(u) <= (v + 1.0) / 2.0)
    elif shape == "plus":
        mask = ((np.abs(u) <= 0.34) & (np.abs(v) <= 1.0)) | (
            (np.abs(v) <= 0.34) & (np.abs(u) <= 1.0)
        )
    elif shape == "ring":
        r2 = u * u + v * v
        mask = (r2 <= 1.0) & (r2 >= 0.30)
    elif shape == "diamond":
        mask = np.abs(u) + np.abs(v) <= 1.0
    else:
        raise ValueError(f"unknown sprite shape {shape!r}")
    full = mask.astype(np.float64)
    # Box-average each SxS block back to pixel resolution.
    s = _SUPERSAMPLE
    hp = n // s
    return full[: hp * s, : hp * s].reshape(hp, s, hp, s).mean(axis=(1, 3))


def _background(rng: RandomSource, w: int, h: int, noise: float) -> np.ndarray:
    gen = rng.generator
    base = gen.uniform(0.25, 0.5, size=3)
    coarse = gen.uniform(-0.08, 0.08, size=(6, 6, 3))
    ys = np.linspace(0, 5, h)
    xs = np.linspace(0, 5, w)
    y0 = np.floor(ys).astype(int).clip(0, 4)
    x0 = np.floor(xs).astype(int).clip(0, 4)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    top = coarse[y0][:, x0] * (1 - fx) + coarse[y0][:, x0 + 1] * fx
    bot = coarse[y0 + 1][:, x0] * (1 - fx) + coarse[y0 + 1][:, x0 + 1] * fx
    texture = top * (1 - fy) + bot * fy
    img = base[None, None, :] + texture + gen.normal(0, noise, size=(h, w, 3))
    return np.clip(img, 0.0, 1.0)


def _pair_colors(gen: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Two nearby colors from one distribution, order randomized by caller."""
    base = gen.uniform(0.35, 0.75, size=3)
    c1 = np.clip(base + gen.uniform(-0.10, 0.10, size=3), 0.05, 0.98)
    c2 = np.clip(base + gen.uniform(-0.10, 0.10, size=3), 0.05, 0.98)
    return c1, c2


def _image_class_colors(rng: RandomSource) -> list[np.ndarray]:
    """Per-image color for each class; pair colors are randomly assigned."""
    gen = rng.generator
    colors: list[np.ndarray | None] = [
        None if rgb is None else np.array(rgb) for _, _, rgb in SPRITE_CLASSES
    ]
    for a, b in CONFUSABLE_PAIRS:
        c1, c2 = _pair_colors(gen)
        if gen.uniform() < 0.5:
            c1, c2 = c2, c1
        colors[a], colors[b] = c1, c2
    return colors  # type: ignore[return-value]


def _tight_box(alpha: np.ndarray, x0: int, y0: int) -> Box:
    ys, xs = np.nonzero(alpha >= _ALPHA_THRESHOLD)
    return Box(
        float(x0 + xs.min()),
        float(y0 + ys.min()),
        float(x0 + xs.max() + 1),
        float(y0 + ys.max() + 1),
    )


def _box_iou(a: Box, b: Box) -> float:
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def generate_image(
    image_id: str, cfg: GenConfig, rng: RandomSource
) -> tuple[LabeledImage, int]:
    """Render one image; returns it plus the number of placement give-ups."""
    w, h = cfg.canvas
    img = _background(rng.child("bg"), w, h, cfg.background_noise)
    colors = _image_class_colors(rng.child("colors"))
    gen = rng.child("objects").generator

    n_target = int(gen.integers(cfg.objects_per_image[0], cfg.objects_per_image[1] + 1))
    objects: list[GroundTruthObject] = []
    boxes: list[Box] = []
    dropped = 0
    for _ in range(n_target):
        class_id = int(gen.integers(0, len(SPRITE_CLASSES)))
        shape = SPRITE_CLASSES[class_id][0]
        size = float(gen.uniform(cfg.object_size[0], cfg.object_size[1]))
        alpha = _sprite_alpha(shape, size)
        ah, aw = alpha.shape
        placed = False
        for _attempt in range(cfg.max_placement_attempts):
            x0 = int(gen.integers(0, w - aw + 1))
            y0 = int(gen.integers(0, h - ah + 1))
            candidate = _tight_box(alpha, x0, y0)
            if all(_box_iou(candidate, b) <= cfg.max_overlap_iou for b in boxes):
                placed = True
                break
        if not placed:
            dropped += 1
            continue
        color_class = class_id
        partner = _PAIR_PARTNER.get(class_id)
        if partner is not None and gen.uniform() < cfg.pair_flip_prob:
            color_class = partner
        color = np.clip(
            colors[color_class] + gen.uniform(-cfg.color_jitter, cfg.color_jitter, size=3),
            0.02,
            1.0,
        )
        patch = img[y0 : y0 + ah, x0 : x0 + aw]
        patch[:] = patch * (1 - alpha[..., None]) + color[None, None, :] * alpha[..., None]
        boxes.append(candidate)
        objects.append(GroundTruthObject(box=candidate, class_id=class_id))

    pixels = np.clip(np.rint(img * 255.0), 0, 255).astype(np.float32) / 255.0
    return (
        LabeledImage(image_id=image_id, pixels=pixels, objects=tuple(objects)),
        dropped,
    )


def generate(cfg: GenConfig, out_root: Path) -> dict:
    """Generate all splits into the standard dataset layout; returns the manifest."""
    out_root = Path(out_root)
    catalog = DEFAULT_CATALOG
    manifest: dict = {
        "config": asdict(cfg),
        "classes": list(catalog.names),
        "confusable_pairs": [list(p) for p in CONFUSABLE_PAIRS],
        "splits": {},
    }
    root_rng = RandomSource(cfg.seed, "synthgen")
    for split, count in cfg.counts.items():
        images = []
        dropped_total = 0
        class_counts = [0] * catalog.num_classes
        for i in range(count):
            image_id = f"{split}_{i:05d}"
            img, dropped = generate_image(
                image_id, cfg, root_rng.child(f"{split}/{image_id}")
            )
            dropped_total += dropped
            for obj in img.objects:
                class_counts[obj.class_id] += 1
            images.append(img)
        save_dataset(images, out_root, split, catalog, image_size=cfg.canvas)
        manifest["splits"][split] = {
            "images": count,
            "objects": sum(class_counts),
            "objects_per_class": class_counts,
            "placement_dropped": dropped_total,
        }
    write_json(out_root / "manifest.json", manifest)
    return manifest


__all__ = [
    "GenConfig",
    "SPRITE_CLASSES",
    "CONFUSABLE_PAIRS",
    "DEFAULT_CATALOG",
    "generate",
    "generate_image",
]
