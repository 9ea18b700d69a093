from __future__ import annotations

import numpy as np
import pytest

from c3det.core import Box, ClassCatalog, GroundTruthObject, LabeledImage, RandomSource


@pytest.fixture
def catalog() -> ClassCatalog:
    return ClassCatalog(tuple(f"class{i}" for i in range(8)))


def make_image(
    image_id: str = "img",
    size: tuple[int, int] = (32, 32),
    boxes: list[tuple[float, float, float, float, int]] | None = None,
    fill: float = 0.5,
) -> LabeledImage:
    w, h = size
    pixels = np.full((h, w, 3), fill, dtype=np.float32)
    objects = tuple(
        GroundTruthObject(box=Box(x0, y0, x1, y1), class_id=c)
        for x0, y0, x1, y1, c in (boxes or [])
    )
    return LabeledImage(image_id=image_id, pixels=pixels, objects=objects)


def random_image(
    rng: RandomSource,
    image_id: str = "img",
    size: tuple[int, int] = (32, 32),
    n_objects: int = 5,
    num_classes: int = 8,
) -> LabeledImage:
    w, h = size
    gen = rng.generator
    pixels = gen.uniform(0, 1, size=(h, w, 3)).astype(np.float32)
    objects = []
    for _ in range(n_objects):
        bw = gen.uniform(3, 10)
        bh = gen.uniform(3, 10)
        x0 = gen.uniform(0, w - bw)
        y0 = gen.uniform(0, h - bh)
        objects.append(
            GroundTruthObject(
                box=Box(x0, y0, x0 + bw, y0 + bh),
                class_id=int(gen.integers(0, num_classes)),
            )
        )
    return LabeledImage(image_id=image_id, pixels=pixels, objects=tuple(objects))
