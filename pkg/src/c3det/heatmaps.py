"""Gaussian click heatmaps: rendering, class-wise collation, resize+normalize."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Rendered values beyond this many sigmas from the center are exactly zero;
# at the cutoff the Gaussian is already below 0.012% of its peak.
TRUNCATION_RADIUS_SIGMAS = 3.0

SUM_EPSILON = 1e-12


@dataclass(frozen=True, eq=False)
class Heatmap:
    """Non-negative 2D map; sigma records the Gaussian it was rendered with."""

    values: np.ndarray  # (H, W) float64
    sigma: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]


@dataclass(frozen=True, eq=False)
class ClassHeatmapStack:
    """One collated map per class; classes without inputs hold all zeros."""

    values: np.ndarray  # (C, H, W) float64

    @property
    def num_classes(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape[1:]  # type: ignore[return-value]


def render_gaussian(
    pos: tuple[float, float], sigma: float, shape: tuple[int, int]
) -> Heatmap:
    """Render exp(-((px-x)^2 + (py-y)^2) / (2 sigma^2)) on an HxW grid.

    The peak value is 1 at the continuous center; values farther than
    3 sigma from the center are truncated to exactly 0.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    x, y = pos
    h, w = shape
    if not (0 <= x <= w and 0 <= y <= h):
        raise ValueError(f"position {pos} outside {w}x{h} image")
    px = np.arange(w, dtype=np.float64)
    py = np.arange(h, dtype=np.float64)
    d2 = (px[None, :] - x) ** 2 + (py[:, None] - y) ** 2
    values = np.exp(-d2 / (2.0 * sigma * sigma))
    values[d2 > (TRUNCATION_RADIUS_SIGMAS * sigma) ** 2] = 0.0
    return Heatmap(values=values, sigma=float(sigma))


def collate_by_class(
    inputs: list[tuple[Heatmap, int]],
    num_classes: int,
    shape: tuple[int, int],
) -> ClassHeatmapStack:
    """Pixel-wise max of each class's heatmaps; zero map for classes without any."""
    stack = np.zeros((num_classes, *shape), dtype=np.float64)
    for hm, class_id in inputs:
        if hm.values.shape != tuple(shape):
            raise ValueError(
                f"heatmap shape {hm.values.shape} does not match {tuple(shape)}"
            )
        if not 0 <= class_id < num_classes:
            raise ValueError(f"class_id {class_id} out of range [0, {num_classes})")
        np.maximum(stack[class_id], hm.values, out=stack[class_id])
    return ClassHeatmapStack(values=stack)


def _bilinear_resize(values: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Half-pixel-centered bilinear resize (edge-clamped)."""
    h, w = values.shape
    th, tw = target
    sy = np.clip((np.arange(th, dtype=np.float64) + 0.5) * (h / th) - 0.5, 0, h - 1)
    sx = np.clip((np.arange(tw, dtype=np.float64) + 0.5) * (w / tw) - 0.5, 0, w - 1)
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (sy - y0)[:, None]
    fx = (sx - x0)[None, :]
    top = values[y0][:, x0] * (1 - fx) + values[y0][:, x1] * fx
    bot = values[y1][:, x0] * (1 - fx) + values[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def resize_normalize(hm: Heatmap, target: tuple[int, int]) -> Heatmap:
    """Bilinear-resize to target and scale so the result sums to 1.

    An all-zero input cannot be normalized and signals a logic error
    upstream: per-input heatmaps always contain a rendered Gaussian.
    """
    resized = _bilinear_resize(hm.values, target)
    total = float(resized.sum())
    if total <= SUM_EPSILON:
        raise ValueError("cannot normalize a heatmap with zero mass")
    return Heatmap(values=resized / total, sigma=hm.sigma)


__all__ = [
    "Heatmap",
    "ClassHeatmapStack",
    "render_gaussian",
    "collate_by_class",
    "resize_normalize",
    "TRUNCATION_RADIUS_SIGMAS",
]
