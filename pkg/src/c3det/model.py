"""Click-guided detection network.

The network reads an image plus user clicks and predicts class-labeled
boxes for as many objects as possible, including classes the user never
clicked. Clicks enter through two pathways with a fixed interface width:

  * a late-fusion extractor over class-collated click heatmaps (local
    context around each click), and
  * class-wise collated correlation: per-click template vectors pooled
    from the image features, correlated back against the whole feature
    map and merged class-wise by element-wise max (global context).

Both pathway outputs are concatenated to the image features and projected
by a 1x1 convolution before a dense anchor-free head. Variants toggle the
pathways to realize the baselines and ablations.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from . import heatmaps
from .core import Box, ClassCatalog, Detection, GroundTruthObject, LabeledImage, UserInput

CHECKPOINT_VERSION = 1

# Relative box-regression weight of non-center interior cells: large
# enough that interior cells decode roughly the right box (so their
# residual detections overlap the main one and die in NMS), small enough
# not to dilute center-cell precision.
BOX_INTERIOR_WEIGHT = 0.1

VARIANTS = (
    "full",
    "lf_only",
    "c3_only",
    "no_uel",
    "collate_then_correlate",
    "early_fusion",
    "late_fusion_baseline",
    "detector_only",
)

_USES_LF = {"full", "lf_only", "no_uel", "collate_then_correlate", "late_fusion_baseline"}
_USES_C3 = {"full", "c3_only", "no_uel", "collate_then_correlate"}
_USES_UEL = {"full", "lf_only", "c3_only", "collate_then_correlate"}


class ModelError(Exception):
    pass


@dataclass
class ModelConfig:
    backbone_channels: int = 64
    stride: int = 4
    lf_channels: int = 64
    fusion_proj_channels: int = 64
    variant: str = "full"
    lambda_uel: float = 1.0
    sigma_lf: float = 1.0
    sigma_c3: float = 1.0
    sigma_early: float = 9.0
    # Decode / loss plumbing.
    score_thr: float = 0.05
    nms_iou: float = 0.5
    top_n: int = 300
    # The click-consistency loss sees the detector's actual predictions:
    # cells above the same score threshold decode uses, after class-wise
    # NMS. A lower floor (or "pre_nms") lets the loss sharpen the class
    # scores of sub-threshold background cells, ratcheting ever more of
    # them past the decode threshold as false positives; measured at desk
    # scale this doubles the detection count and costs several mAP points.
    uel_score_floor: float = 0.05
    uel_top_n: int = 300
    uel_ell: str = "focal"  # focal-style main loss, so ell follows it
    uel_candidates: str = "post_nms"
    input_mean: tuple[float, float, float] = (0.5, 0.5, 0.5)
    input_std: tuple[float, float, float] = (0.25, 0.25, 0.25)

    def __post_init__(self) -> None:
        if self.stride not in (2, 4, 8):
            raise ValueError(f"stride must be 2, 4 or 8, got {self.stride}")
        for name in ("backbone_channels", "lf_channels", "fusion_proj_channels"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.uel_ell not in ("cross_entropy", "focal"):
            raise ValueError(f"uel_ell must be cross_entropy or focal, got {self.uel_ell}")
        if self.uel_candidates not in ("pre_nms", "post_nms"):
            raise ValueError(
                f"uel_candidates must be pre_nms or post_nms, got {self.uel_candidates}"
            )

    @property
    def uses_lf(self) -> bool:
        return self.variant in _USES_LF

    @property
    def uses_c3(self) -> bool:
        return self.variant in _USES_C3

    @property
    def uses_uel(self) -> bool:
        return self.variant in _USES_UEL

    @property
    def early_fusion(self) -> bool:
        return self.variant == "early_fusion"

    @property
    def ignores_inputs(self) -> bool:
        return self.variant == "detector_only"

    @property
    def c3_order(self) -> str:
        if self.variant == "collate_then_correlate":
            return "collate_then_correlate"
        return "correlate_then_collate"

    @property
    def effective_lambda_uel(self) -> float:
        return self.lambda_uel if self.uses_uel else 0.0


@dataclass
class HeadOutput:
    """Dense per-cell predictions on the fused feature grid."""

    class_logits: Tensor  # (B, C, Hf, Wf)
    objectness: Tensor  # (B, 1, Hf, Wf)
    box_deltas: Tensor  # (B, 4, Hf, Wf): dx, dy, log w, log h in stride units

    @property
    def grid_shape(self) -> tuple[int, int]:
        return tuple(self.class_logits.shape[-2:])  # type: ignore[return-value]


# ---------------------------------------------------------------------------
# Correlation pathway primitives
# ---------------------------------------------------------------------------


def extract_template(feats: Tensor, weights: Tensor) -> Tensor:
    """Weighted global sum pooling: per channel i, sum_xy feats[i,x,y] * weights[x,y].

    weights is a click heatmap resized to the feature grid and normalized to
    sum to 1, so the template is a weighted average of feature columns.
    """
    if feats.shape[-2:] != weights.shape:
        raise ValueError(
            f"feature grid {tuple(feats.shape[-2:])} does not match "
            f"weight map {tuple(weights.shape)}"
        )
    return torch.einsum("chw,hw->c", feats, weights)


def correlate(template: Tensor, feats: Tensor) -> Tensor:
    """Dot product of the template with every spatial column of the feature map."""
    if template.shape[0] != feats.shape[0]:
        raise ValueError(
            f"template length {template.shape[0]} does not match "
            f"{feats.shape[0]} feature channels"
        )
    return torch.einsum("c,chw->hw", template, feats)


def collate_correlations(
    maps: list[tuple[Tensor, int]],
    num_classes: int,
    shape: tuple[int, int],
    device=None,
    dtype=None,
) -> Tensor:
    """Element-wise max of each class's correlation maps into a fixed
    (num_classes, H, W) tensor; classes without maps get zeros."""
    if maps:
        device = maps[0][0].device
        dtype = maps[0][0].dtype
    by_class: dict[int, list[Tensor]] = {}
    for m, class_id in maps:
        if tuple(m.shape) != tuple(shape):
            raise ValueError(f"correlation map shape {tuple(m.shape)} != {tuple(shape)}")
        by_class.setdefault(class_id, []).append(m)
    channels = []
    for c in range(num_classes):
        group = by_class.get(c)
        if group:
            channels.append(torch.amax(torch.stack(group), dim=0))
        else:
            channels.append(torch.zeros(shape, device=device, dtype=dtype))
    return torch.stack(channels)


def _feature_res_heatmap(
    inp: UserInput,
    image_size: tuple[int, int],
    feat_shape: tuple[int, int],
    sigma: float,
    normalize: bool = True,
) -> np.ndarray:
    w, h = image_size
    rendered = heatmaps.render_gaussian((inp.x, inp.y), sigma, (h, w))
    if normalize:
        return heatmaps.resize_normalize(rendered, feat_shape).values
    return heatmaps._bilinear_resize(rendered.values, feat_shape)


def c3_forward(
    feats: Tensor,
    inputs: list[UserInput],
    image_size: tuple[int, int],
    num_classes: int,
    sigma: float,
    order: str = "correlate_then_collate",
) -> Tensor:
    """Correlation pathway for one sample: (C, Hf, Wf) whatever K is.

    correlate_then_collate extracts one template per click and merges the
    per-click correlation maps class-wise. collate_then_correlate first
    merges the normalized click heatmaps class-wise (max, then renormalized
    to sum 1) and extracts a single template per class.
    """
    feat_shape = tuple(feats.shape[-2:])
    if order == "correlate_then_collate":
        maps = []
        for inp in inputs:
            weights = torch.as_tensor(
                _feature_res_heatmap(inp, image_size, feat_shape, sigma),
                device=feats.device,
                dtype=feats.dtype,
            )
            template = extract_template(feats, weights)
            maps.append((correlate(template, feats), inp.class_id))
        return collate_correlations(
            maps, num_classes, feat_shape, device=feats.device, dtype=feats.dtype
        )
    if order == "collate_then_correlate":
        per_class: dict[int, np.ndarray] = {}
        for inp in inputs:
            hm = _feature_res_heatmap(inp, image_size, feat_shape, sigma)
            if inp.class_id in per_class:
                per_class[inp.class_id] = np.maximum(per_class[inp.class_id], hm)
            else:
                per_class[inp.class_id] = hm
        channels = []
        for c in range(num_classes):
            if c in per_class:
                combined = per_class[c] / per_class[c].sum()
                weights = torch.as_tensor(
                    combined, device=feats.device, dtype=feats.dtype
                )
                channels.append(correlate(extract_template(feats, weights), feats))
            else:
                channels.append(
                    torch.zeros(feat_shape, device=feats.device, dtype=feats.dtype)
                )
        return torch.stack(channels)
    raise ValueError(f"unknown order {order!r}")


# ---------------------------------------------------------------------------
# Network modules
# ---------------------------------------------------------------------------


def _group_norm(channels: int) -> nn.GroupNorm:
    return nn.GroupNorm(math.gcd(channels, 8), channels)


class _Trunk(nn.Module):
    """Small conv feature extractor: 3x3 blocks, stride-2 downsampling,
    per-channel affine standardization at the output (bounds the scale of
    downstream correlation maps). No pooling anywhere."""

    def __init__(self, in_channels: int, out_channels: int, stride: int) -> None:
        super().__init__()
        n_down = int(math.log2(stride))
        layers: list[nn.Module] = []
        ch_in = in_channels
        for _ in range(n_down):
            layers += [
                nn.Conv2d(ch_in, out_channels, 3, stride=2, padding=1),
                _group_norm(out_channels),
                nn.ReLU(inplace=True),
            ]
            ch_in = out_channels
        for _ in range(2):
            layers += [
                nn.Conv2d(ch_in, out_channels, 3, padding=1),
                _group_norm(out_channels),
                nn.ReLU(inplace=True),
            ]
            ch_in = out_channels
        self.body = nn.Sequential(*layers)
        self.out_norm = nn.GroupNorm(out_channels, out_channels)

    def forward(self, x: Tensor) -> Tensor:
        return self.out_norm(self.body(x))


class C3DetNet(nn.Module):
    """Backbone + click pathways + fusion + dense single-stage head."""

    def __init__(self, num_classes: int, cfg: ModelConfig | None = None) -> None:
        super().__init__()
        self.cfg = cfg or ModelConfig()
        self.num_classes = num_classes
        in_ch = 3 + (num_classes if self.cfg.early_fusion else 0)
        self.backbone = _Trunk(in_ch, self.cfg.backbone_channels, self.cfg.stride)
        self.lf_extractor = (
            _Trunk(num_classes, self.cfg.lf_channels, self.cfg.stride)
            if self.cfg.uses_lf
            else None
        )
        fuse_in = self.cfg.backbone_channels + self.cfg.lf_channels + num_classes
        proj = self.cfg.fusion_proj_channels
        self.fuse_proj = nn.Conv2d(fuse_in, proj, 1)
        # Separate classification and box-regression subnets on the fused map.
        self.cls_tower = nn.Sequential(
            nn.Conv2d(proj, proj, 3, padding=1), _group_norm(proj), nn.ReLU(inplace=True)
        )
        self.box_tower = nn.Sequential(
            nn.Conv2d(proj, proj, 3, padding=1), _group_norm(proj), nn.ReLU(inplace=True)
        )
        self.head_cls = nn.Conv2d(proj, num_classes, 1)
        self.head_obj = nn.Conv2d(proj, 1, 1)
        self.head_box = nn.Conv2d(proj, 4, 1)
        # Rare-positive prior keeps early objectness loss small.
        nn.init.constant_(self.head_obj.bias, -4.6)
        mean = torch.tensor(self.cfg.input_mean).view(1, 3, 1, 1)
        std = torch.tensor(self.cfg.input_std).view(1, 3, 1, 1)
        self.register_buffer("pix_mean", mean)
        self.register_buffer("pix_std", std)

    # -- click encodings ----------------------------------------------------

    def _class_stack(
        self, inputs: list[UserInput], image_size: tuple[int, int], sigma: float
    ) -> np.ndarray:
        w, h = image_size
        rendered = [
            (heatmaps.render_gaussian((i.x, i.y), sigma, (h, w)), i.class_id)
            for i in inputs
        ]
        return heatmaps.collate_by_class(rendered, self.num_classes, (h, w)).values

    def forward(
        self, images: Tensor, inputs_per_sample: list[list[UserInput]]
    ) -> HeadOutput:
        """images: (B, 3, H, W) in [0, 1]; one click list per sample."""
        if images.ndim != 4 or images.shape[1] != 3:
            raise ValueError(f"expected (B, 3, H, W) images, got {tuple(images.shape)}")
        if len(inputs_per_sample) != images.shape[0]:
            raise ValueError("one user-input list required per batch sample")
        batch, _, h, w = images.shape
        image_size = (w, h)
        if self.cfg.ignores_inputs:
            inputs_per_sample = [[] for _ in range(batch)]

        x = (images - self.pix_mean) / self.pix_std
        if self.cfg.early_fusion:
            stacks = np.stack(
                [
                    self._class_stack(inp, image_size, self.cfg.sigma_early)
                    for inp in inputs_per_sample
                ]
            )
            x = torch.cat(
                [x, torch.as_tensor(stacks, device=x.device, dtype=x.dtype)], dim=1
            )
        image_feats = self.backbone(x)
        feat_shape = tuple(image_feats.shape[-2:])

        if self.lf_extractor is not None:
            stacks = np.stack(
                [
                    self._class_stack(inp, image_size, self.cfg.sigma_lf)
                    for inp in inputs_per_sample
                ]
            )
            lf_feats = self.lf_extractor(
                torch.as_tensor(stacks, device=x.device, dtype=x.dtype)
            )
        else:
            lf_feats = torch.zeros(
                (batch, self.cfg.lf_channels, *feat_shape),
                device=x.device,
                dtype=image_feats.dtype,
            )

        if self.cfg.uses_c3:
            corr_feats = torch.stack(
                [
                    c3_forward(
                        image_feats[b],
                        inputs_per_sample[b],
                        image_size,
                        self.num_classes,
                        self.cfg.sigma_c3,
                        self.cfg.c3_order,
                    )
                    for b in range(batch)
                ]
            )
        else:
            corr_feats = torch.zeros(
                (batch, self.num_classes, *feat_shape),
                device=x.device,
                dtype=image_feats.dtype,
            )

        fused = F.relu(self.fuse_proj(torch.cat([image_feats, lf_feats, corr_feats], 1)))
        cls_feats = self.cls_tower(fused)
        box_feats = self.box_tower(fused)
        return HeadOutput(
            class_logits=self.head_cls(cls_feats),
            objectness=self.head_obj(cls_feats),
            box_deltas=self.head_box(box_feats),
        )

    @torch.no_grad()
    def infer(
        self,
        image: LabeledImage | np.ndarray,
        clicks: list[UserInput],
        score_thr: float | None = None,
    ) -> list[Detection]:
        """Detections for one image given the clicks so far."""
        pixels = image.pixels if isinstance(image, LabeledImage) else image
        was_training = self.training
        self.eval()
        try:
            tensor = torch.from_numpy(
                np.ascontiguousarray(pixels.transpose(2, 0, 1))[None]
            ).to(next(self.parameters()).dtype)
            out = self.forward(tensor, [clicks])
        finally:
            self.train(was_training)
        return decode(
            out,
            self.cfg,
            sample=0,
            score_thr=self.cfg.score_thr if score_thr is None else score_thr,
        )


# ---------------------------------------------------------------------------
# Decoding
# ---------------------------------------------------------------------------


def _decode_cells(
    out: HeadOutput, cfg: ModelConfig, sample: int
) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """Per-cell decoded boxes (N, 4), scores (N,), classes (N,), logits (N, C)."""
    hf, wf = out.grid_shape
    stride = float(cfg.stride)
    logits = out.class_logits[sample].permute(1, 2, 0).reshape(-1, out.class_logits.shape[1])
    obj = out.objectness[sample].reshape(-1)
    deltas = out.box_deltas[sample].permute(1, 2, 0).reshape(-1, 4)

    ys, xs = torch.meshgrid(
        torch.arange(hf, dtype=logits.dtype, device=logits.device),
        torch.arange(wf, dtype=logits.dtype, device=logits.device),
        indexing="ij",
    )
    cell_cx = (xs.reshape(-1) + 0.5) * stride
    cell_cy = (ys.reshape(-1) + 0.5) * stride
    cx = cell_cx + deltas[:, 0] * stride
    cy = cell_cy + deltas[:, 1] * stride
    bw = stride * torch.exp(deltas[:, 2])
    bh = stride * torch.exp(deltas[:, 3])
    boxes = torch.stack([cx - bw / 2, cy - bh / 2, cx + bw / 2, cy + bh / 2], dim=1)

    probs = torch.softmax(logits, dim=1)
    best_prob, best_class = probs.max(dim=1)
    scores = torch.sigmoid(obj) * best_prob
    return boxes, scores, best_class, logits


def _box_iou_matrix(a: Tensor, b: Tensor) -> Tensor:
    """Pairwise IoU between (N, 4) and (M, 4) xyxy boxes."""
    area_a = (a[:, 2] - a[:, 0]).clamp(min=0) * (a[:, 3] - a[:, 1]).clamp(min=0)
    area_b = (b[:, 2] - b[:, 0]).clamp(min=0) * (b[:, 3] - b[:, 1]).clamp(min=0)
    lt = torch.maximum(a[:, None, :2], b[None, :, :2])
    rb = torch.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = (rb - lt).clamp(min=0)
    inter = wh[..., 0] * wh[..., 1]
    union = area_a[:, None] + area_b[None, :] - inter
    return torch.where(union > 0, inter / union, torch.zeros_like(inter))


def _nms_class_wise(
    boxes: Tensor, scores: Tensor, classes: Tensor, nms_iou: float
) -> Tensor:
    """Indices kept by greedy score-descending NMS within each class."""
    order = torch.argsort(scores, descending=True, stable=True)
    keep: list[int] = []
    suppressed = torch.zeros(len(order), dtype=torch.bool)
    ious = _box_iou_matrix(boxes, boxes)
    for oi in range(len(order)):
        i = int(order[oi])
        if suppressed[i]:
            continue
        keep.append(i)
        same = classes == classes[i]
        suppressed |= same & (ious[i] > nms_iou)
    return torch.tensor(keep, dtype=torch.long)


def decode(
    out: HeadOutput,
    cfg: ModelConfig,
    sample: int = 0,
    score_thr: float | None = None,
    nms_iou: float | None = None,
    top_n: int | None = None,
) -> list[Detection]:
    """Convert per-cell predictions to final detections (class-wise NMS)."""
    score_thr = cfg.score_thr if score_thr is None else score_thr
    nms_iou = cfg.nms_iou if nms_iou is None else nms_iou
    top_n = cfg.top_n if top_n is None else top_n
    boxes, scores, classes, _ = _decode_cells(out, cfg, sample)
    mask = scores > score_thr
    if not bool(mask.any()):
        return []
    boxes, scores, classes = boxes[mask], scores[mask], classes[mask]
    keep = _nms_class_wise(boxes, scores, classes, nms_iou)
    keep = keep[torch.argsort(scores[keep], descending=True, stable=True)][:top_n]
    dets = []
    for i in keep.tolist():
        x0, y0, x1, y1 = (float(v) for v in boxes[i])
        dets.append(
            Detection(
                box=Box(x0, y0, x1, y1),
                class_id=int(classes[i]),
                score=min(1.0, max(0.0, float(scores[i]))),
            )
        )
    return dets


def decode_candidates(
    out: HeadOutput, cfg: ModelConfig, sample: int
) -> tuple[Tensor, Tensor, Tensor]:
    """Decoded candidates for the click-consistency loss.

    Returns detached boxes (J, 4), the corresponding class logits (J, C)
    which stay connected to the graph (the loss differentiates through
    class logits only), and detached objectness probabilities (J,).
    Candidates are cells scoring above the floor, optionally reduced by
    class-wise NMS (uel_candidates="post_nms"), capped at uel_top_n by
    score.
    """
    boxes, scores, classes, logits = _decode_cells(out, cfg, sample)
    obj = torch.sigmoid(out.objectness[sample].reshape(-1))
    idx = torch.nonzero(scores > cfg.uel_score_floor).reshape(-1)
    if idx.numel() > cfg.uel_top_n:
        sub = torch.argsort(scores[idx], descending=True, stable=True)[: cfg.uel_top_n]
        idx = idx[sub]
    if cfg.uel_candidates == "post_nms" and idx.numel() > 0:
        with torch.no_grad():
            keep = _nms_class_wise(
                boxes[idx].detach(), scores[idx].detach(), classes[idx], cfg.nms_iou
            )
        idx = idx[keep]
    return boxes[idx].detach(), logits[idx], obj[idx].detach()


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def assign_targets(
    gts: list[GroundTruthObject] | tuple[GroundTruthObject, ...],
    grid_shape: tuple[int, int],
    stride: int,
    device=None,
    dtype=torch.float32,
) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """Per-cell targets: objectness and class at each object's center cell
    (first object wins a contested center); box deltas at the center cell
    plus every interior cell (smallest box wins contested interiors).

    Returns (objectness (Hf,Wf), class (Hf,Wf) long with -1 for background,
    box targets (4,Hf,Wf), box weights (Hf,Wf)). Box weights are 1 at
    center cells and BOX_INTERIOR_WEIGHT at other interior cells: interior
    cells must decode to roughly the right box (their residual detections
    then die in NMS as duplicates) without diluting center-cell precision.
    """
    hf, wf = grid_shape
    obj_t = np.zeros((hf, wf), dtype=np.float64)
    cls_t = np.full((hf, wf), -1, dtype=np.int64)
    box_t = np.zeros((4, hf, wf), dtype=np.float64)
    box_w = np.zeros((hf, wf), dtype=np.float64)
    area_t = np.full((hf, wf), np.inf, dtype=np.float64)

    def box_targets(gt: GroundTruthObject, ii: np.ndarray, jj: np.ndarray) -> np.ndarray:
        cx, cy = gt.box.center
        return np.stack(
            [
                (cx - (jj + 0.5) * stride) / stride,
                (cy - (ii + 0.5) * stride) / stride,
                np.full(ii.shape, math.log(max(gt.box.width, 1e-6) / stride)),
                np.full(ii.shape, math.log(max(gt.box.height, 1e-6) / stride)),
            ]
        )

    # Center cells first; they are never overridden by interior claims.
    for gt in gts:
        cx, cy = gt.box.center
        jc = min(wf - 1, max(0, int(cx / stride)))
        ic = min(hf - 1, max(0, int(cy / stride)))
        if obj_t[ic, jc] > 0:
            continue
        obj_t[ic, jc] = 1.0
        cls_t[ic, jc] = gt.class_id
        box_w[ic, jc] = 1.0
        box_t[:, ic, jc] = box_targets(gt, np.array([ic]), np.array([jc]))[:, 0]
        area_t[ic, jc] = -1.0  # lock against interior overwrites
    # Interior cells next: smallest box wins an unclaimed cell.
    for gt in gts:
        area = gt.box.area
        j0 = max(0, int(math.ceil(gt.box.x_min / stride - 0.5)))
        j1 = min(wf - 1, int(math.floor(gt.box.x_max / stride - 0.5)))
        i0 = max(0, int(math.ceil(gt.box.y_min / stride - 0.5)))
        i1 = min(hf - 1, int(math.floor(gt.box.y_max / stride - 0.5)))
        if j1 < j0 or i1 < i0:
            continue
        ii, jj = np.mgrid[i0 : i1 + 1, j0 : j1 + 1]
        ii, jj = ii.reshape(-1), jj.reshape(-1)
        take = area < area_t[ii, jj]
        if not take.any():
            continue
        ii, jj = ii[take], jj[take]
        area_t[ii, jj] = area
        box_w[ii, jj] = BOX_INTERIOR_WEIGHT
        box_t[:, ii, jj] = box_targets(gt, ii, jj)
    return (
        torch.as_tensor(obj_t, device=device, dtype=dtype),
        torch.as_tensor(cls_t, device=device, dtype=torch.long),
        torch.as_tensor(box_t, device=device, dtype=dtype),
        torch.as_tensor(box_w, device=device, dtype=dtype),
    )


def _focal_bce(logits: Tensor, targets: Tensor, alpha: float = 0.25, gamma: float = 2.0) -> Tensor:
    p = torch.sigmoid(logits)
    ce = F.binary_cross_entropy_with_logits(logits, targets, reduction="none")
    p_t = p * targets + (1 - p) * (1 - targets)
    alpha_t = alpha * targets + (1 - alpha) * (1 - targets)
    return (alpha_t * (1 - p_t) ** gamma * ce).sum()


def detection_loss(
    out: HeadOutput, sample: int, gts, cfg: ModelConfig
) -> tuple[Tensor, Tensor]:
    """(classification-style loss, box regression loss) for one sample."""
    grid = out.grid_shape
    device = out.objectness.device
    dtype = out.objectness.dtype
    obj_t, cls_t, box_t, box_w = assign_targets(gts, grid, cfg.stride, device, dtype)
    num_pos = int(obj_t.sum().item())
    norm = max(1, num_pos)

    obj_loss = _focal_bce(out.objectness[sample, 0], obj_t) / norm
    pos = cls_t >= 0
    if num_pos > 0:
        logits = out.class_logits[sample].permute(1, 2, 0)[pos]
        cls_loss = F.cross_entropy(logits, cls_t[pos], reduction="sum") / norm
    else:
        cls_loss = out.class_logits.sum() * 0.0
    box_cells = box_w > 0
    if bool(box_cells.any()):
        deltas = out.box_deltas[sample].permute(1, 2, 0)[box_cells]
        targets = box_t.permute(1, 2, 0)[box_cells]
        per_cell = (deltas - targets).abs().sum(dim=1) * box_w[box_cells]
        box_loss = per_cell.sum() / norm
    else:
        box_loss = out.box_deltas.sum() * 0.0
    return obj_loss + cls_loss, box_loss


def _pairwise_ell(
    logits: Tensor, target_classes: Tensor, ell: str, weights: Tensor | None = None
) -> Tensor:
    if ell == "cross_entropy":
        per_pair = F.cross_entropy(logits, target_classes, reduction="none")
    elif ell == "focal":
        ce = F.cross_entropy(logits, target_classes, reduction="none")
        p_t = torch.exp(-ce)
        per_pair = (1 - p_t) ** 2.0 * ce
    else:
        raise ValueError(f"unknown ell {ell!r}")
    if weights is not None:
        per_pair = per_pair * weights
    return per_pair.sum()


def _uel_pairs(
    candidate_boxes: Tensor,
    candidate_logits: Tensor,
    user_inputs: list[UserInput],
    gt: LabeledImage,
    ell: str,
    candidate_weights: Tensor | None = None,
) -> tuple[Tensor, float]:
    """(pair loss, pair mass). Mass is the pair count, or the summed
    per-candidate weights when weights are given."""
    device = candidate_logits.device
    dtype = candidate_logits.dtype
    if not user_inputs or candidate_logits.shape[0] == 0:
        return candidate_logits.sum() * 0.0, 0.0
    gt_boxes = []
    classes = []
    for inp in user_inputs:
        if inp.gt_index is None:
            raise ModelError(
                "user input lacks a recorded ground-truth association "
                "(required for the click-consistency loss)"
            )
        b = gt.objects[inp.gt_index].box
        gt_boxes.append([b.x_min, b.y_min, b.x_max, b.y_max])
        classes.append(inp.class_id)
    gt_tensor = torch.tensor(gt_boxes, device=device, dtype=dtype)
    cls_tensor = torch.tensor(classes, device=device, dtype=torch.long)
    ious = _box_iou_matrix(candidate_boxes.detach().to(dtype), gt_tensor)
    jj, kk = torch.nonzero(ious > 0, as_tuple=True)
    if jj.numel() == 0:
        return candidate_logits.sum() * 0.0, 0.0
    weights = None if candidate_weights is None else candidate_weights[jj].detach()
    loss = _pairwise_ell(candidate_logits[jj], cls_tensor[kk], ell, weights)
    mass = float(jj.numel()) if weights is None else float(weights.sum())
    return loss, mass


def uel_loss(
    candidate_boxes: Tensor,
    candidate_logits: Tensor,
    user_inputs: list[UserInput],
    gt: LabeledImage,
    ell: str = "cross_entropy",
) -> Tensor:
    """Class-consistency between clicks and every overlapping prediction.

    For each click k the associated ground-truth box is looked up through
    the click's recorded object index; every candidate j whose (detached)
    box has IoU > 0 with it contributes ell(candidate_logits_j, click
    class). The result is the plain sum over such pairs, so predictions
    that overlap no clicked object receive exactly zero gradient.
    """
    return _uel_pairs(candidate_boxes, candidate_logits, user_inputs, gt, ell)[0]


def total_loss(
    out: HeadOutput,
    gt_images: list[LabeledImage],
    inputs_per_sample: list[list[UserInput]],
    cfg: ModelConfig,
) -> tuple[Tensor, dict[str, float]]:
    """Batch loss: focal/CE detection terms + L1 box + weighted click loss.

    The click-consistency term weights each (candidate, click) pair by the
    candidate's detached objectness and averages over the pair mass. The
    objectness weight plays the role the background class plays in a
    two-stage head: pulling the class logits of a cell the model considers
    empty cannot promote it into a detection, it only matters where an
    object is already predicted. The mean keeps the term on one scale for
    any click count or object density; the raw pair sum grows with
    candidate density as detection improves and drowns the normalized
    detection terms. Exactly linear in lambda_uel either way.
    """
    batch = out.objectness.shape[0]
    cls_total = out.objectness.sum() * 0.0
    box_total = out.objectness.sum() * 0.0
    uel_total = out.objectness.sum() * 0.0
    lam = cfg.effective_lambda_uel
    for b in range(batch):
        cls_b, box_b = detection_loss(out, b, gt_images[b].objects, cfg)
        cls_total = cls_total + cls_b
        box_total = box_total + box_b
        if lam != 0.0 and inputs_per_sample[b]:
            boxes, logits, obj_weights = decode_candidates(out, cfg, b)
            pair_sum, mass = _uel_pairs(
                boxes, logits, inputs_per_sample[b], gt_images[b], cfg.uel_ell,
                candidate_weights=obj_weights,
            )
            uel_total = uel_total + pair_sum / max(1e-6, mass)
    cls_total = cls_total / batch
    box_total = box_total / batch
    uel_total = uel_total / batch
    total = cls_total + box_total + lam * uel_total
    breakdown = {
        "loss_total": float(total.detach()),
        "loss_cls": float(cls_total.detach()),
        "loss_box": float(box_total.detach()),
        "loss_uel": float((lam * uel_total).detach()),
    }
    for name, value in breakdown.items():
        if not math.isfinite(value):
            raise ModelError(f"non-finite {name}: {value}")
    return total, breakdown


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(
    path: Path, model: C3DetNet, catalog: ClassCatalog, extra: dict | None = None
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.cfg),
        "classes": list(catalog.names),
        "state_dict": model.state_dict(),
        "extra": extra or {},
    }
    torch.save(payload, path)


def load_checkpoint(
    path: Path, expected_catalog: ClassCatalog | None = None
) -> tuple[C3DetNet, ClassCatalog, dict]:
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ModelError(f"unsupported checkpoint version {payload.get('version')}")
    catalog = ClassCatalog(tuple(payload["classes"]))
    if expected_catalog is not None and catalog.names != expected_catalog.names:
        raise ModelError(
            f"checkpoint catalog {catalog.names} does not match "
            f"expected {expected_catalog.names}"
        )
    cfg_dict = dict(payload["config"])
    for key in ("input_mean", "input_std"):
        cfg_dict[key] = tuple(cfg_dict[key])
    cfg = ModelConfig(**cfg_dict)
    model = C3DetNet(catalog.num_classes, cfg)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, catalog, payload.get("extra", {})


__all__ = [
    "VARIANTS",
    "ModelConfig",
    "ModelError",
    "HeadOutput",
    "C3DetNet",
    "extract_template",
    "correlate",
    "collate_correlations",
    "c3_forward",
    "decode",
    "decode_candidates",
    "assign_targets",
    "detection_loss",
    "uel_loss",
    "total_loss",
    "save_checkpoint",
    "load_checkpoint",
]
