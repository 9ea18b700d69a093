"""Central finite-difference verification of analytic gradients.

Every differentiable stage of the network (template extraction, correlation,
class-wise collation, fusion, head losses, the click-consistency loss, and
the end-to-end loss) is checked against an element-by-element central
difference computed independently of autograd, in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .core import Box, GroundTruthObject, LabeledImage, RandomSource, UserInput
from .model import (
    C3DetNet,
    HeadOutput,
    ModelConfig,
    collate_correlations,
    correlate,
    detection_loss,
    extract_template,
    total_loss,
    uel_loss,
)

DEFAULT_EPS = 1e-6
DEFAULT_TOLERANCE = 1e-4


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    passed: bool

    def line(self) -> str:
        status = "ok" if self.passed else "FAIL"
        return f"{status:4s} {self.name:30s} rel_err={self.max_rel_err:.3e}"


def numeric_gradient(fn, x: np.ndarray, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Element-wise central differences of a scalar function of an array."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = fn(x)
        flat[i] = orig - eps
        f_minus = fn(x)
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def analytic_gradient(fn_torch, x: np.ndarray) -> np.ndarray:
    t = torch.tensor(x, dtype=torch.float64, requires_grad=True)
    out = fn_torch(t)
    out.backward()
    return t.grad.detach().numpy().copy()


def compare(name: str, fn_torch, x: np.ndarray, tolerance: float = DEFAULT_TOLERANCE) -> CheckResult:
    analytic = analytic_gradient(fn_torch, x)
    numeric = numeric_gradient(lambda a: float(fn_torch(torch.tensor(a, dtype=torch.float64))), x)
    scale = max(1.0, float(np.abs(numeric).max()))
    rel = float(np.abs(analytic - numeric).max()) / scale
    return CheckResult(name=name, max_rel_err=rel, passed=rel < tolerance)


def _rng_array(rng: np.random.Generator, *shape: int) -> np.ndarray:
    return rng.standard_normal(shape)


def _random_weights(rng: np.random.Generator, h: int, w: int) -> torch.Tensor:
    u = np.abs(rng.standard_normal((h, w))) + 0.05
    return torch.tensor(u / u.sum(), dtype=torch.float64)


def run_all(seed: int = 0, tolerance: float = DEFAULT_TOLERANCE) -> list[CheckResult]:
    rng = RandomSource(seed, "gradcheck").generator
    results = []

    ch, h, w = 3, 5, 6
    weights = _random_weights(rng, h, w)
    probe = torch.tensor(_rng_array(rng, ch), dtype=torch.float64)

    results.append(
        compare(
            "extract_template/feats",
            lambda x: (extract_template(x, weights) * probe).sum(),
            _rng_array(rng, ch, h, w),
            tolerance,
        )
    )

    feats_fixed = torch.tensor(_rng_array(rng, ch, h, w), dtype=torch.float64)
    probe_map = torch.tensor(_rng_array(rng, h, w), dtype=torch.float64)
    results.append(
        compare(
            "correlate/template",
            lambda t: (correlate(t, feats_fixed) * probe_map).sum(),
            _rng_array(rng, ch),
            tolerance,
        )
    )
    template_fixed = torch.tensor(_rng_array(rng, ch), dtype=torch.float64)
    results.append(
        compare(
            "correlate/feats",
            lambda x: (correlate(template_fixed, x) * probe_map).sum(),
            _rng_array(rng, ch, h, w),
            tolerance,
        )
    )

    # Four correlation maps over three classes, packed into one array.
    classes = [0, 0, 1, 2]
    probe_c3 = torch.tensor(_rng_array(rng, 4, h, w), dtype=torch.float64)

    def collate_scalar(x: torch.Tensor) -> torch.Tensor:
        maps = [(x[i], classes[i]) for i in range(len(classes))]
        out = collate_correlations(maps, num_classes=4, shape=(h, w))
        return (out * probe_c3).sum()

    results.append(
        compare("collate_correlations", collate_scalar, _rng_array(rng, 4, h, w), tolerance)
    )

    # Equation chain: per-input template -> correlation -> class-wise max.
    chain_weights = [_random_weights(rng, h, w) for _ in range(3)]
    chain_classes = [0, 1, 1]
    probe_chain = torch.tensor(_rng_array(rng, 2, h, w), dtype=torch.float64)

    def chain_scalar(x: torch.Tensor) -> torch.Tensor:
        maps = []
        for wmap, cid in zip(chain_weights, chain_classes):
            t = extract_template(x, wmap)
            maps.append((correlate(t, x), cid))
        out = collate_correlations(maps, num_classes=2, shape=(h, w))
        return (out * probe_chain).sum()

    results.append(
        compare("correlation_chain", chain_scalar, _rng_array(rng, ch, h, w), tolerance)
    )

    # Fusion: channel concat then 1x1 projection, gradients w.r.t. both
    # the concatenated features and the projection weight.
    c_img, c_lf, c_cls, proj = 4, 3, 2, 3
    fuse_weight = torch.tensor(
        _rng_array(rng, proj, c_img + c_lf + c_cls, 1, 1), dtype=torch.float64
    )
    probe_fuse = torch.tensor(_rng_array(rng, proj, h, w), dtype=torch.float64)

    def fuse_scalar_feats(x: torch.Tensor) -> torch.Tensor:
        parts = torch.split(x, [c_img, c_lf, c_cls], dim=0)
        cat = torch.cat(parts, dim=0).unsqueeze(0)
        return (F.conv2d(cat, fuse_weight)[0] * probe_fuse).sum()

    results.append(
        compare(
            "fuse/features",
            fuse_scalar_feats,
            _rng_array(rng, c_img + c_lf + c_cls, h, w),
            tolerance,
        )
    )

    fused_fixed = torch.tensor(
        _rng_array(rng, 1, c_img + c_lf + c_cls, h, w), dtype=torch.float64
    )

    def fuse_scalar_weight(wt: torch.Tensor) -> torch.Tensor:
        return (F.conv2d(fused_fixed, wt)[0] * probe_fuse).sum()

    results.append(
        compare(
            "fuse/projection_weight",
            fuse_scalar_weight,
            _rng_array(rng, proj, c_img + c_lf + c_cls, 1, 1),
            tolerance,
        )
    )

    # Head losses w.r.t. the dense head tensors.
    num_classes, hf, wf = 3, 5, 5
    cfg = ModelConfig(stride=4, variant="full")
    gts = [
        GroundTruthObject(box=Box(2.0, 2.0, 9.0, 8.0), class_id=0),
        GroundTruthObject(box=Box(10.0, 9.0, 16.0, 17.0), class_id=2),
    ]
    n_cls = num_classes * hf * wf
    n_obj = hf * wf
    n_box = 4 * hf * wf

    def head_loss_scalar(x: torch.Tensor) -> torch.Tensor:
        cls = x[:n_cls].reshape(1, num_classes, hf, wf)
        obj = x[n_cls : n_cls + n_obj].reshape(1, 1, hf, wf)
        box = x[n_cls + n_obj :].reshape(1, 4, hf, wf)
        out = HeadOutput(class_logits=cls, objectness=obj, box_deltas=box)
        cls_loss, box_loss = detection_loss(out, 0, gts, cfg)
        return cls_loss + box_loss

    results.append(
        compare("head_losses", head_loss_scalar, _rng_array(rng, n_cls + n_obj + n_box), tolerance)
    )

    # Click-consistency loss w.r.t. candidate class logits.
    j, k = 6, 3
    boxes = []
    for _ in range(j):
        x0, y0 = rng.uniform(0, 12, 2)
        boxes.append([x0, y0, x0 + rng.uniform(2, 8), y0 + rng.uniform(2, 8)])
    cand_boxes = torch.tensor(boxes, dtype=torch.float64)
    pixels = np.zeros((24, 24, 3), dtype=np.float32)
    objs = []
    clicks = []
    for i in range(k):
        x0, y0 = rng.uniform(0, 12, 2)
        bb = Box(float(x0), float(y0), float(x0 + rng.uniform(2, 8)), float(y0 + rng.uniform(2, 8)))
        cid = int(rng.integers(0, num_classes))
        objs.append(GroundTruthObject(box=bb, class_id=cid))
        clicks.append(UserInput(x=bb.center[0], y=bb.center[1], class_id=cid, gt_index=i))
    gt_img = LabeledImage(image_id="g", pixels=pixels, objects=tuple(objs))

    for ell in ("cross_entropy", "focal"):
        results.append(
            compare(
                f"uel_loss/{ell}",
                lambda x, e=ell: uel_loss(cand_boxes, x.reshape(j, num_classes), clicks, gt_img, e),
                _rng_array(rng, j * num_classes),
                tolerance,
            )
        )

    results.append(_total_loss_directional(rng, tolerance))
    return results


def _total_loss_directional(rng: np.random.Generator, tolerance: float) -> CheckResult:
    """End-to-end loss: directional derivatives over all model parameters."""
    torch.manual_seed(7)
    cfg = ModelConfig(
        backbone_channels=8, lf_channels=8, fusion_proj_channels=8, stride=4, variant="full"
    )
    model = C3DetNet(num_classes=3, cfg=cfg).double()
    pixels = np.clip(
        0.5 + 0.2 * rng.standard_normal((16, 16, 3)), 0.0, 1.0
    ).astype(np.float32)
    objs = (
        GroundTruthObject(box=Box(2.0, 3.0, 8.0, 9.0), class_id=0),
        GroundTruthObject(box=Box(9.0, 8.0, 15.0, 14.0), class_id=2),
    )
    img = LabeledImage(image_id="d", pixels=pixels, objects=objs)
    clicks = [
        UserInput(x=objs[0].box.center[0], y=objs[0].box.center[1], class_id=0, gt_index=0)
    ]
    tensor = torch.tensor(pixels.transpose(2, 0, 1), dtype=torch.float64).unsqueeze(0)

    def loss_value(keep_graph: bool = False) -> torch.Tensor:
        out = model(tensor, [clicks])
        loss = total_loss(out, [img], [clicks], cfg)[0]
        return loss if keep_graph else loss.detach()

    params = [p for p in model.parameters() if p.requires_grad]
    loss = loss_value(keep_graph=True)
    grads = torch.autograd.grad(loss, params)

    eps = 1e-6
    worst = 0.0
    for trial in range(3):
        direction = [torch.tensor(rng.standard_normal(tuple(p.shape))) for p in params]
        norm = torch.sqrt(sum((d * d).sum() for d in direction))
        direction = [d / norm for d in direction]
        analytic = float(sum((g * d).sum() for g, d in zip(grads, direction)))
        with torch.no_grad():
            for p, d in zip(params, direction):
                p += eps * d
        f_plus = float(loss_value())
        with torch.no_grad():
            for p, d in zip(params, direction):
                p -= 2 * eps * d
        f_minus = float(loss_value())
        with torch.no_grad():
            for p, d in zip(params, direction):
                p += eps * d
        numeric = (f_plus - f_minus) / (2 * eps)
        rel = abs(analytic - numeric) / max(1.0, abs(numeric))
        worst = max(worst, rel)
    return CheckResult(name="total_loss/directional", max_rel_err=worst, passed=worst < tolerance)


def main(seed: int = 0) -> int:
    results = run_all(seed)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} gradient checks passed")
    return 0 if not failed else 2


__all__ = ["CheckResult", "run_all", "numeric_gradient", "analytic_gradient", "compare", "main"]
