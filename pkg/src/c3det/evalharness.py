"""mAP-versus-clicks protocol: repeated sessions, baselines, ablation matrix."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch

from .core import Detection, LabeledImage, RandomSource, UserInput
from .metrics import map_at
from .model import C3DetNet, decode, load_checkpoint
from .simulate import SimConfig, draw_session_clicks


@dataclass(frozen=True)
class CurvePoint:
    clicks: int
    session: int
    map_value: float


@dataclass
class CurveSummary:
    """Mean and std of mAP per click count over the evaluation sessions."""

    clicks: list[int]
    mean: list[float]
    std: list[float]
    points: list[CurvePoint]

    def at(self, clicks: int) -> tuple[float, float]:
        i = self.clicks.index(clicks)
        return self.mean[i], self.std[i]


def _session_clicks(
    images: list[LabeledImage], session_rng: RandomSource, cfg: SimConfig
) -> dict[str, list[UserInput]]:
    """One frozen click sequence per image for the whole session."""
    return {
        img.image_id: draw_session_clicks(img, session_rng.child(img.image_id), cfg)
        for img in images
    }


def predict_with_click_prefixes(
    model: C3DetNet,
    image: LabeledImage,
    clicks: list[UserInput],
    click_counts: list[int],
) -> dict[int, list[Detection]]:
    """Detections for each requested click count, batched in one forward."""
    prefixes = [clicks[: min(t, len(clicks))] for t in click_counts]
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            tensor = (
                torch.from_numpy(
                    np.ascontiguousarray(image.pixels.transpose(2, 0, 1))
                )
                .unsqueeze(0)
                .repeat(len(prefixes), 1, 1, 1)
            )
            out = model(tensor, prefixes)
    finally:
        model.train(was_training)
    return {
        t: decode(out, model.cfg, sample=i) for i, t in enumerate(click_counts)
    }


def run_session(
    model: C3DetNet,
    test: list[LabeledImage],
    session_rng: RandomSource,
    cfg: SimConfig = SimConfig(),
    session_index: int = 0,
    click_counts: list[int] | None = None,
) -> list[CurvePoint]:
    """One evaluation session: cumulative click prefixes, mAP@0.5 per count."""
    counts = click_counts or list(range(cfg.eval_max_clicks + 1))
    sequences = _session_clicks(test, session_rng, cfg)
    dets_by_count: dict[int, dict[str, list[Detection]]] = {t: {} for t in counts}
    for img in test:
        per_count = predict_with_click_prefixes(model, img, sequences[img.image_id], counts)
        for t in counts:
            dets_by_count[t][img.image_id] = per_count[t]
    gts = {img.image_id: list(img.objects) for img in test}
    return [
        CurvePoint(
            clicks=t,
            session=session_index,
            map_value=map_at(dets_by_count[t], gts, (0.5,)).map_value,
        )
        for t in counts
    ]


def run_passthrough_session(
    model: C3DetNet,
    test: list[LabeledImage],
    session_rng: RandomSource,
    cfg: SimConfig = SimConfig(),
    session_index: int = 0,
    click_counts: list[int] | None = None,
) -> list[CurvePoint]:
    """Passthrough baseline: detector output with clicked classes rewritten.

    The base model must be a click-ignoring detector; its detections are
    produced through the same batched path as run_session so the 0-click
    point matches a detector_only run bit for bit.
    """
    if not model.cfg.ignores_inputs:
        raise ValueError(
            "passthrough requires a detector_only checkpoint "
            f"(got variant {model.cfg.variant!r})"
        )
    counts = click_counts or list(range(cfg.eval_max_clicks + 1))
    sequences = _session_clicks(test, session_rng, cfg)
    base = {
        img.image_id: predict_with_click_prefixes(
            model, img, sequences[img.image_id], counts
        )[counts[0]]
        for img in test
    }
    gts = {img.image_id: list(img.objects) for img in test}
    points = []
    for t in counts:
        dets = {
            img.image_id: passthrough(
                base[img.image_id], sequences[img.image_id][: min(t, len(sequences[img.image_id]))]
            )
            for img in test
        }
        points.append(
            CurvePoint(
                clicks=t,
                session=session_index,
                map_value=map_at(dets, gts, (0.5,)).map_value,
            )
        )
    return points


def passthrough(dets: list[Detection], inputs: list[UserInput]) -> list[Detection]:
    """Rewrite the class of the best-scoring detection containing each click.

    The matched detection's score becomes 1; clicks landing in no detection
    are ignored; everything else passes through untouched.
    """
    out = list(dets)
    for inp in inputs:
        best = -1
        best_score = -1.0
        for i, det in enumerate(out):
            if det.box.contains(inp.x, inp.y) and det.score > best_score:
                best = i
                best_score = det.score
        if best >= 0:
            out[best] = replace(out[best], class_id=inp.class_id, score=1.0)
    return out


def summarize(points: list[CurvePoint], expected_sessions: int) -> CurveSummary:
    by_clicks: dict[int, list[float]] = {}
    for p in points:
        by_clicks.setdefault(p.clicks, []).append(p.map_value)
    clicks = sorted(by_clicks)
    for t in clicks:
        if len(by_clicks[t]) != expected_sessions:
            raise ValueError(
                f"click count {t} has {len(by_clicks[t])} sessions, "
                f"expected {expected_sessions}"
            )
    mean = [float(np.mean(by_clicks[t])) for t in clicks]
    std = [float(np.std(by_clicks[t])) for t in clicks]
    return CurveSummary(clicks=clicks, mean=mean, std=std, points=list(points))


def run_protocol(
    model: C3DetNet,
    test: list[LabeledImage],
    cfg: SimConfig = SimConfig(),
    base_seed: int = 0,
    out_csv: Path | None = None,
    click_counts: list[int] | None = None,
    use_passthrough: bool = False,
) -> CurveSummary:
    """Repeat independent sessions and aggregate mean/std per click count."""
    points: list[CurvePoint] = []
    runner = run_passthrough_session if use_passthrough else run_session
    for s in range(cfg.eval_sessions):
        session_rng = RandomSource(base_seed, f"eval-session/{s}")
        points.extend(
            runner(model, test, session_rng, cfg, session_index=s, click_counts=click_counts)
        )
    summary = summarize(points, cfg.eval_sessions)
    if out_csv is not None:
        write_curve_csv(Path(out_csv), points)
        write_summary_csv(Path(out_csv).with_suffix(".summary.csv"), summary)
    return summary


def evaluate_at_clicks(
    model: C3DetNet,
    images: list[LabeledImage],
    clicks: int,
    rng: RandomSource,
    cfg: SimConfig = SimConfig(),
) -> float:
    """Single-session mAP@0.5 at one click count (used for validation)."""
    points = run_session(model, images, rng, cfg, click_counts=[clicks])
    return points[0].map_value


def write_curve_csv(path: Path, points: list[CurvePoint]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["clicks", "session", "map"])
        for p in sorted(points, key=lambda p: (p.session, p.clicks)):
            writer.writerow([p.clicks, p.session, f"{p.map_value:.12f}"])


def write_summary_csv(path: Path, summary: CurveSummary) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["clicks", "mean", "std"])
        for t, m, s in zip(summary.clicks, summary.mean, summary.std):
            writer.writerow([t, f"{m:.12f}", f"{s:.12f}"])


def run_matrix(
    checkpoints: dict[str, Path],
    test: list[LabeledImage],
    out_dir: Path,
    cfg: SimConfig = SimConfig(),
    base_seed: int = 0,
    click_counts: list[int] | None = None,
    make_plot: bool = False,
) -> dict[str, CurveSummary]:
    """Evaluate several variants with identical session seeds (paired runs).

    The "passthrough" entry should point at the detector_only checkpoint;
    it is evaluated post hoc without a trained interaction pathway.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summaries: dict[str, CurveSummary] = {}
    for name, ckpt in checkpoints.items():
        if not Path(ckpt).exists():
            raise FileNotFoundError(f"variant {name!r}: missing checkpoint {ckpt}")
        model, _, _ = load_checkpoint(ckpt)
        summaries[name] = run_protocol(
            model,
            test,
            cfg,
            base_seed=base_seed,
            out_csv=out_dir / f"{name}_curve.csv",
            click_counts=click_counts,
            use_passthrough=(name == "passthrough"),
        )
    _write_combined_csv(out_dir / "combined.csv", summaries)
    if make_plot:
        _plot_curves(out_dir / "curves.png", summaries)
    return summaries


def _write_combined_csv(path: Path, summaries: dict[str, CurveSummary]) -> None:
    with Path(path).open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["variant", "clicks", "mean", "std"])
        for name, summary in summaries.items():
            for t, m, s in zip(summary.clicks, summary.mean, summary.std):
                writer.writerow([name, t, f"{m:.12f}", f"{s:.12f}"])


def _plot_curves(path: Path, summaries: dict[str, CurveSummary]) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 5))
    for name, summary in summaries.items():
        ax.errorbar(summary.clicks, summary.mean, yerr=summary.std, label=name, capsize=2)
    ax.set_xlabel("clicks")
    ax.set_ylabel("mAP@0.5")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


__all__ = [
    "CurvePoint",
    "CurveSummary",
    "run_session",
    "run_passthrough_session",
    "run_protocol",
    "run_matrix",
    "passthrough",
    "evaluate_at_clicks",
    "summarize",
    "write_curve_csv",
    "write_summary_csv",
]
