"""Training loop: click synthesis per batch, warmup/decay schedule, checkpoints."""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import simulate
from .core import ClassCatalog, LabeledImage, RandomSource, flip_horizontal
from .model import C3DetNet, ModelConfig, ModelError, save_checkpoint, total_loss

# Published schedule profiles, kept as named configs. The two paper-scale
# profiles assume the large-backbone setup and are not exercised by tests.
TRAIN_PROFILES: dict[str, dict] = {
    "desk": {
        "model": {"backbone_channels": 32, "lf_channels": 32, "fusion_proj_channels": 32},
        "train": {
            "epochs": 12,
            "batch_size": 8,
            "lr": 0.01,
            "warmup_steps": 100,
            "lr_decay_epochs": (8, 11),
        },
    },
    "paper-dota-faster-rcnn": {
        "model": {"backbone_channels": 256, "lf_channels": 256, "fusion_proj_channels": 256},
        "train": {
            "epochs": 24,
            "batch_size": 8,
            "lr": 0.01,
            "warmup_steps": 500,
            "lr_decay_epochs": (16, 22),
        },
    },
    "paper-dota-retinanet": {
        "model": {"backbone_channels": 256, "lf_channels": 256, "fusion_proj_channels": 256},
        "train": {
            "epochs": 36,
            "batch_size": 8,
            "lr": 0.01,
            "warmup_steps": 500,
            "lr_decay_epochs": (24, 33),
        },
    },
    "paper-lcell": {
        "model": {"backbone_channels": 256, "lf_channels": 256, "fusion_proj_channels": 256},
        "train": {
            "epochs": 100,
            "batch_size": 8,
            "lr": 0.01,
            "warmup_steps": 500,
            "lr_decay_epochs": (30, 60),
        },
    },
}


class TrainingDiverged(Exception):
    """Loss went non-finite; the last good checkpoint is retained on disk."""


@dataclass
class TrainConfig:
    epochs: int = 12
    batch_size: int = 8
    lr: float = 0.01
    warmup_steps: int = 500
    lr_decay_epochs: tuple[int, ...] = (8, 11)
    lr_decay_factor: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    seed: int = 0
    click_seed: int | None = None  # defaults to seed; split out for ablations
    data_fraction: float = 1.0
    augment_hflip: bool = True
    val_every: int = 0  # epochs between validation passes; 0 disables
    # Consistency-loss schedule: keep its weight at zero until this epoch,
    # letting the detection heads form before the auxiliary term joins.
    uel_start_epoch: int = 0

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0 < self.data_fraction <= 1:
            raise ValueError("data_fraction must be in (0, 1]")
        if list(self.lr_decay_epochs) != sorted(self.lr_decay_epochs):
            raise ValueError("lr_decay_epochs must be ascending")


@dataclass
class TrainResult:
    checkpoint_path: Path
    best_checkpoint_path: Path | None
    loss_log: list[dict]
    log_path: Path
    k_histogram: dict[int, int] = field(default_factory=dict)
    best_val_map: float | None = None


def subset(train: list[LabeledImage], fraction: float, seed: int) -> list[LabeledImage]:
    """Seeded shuffle, then the first floor(fraction * N) images (at least 1)."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    shuffled = RandomSource(seed, "subset").shuffled(train)
    n = max(1, int(math.floor(fraction * len(train)))) if train else 0
    return shuffled[:n]


def _lr_at(step: int, epoch: int, cfg: TrainConfig) -> float:
    lr = cfg.lr * min(1.0, (step + 1) / max(1, cfg.warmup_steps))
    for decay_epoch in cfg.lr_decay_epochs:
        if epoch >= decay_epoch:
            lr *= cfg.lr_decay_factor
    return lr


def _batches(order: list[int], images: list[LabeledImage], batch_size: int):
    """Consecutive chunks, split whenever the image size changes."""
    chunk: list[int] = []
    for idx in order:
        if chunk and (
            images[idx].pixels.shape != images[chunk[-1]].pixels.shape
            or len(chunk) >= batch_size
        ):
            yield chunk
            chunk = []
        chunk.append(idx)
    if chunk:
        yield chunk


def write_loss_log(path: Path, rows: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = ["step", "epoch", "lr", "loss_total", "loss_cls", "loss_box", "loss_uel"]
    with path.open("w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in fields})


def train(
    train_images: list[LabeledImage],
    catalog: ClassCatalog,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    out_dir: Path,
    val_images: list[LabeledImage] | None = None,
) -> TrainResult:
    """Train one model; every step draws fresh simulated clicks per image.

    Writes loss_log.csv, last.ckpt (every epoch) and best.ckpt (highest
    validation mAP at 20 clicks, when validation is enabled). A non-finite
    loss aborts with the last epoch's checkpoint left in place.
    """
    if not train_images:
        raise ValueError("need at least one training image")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    data = subset(train_images, train_cfg.data_fraction, train_cfg.seed)
    torch.manual_seed(RandomSource(train_cfg.seed, "torch-init").integers(0, 2**31 - 1))
    model = C3DetNet(catalog.num_classes, model_cfg)
    model.train()
    optimizer = torch.optim.SGD(
        model.parameters(),
        lr=train_cfg.lr,
        momentum=train_cfg.momentum,
        weight_decay=train_cfg.weight_decay,
    )

    order_rng = RandomSource(train_cfg.seed, "batch-order")
    flip_rng = RandomSource(train_cfg.seed, "hflip")
    click_seed = train_cfg.seed if train_cfg.click_seed is None else train_cfg.click_seed
    click_rng = RandomSource(click_seed, "train-clicks")
    sim_cfg = simulate.SimConfig()

    ckpt_path = out_dir / "last.ckpt"
    best_path = out_dir / "best.ckpt"
    log_path = out_dir / "loss_log.csv"
    loss_log: list[dict] = []
    k_histogram: dict[int, int] = {}
    best_val = None
    step = 0

    for epoch in range(train_cfg.epochs):
        if epoch < train_cfg.uel_start_epoch and model_cfg.uses_uel:
            epoch_cfg = dataclasses.replace(model_cfg, lambda_uel=0.0)
        else:
            epoch_cfg = model_cfg
        order = order_rng.shuffled(list(range(len(data))))
        for batch_idx in _batches(order, data, train_cfg.batch_size):
            batch_images = []
            batch_inputs = []
            for idx in batch_idx:
                img = data[idx]
                if train_cfg.augment_hflip and flip_rng.uniform() < 0.5:
                    img = flip_horizontal(img)
                clicks = simulate.sample_training_inputs(img, click_rng, sim_cfg)
                k_histogram[len(clicks)] = k_histogram.get(len(clicks), 0) + 1
                batch_images.append(img)
                batch_inputs.append(clicks)

            lr = _lr_at(step, epoch, train_cfg)
            for group in optimizer.param_groups:
                group["lr"] = lr

            tensor = torch.from_numpy(
                np.stack([im.pixels.transpose(2, 0, 1) for im in batch_images])
            )
            out = model(tensor, batch_inputs)
            try:
                loss, breakdown = total_loss(out, batch_images, batch_inputs, epoch_cfg)
            except ModelError as exc:
                write_loss_log(log_path, loss_log)
                raise TrainingDiverged(
                    f"aborting at step {step}: {exc}; last good checkpoint: {ckpt_path}"
                ) from exc
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

            loss_log.append({"step": step, "epoch": epoch, "lr": lr, **breakdown})
            step += 1

        save_checkpoint(ckpt_path, model, catalog, extra={"epoch": epoch})
        if (
            val_images
            and train_cfg.val_every > 0
            and (epoch + 1) % train_cfg.val_every == 0
        ):
            val_map = _validation_map(model, val_images, sim_cfg, train_cfg.seed)
            if best_val is None or val_map > best_val:
                best_val = val_map
                save_checkpoint(
                    best_path, model, catalog, extra={"epoch": epoch, "val_map": val_map}
                )
            model.train()

    write_loss_log(log_path, loss_log)
    write_json_summary(out_dir, train_cfg, model_cfg, k_histogram)
    return TrainResult(
        checkpoint_path=ckpt_path,
        best_checkpoint_path=best_path if best_path.exists() else None,
        loss_log=loss_log,
        log_path=log_path,
        k_histogram=k_histogram,
        best_val_map=best_val,
    )


def _validation_map(
    model: C3DetNet,
    val_images: list[LabeledImage],
    sim_cfg: simulate.SimConfig,
    seed: int,
) -> float:
    from .evalharness import evaluate_at_clicks

    rng = RandomSource(seed, "validation-session")
    return evaluate_at_clicks(model, val_images, sim_cfg.eval_max_clicks, rng)


def write_json_summary(
    out_dir: Path, train_cfg: TrainConfig, model_cfg: ModelConfig, k_histogram: dict
) -> None:
    from .core import write_json

    write_json(
        Path(out_dir) / "train_summary.json",
        {
            "train_config": asdict(train_cfg),
            "model_config": asdict(model_cfg),
            "k_histogram": {str(k): v for k, v in sorted(k_histogram.items())},
        },
    )


__all__ = [
    "TRAIN_PROFILES",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "subset",
    "train",
    "write_loss_log",
]
