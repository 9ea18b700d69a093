"""Command-line entry point: data generation, training, evaluation, ablations,
serving, DOTA import, and gradient verification."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

from . import gradcheck as gradcheck_mod
from . import synthgen
from .core import RandomSource, import_dota, load_catalog, load_dataset, write_json
from .evalharness import run_matrix, run_protocol
from .model import VARIANTS, C3DetNet, ModelConfig, load_checkpoint
from .simulate import SimConfig
from .trainer import TRAIN_PROFILES, TrainConfig, train

USAGE_ERROR = 1
RUNTIME_ERROR = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text())


def _resolved_banner(name: str, config: dict, out: Path | None) -> None:
    banner = {"command": name, **config}
    print("resolved config: " + json.dumps(banner, sort_keys=True, default=str))
    if out is not None:
        write_json(Path(out) / "resolved_config.json", json.loads(json.dumps(banner, default=str)))


def _model_config(args, overrides: dict) -> ModelConfig:
    cfg = dict(overrides.get("model", {}))
    if getattr(args, "variant", None):
        cfg["variant"] = args.variant
    profile = getattr(args, "profile", None)
    if profile:
        cfg = {**TRAIN_PROFILES[profile]["model"], **cfg}
    return ModelConfig(**cfg)


def _train_config(args, overrides: dict) -> TrainConfig:
    cfg = dict(overrides.get("train", {}))
    profile = getattr(args, "profile", None)
    if profile:
        cfg = {**TRAIN_PROFILES[profile]["train"], **cfg}
    for key in ("epochs", "batch_size", "lr", "warmup_steps", "data_fraction"):
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            cfg[key] = value
    cfg["seed"] = args.seed
    if "lr_decay_epochs" in cfg:
        cfg["lr_decay_epochs"] = tuple(cfg["lr_decay_epochs"])
    return TrainConfig(**cfg)


def cmd_gen_data(args) -> int:
    overrides = _load_config_file(args.config)
    gen_kwargs = dict(overrides.get("gen", {}))
    gen_kwargs["seed"] = args.seed
    if args.train is not None or args.val is not None or args.test is not None:
        gen_kwargs["counts"] = {
            "train": args.train if args.train is not None else 500,
            "val": args.val if args.val is not None else 50,
            "test": args.test if args.test is not None else 100,
        }
    if args.canvas:
        w, h = (int(v) for v in args.canvas.split(","))
        gen_kwargs["canvas"] = (w, h)
    if "canvas" in gen_kwargs:
        gen_kwargs["canvas"] = tuple(gen_kwargs["canvas"])
    if "objects_per_image" in gen_kwargs:
        gen_kwargs["objects_per_image"] = tuple(gen_kwargs["objects_per_image"])
    if "object_size" in gen_kwargs:
        gen_kwargs["object_size"] = tuple(gen_kwargs["object_size"])
    cfg = synthgen.GenConfig(**gen_kwargs)
    _resolved_banner("gen-data", asdict(cfg), Path(args.out))
    manifest = synthgen.generate(cfg, Path(args.out))
    for split, stats in manifest["splits"].items():
        print(f"{split}: {stats['images']} images, {stats['objects']} objects")
    return 0


def cmd_train(args) -> int:
    overrides = _load_config_file(args.config)
    model_cfg = _model_config(args, overrides)
    train_cfg = _train_config(args, overrides)
    out = Path(args.out)
    _resolved_banner(
        "train",
        {"model": asdict(model_cfg), "train": asdict(train_cfg), "data": args.data},
        out,
    )
    catalog = load_catalog(Path(args.data))
    train_images = load_dataset(Path(args.data), "train")
    val_images = None
    if (Path(args.data) / "images" / "val").is_dir():
        val_images = load_dataset(Path(args.data), "val")
    result = train(train_images, catalog, model_cfg, train_cfg, out, val_images)
    print(f"checkpoint: {result.checkpoint_path}")
    if result.best_checkpoint_path:
        print(f"best (val mAP@20 {result.best_val_map:.4f}): {result.best_checkpoint_path}")
    return 0


def cmd_eval(args) -> int:
    out = Path(args.out)
    sim_cfg = SimConfig(eval_max_clicks=args.max_clicks, eval_sessions=args.sessions)
    _resolved_banner(
        "eval",
        {
            "checkpoint": args.checkpoint,
            "data": args.data,
            "sessions": args.sessions,
            "max_clicks": args.max_clicks,
            "seed": args.seed,
        },
        out,
    )
    model, _, _ = load_checkpoint(Path(args.checkpoint))
    test = load_dataset(Path(args.data), args.split)
    summary = run_protocol(
        model, test, sim_cfg, base_seed=args.seed, out_csv=out / "curve.csv"
    )
    for t, m, s in zip(summary.clicks, summary.mean, summary.std):
        print(f"clicks={t:2d} mAP={m:.4f} +/- {s:.4f}")
    return 0


def cmd_ablate(args) -> int:
    overrides = _load_config_file(args.config)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    unknown = [v for v in variants if v not in VARIANTS and v != "passthrough"]
    if unknown:
        print(f"ablate: unknown variants {unknown}", file=sys.stderr)
        return USAGE_ERROR
    out = Path(args.out)
    _resolved_banner(
        "ablate",
        {"variants": variants, "data": args.data, "seed": args.seed},
        out,
    )
    catalog = load_catalog(Path(args.data))
    train_images = load_dataset(Path(args.data), "train")
    test = load_dataset(Path(args.data), args.split)

    needs_detector = "passthrough" in variants
    train_variants = [v for v in variants if v != "passthrough"]
    if needs_detector and "detector_only" not in train_variants:
        train_variants.append("detector_only")

    checkpoints: dict[str, Path] = {}
    for variant in train_variants:
        ckpt = out / variant / "last.ckpt"
        if not ckpt.exists():
            model_cfg = _model_config(
                argparse.Namespace(variant=variant, profile=args.profile), overrides
            )
            train_cfg = _train_config(args, overrides)
            print(f"training {variant}...")
            train(train_images, catalog, model_cfg, train_cfg, out / variant)
        checkpoints[variant] = ckpt
    if needs_detector:
        checkpoints["passthrough"] = checkpoints["detector_only"]
        if "detector_only" not in variants:
            del checkpoints["detector_only"]

    sim_cfg = SimConfig(eval_max_clicks=args.max_clicks, eval_sessions=args.sessions)
    ordered = {v: checkpoints[v] for v in variants}
    summaries = run_matrix(
        ordered, test, out, sim_cfg, base_seed=args.seed, make_plot=not args.no_plot
    )
    for name, summary in summaries.items():
        m20, s20 = summary.at(summary.clicks[-1])
        print(f"{name}: mAP@{summary.clicks[-1]}clicks = {m20:.4f} +/- {s20:.4f}")
    return 0


def cmd_serve(args) -> int:
    from .server import serve

    data = args.data or os.environ.get("C3DET_DATA")
    checkpoint = args.checkpoint or os.environ.get("C3DET_CHECKPOINT")
    port = args.port or int(os.environ.get("C3DET_PORT", "8008"))
    if not data:
        print("serve: --data or C3DET_DATA required", file=sys.stderr)
        return USAGE_ERROR
    _resolved_banner(
        "serve",
        {"data": data, "checkpoint": checkpoint, "port": port, "ui": args.ui},
        None,
    )
    serve(
        Path(data),
        Path(checkpoint) if checkpoint else None,
        port,
        sessions_dir=Path(args.sessions_dir) if args.sessions_dir else None,
        ui_dir=Path(args.ui) if args.ui else None,
    )
    return 0


def cmd_import_dota(args) -> int:
    _resolved_banner(
        "import-dota", {"src": args.src, "out": args.out, "split": args.split}, Path(args.out)
    )
    report = import_dota(Path(args.src), Path(args.out), split=args.split)
    print(f"imported {report.images_imported} label files, {report.total_objects()} objects")
    for name, count in sorted(report.objects_per_class.items()):
        print(f"  {name}: {count}")
    if report.skipped_unknown:
        print(f"skipped unknown classes: {report.skipped_unknown}")
    if report.malformed_lines:
        print(f"malformed lines ({len(report.malformed_lines)}):")
        for line in report.malformed_lines:
            print(f"  {line}")
    return 0


def cmd_gradcheck(args) -> int:
    return gradcheck_mod.main(seed=args.seed)


def build_parser() -> _Parser:
    parser = _Parser(prog="c3det", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.add_argument("--train", type=int)
    p.add_argument("--val", type=int)
    p.add_argument("--test", type=int)
    p.add_argument("--canvas", help="W,H")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one model variant")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.add_argument("--variant", choices=VARIANTS, default="full")
    p.add_argument("--profile", choices=sorted(TRAIN_PROFILES), default=None)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--warmup-steps", dest="warmup_steps", type=int)
    p.add_argument("--data-fraction", dest="data_fraction", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run the mAP-versus-clicks protocol")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sessions", type=int, default=5)
    p.add_argument("--max-clicks", dest="max_clicks", type=int, default=20)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and evaluate a variant matrix")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument(
        "--variants",
        default="full,no_uel,lf_only,c3_only,collate_then_correlate,"
        "early_fusion,late_fusion_baseline,detector_only",
    )
    p.add_argument("--split", default="test")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.add_argument("--profile", choices=sorted(TRAIN_PROFILES), default="desk")
    p.add_argument("--sessions", type=int, default=5)
    p.add_argument("--max-clicks", dest="max_clicks", type=int, default=20)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--warmup-steps", dest="warmup_steps", type=int)
    p.add_argument("--data-fraction", dest="data_fraction", type=float)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("serve", help="start the annotation service")
    p.add_argument("--data")
    p.add_argument("--checkpoint")
    p.add_argument("--port", type=int)
    p.add_argument("--sessions-dir", dest="sessions_dir")
    p.add_argument("--ui", help="directory of built frontend assets to serve")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("import-dota", help="import DOTA-style text labels")
    p.add_argument("--src", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="train")
    p.set_defaults(func=cmd_import_dota)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE_ERROR
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return RUNTIME_ERROR
    except Exception as exc:  # noqa: BLE001 - single reporting point
        module = type(exc).__module__.split(".")[-1]
        print(f"c3det {args.command} failed [{module}]: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
