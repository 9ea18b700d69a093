"""Annotation service: sessions, live inference, annotation snapshots, event log.

Persistence is flat files under the sessions directory: one JSON snapshot per
image (atomic replace with a single backup generation), one append-only
JSON-lines event log per session. No database; everything is inspectable and
survives a kill between appends.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import threading
import time
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel, Field

from .core import Box, ClassCatalog, LabeledImage, load_catalog, load_dataset
from .core import UserInput
from .model import C3DetNet, load_checkpoint

EVENT_TYPES = ("click_hint", "draw_box", "delete_box", "class_change", "submit")
INFER_QUEUE_DEPTH = 8

EXPORT_DESCRIPTION = (
    "Bundle of all annotation snapshots plus interaction statistics. Shape: "
    '{"session": {...}, "annotations": {image_id: [{"bbox": [x0,y0,x1,y1], '
    '"class_id": int, "score": 1.0}]}, "event_counts": {type: int}, '
    '"total_events": int, "elapsed_ms": int}. Exported boxes always carry '
    "score 1.0."
)


class SessionCreate(BaseModel):
    dataset: str
    mode: str = Field(pattern="^(manual|assisted)$")


class WireInput(BaseModel):
    x: float
    y: float
    class_id: int


class InferRequest(BaseModel):
    image_id: str
    user_inputs: list[WireInput] = []


class WireBox(BaseModel):
    bbox: list[float]
    class_id: int


class AnnotationsPut(BaseModel):
    boxes: list[WireBox]


class EventPost(BaseModel):
    type: str
    t_ms: int
    payload: dict = {}


class _SessionStore:
    """Flat-file session persistence with per-session locking."""

    def __init__(self, root: Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def path(self, session_id: str) -> Path:
        return self.root / session_id

    def exists(self, session_id: str) -> bool:
        return (self.path(session_id) / "session.json").is_file()

    def create(self, dataset: str, mode: str) -> dict:
        session_id = uuid.uuid4().hex
        meta = {
            "session_id": session_id,
            "dataset": dataset,
            "mode": mode,
            "created_at": time.time(),
        }
        sdir = self.path(session_id)
        (sdir / "annotations").mkdir(parents=True, exist_ok=True)
        (sdir / "session.json").write_text(json.dumps(meta, indent=2))
        (sdir / "events.jsonl").touch()
        return meta

    def meta(self, session_id: str) -> dict:
        return json.loads((self.path(session_id) / "session.json").read_text())

    def write_snapshot(self, session_id: str, image_id: str, boxes: list[dict]) -> None:
        target = self.path(session_id) / "annotations" / f"{image_id}.json"
        tmp = Path(f"{target}.tmp")
        tmp.write_text(json.dumps({"boxes": boxes}, indent=2))
        if target.exists():
            # Keep one backup generation; copying leaves the live file
            # valid at every instant.
            Path(f"{target}.bak").write_bytes(target.read_bytes())
        os.replace(tmp, target)

    def read_snapshot(self, session_id: str, image_id: str) -> list[dict] | None:
        target = self.path(session_id) / "annotations" / f"{image_id}.json"
        if not target.is_file():
            return None
        return json.loads(target.read_text())["boxes"]

    def append_event(self, session_id: str, event: dict) -> None:
        log = self.path(session_id) / "events.jsonl"
        with log.open("a") as f:
            f.write(json.dumps(event, sort_keys=True) + "\n")
            f.flush()
            os.fsync(f.fileno())

    def events(self, session_id: str) -> list[dict]:
        log = self.path(session_id) / "events.jsonl"
        if not log.is_file():
            return []
        lines = [l for l in log.read_text().splitlines() if l.strip()]
        out = []
        for i, line in enumerate(lines):
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError:
                if i == len(lines) - 1:
                    break  # torn final line from a crash mid-append
                raise
        return out

    def last_t_ms(self, session_id: str) -> int:
        events = self.events(session_id)
        return events[-1]["t_ms"] if events else -1


def _validate_boxes(boxes: list[WireBox], catalog: ClassCatalog, image: LabeledImage) -> list[dict]:
    validated = []
    for wb in boxes:
        if len(wb.bbox) != 4:
            raise HTTPException(422, detail=f"bbox must have 4 values, got {wb.bbox}")
        x0, y0, x1, y1 = (float(v) for v in wb.bbox)
        if not (x0 < x1 and y0 < y1):
            raise HTTPException(422, detail=f"degenerate box {wb.bbox}")
        if not (0 <= x0 and 0 <= y0 and x1 <= image.width and y1 <= image.height):
            raise HTTPException(422, detail=f"box {wb.bbox} outside image bounds")
        if not 0 <= wb.class_id < catalog.num_classes:
            raise HTTPException(422, detail=f"class_id {wb.class_id} out of range")
        validated.append({"bbox": [x0, y0, x1, y1], "class_id": wb.class_id})
    return validated


def create_app(
    data_root: Path,
    checkpoint: Path | None = None,
    sessions_dir: Path | None = None,
    ui_dir: Path | None = None,
) -> FastAPI:
    data_root = Path(data_root)
    catalog = load_catalog(data_root)
    splits: dict[str, dict[str, LabeledImage]] = {}
    for split in ("train", "val", "test"):
        if (data_root / "images" / split).is_dir():
            splits[split] = {img.image_id: img for img in load_dataset(data_root, split)}
    image_index: dict[str, LabeledImage] = {}
    for images in splits.values():
        image_index.update(images)

    model: C3DetNet | None = None
    model_version = "none"
    if checkpoint is not None:
        model, _, _ = load_checkpoint(Path(checkpoint), expected_catalog=catalog)
        digest = hashlib.sha256(Path(checkpoint).read_bytes()).hexdigest()[:12]
        model_version = f"{Path(checkpoint).name}:{digest}"

    store = _SessionStore(sessions_dir or (data_root / "sessions"))
    infer_lock = threading.Lock()
    admission = threading.BoundedSemaphore(INFER_QUEUE_DEPTH)

    app = FastAPI(
        title="c3det annotation service",
        description=f"Export format: {EXPORT_DESCRIPTION}",
        openapi_url="/api/v1/openapi",
    )
    app.state.infer_admission = admission
    app.state.model = model

    @app.post("/api/v1/sessions", status_code=201)
    def create_session(body: SessionCreate):
        if body.dataset not in splits:
            raise HTTPException(404, detail=f"unknown dataset {body.dataset!r}")
        meta = store.create(body.dataset, body.mode)
        return {"session_id": meta["session_id"]}

    @app.get("/api/v1/dataset")
    def dataset_info():
        return {
            "classes": list(catalog.names),
            "splits": {name: sorted(images) for name, images in splits.items()},
        }

    @app.get("/api/v1/images/{image_id}")
    def image_png(image_id: str):
        if image_id not in image_index:
            raise HTTPException(404, detail=f"unknown image {image_id!r}")
        from PIL import Image

        arr = np.clip(np.rint(image_index[image_id].pixels * 255.0), 0, 255).astype(np.uint8)
        buf = io.BytesIO()
        Image.fromarray(arr).save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/api/v1/infer")
    def infer(body: InferRequest):
        if model is None:
            raise HTTPException(503, detail="model not loaded")
        if body.image_id not in image_index:
            raise HTTPException(404, detail=f"unknown image {body.image_id!r}")
        image = image_index[body.image_id]
        clicks = []
        for ui in body.user_inputs:
            if not 0 <= ui.class_id < catalog.num_classes:
                raise HTTPException(
                    400,
                    detail=f"class_id {ui.class_id} out of range [0, {catalog.num_classes})",
                )
            if not (0 <= ui.x <= image.width and 0 <= ui.y <= image.height):
                raise HTTPException(400, detail=f"click ({ui.x}, {ui.y}) outside image")
            clicks.append(UserInput(x=ui.x, y=ui.y, class_id=ui.class_id))
        if not admission.acquire(blocking=False):
            raise HTTPException(429, detail="inference queue full")
        try:
            start = time.monotonic()
            with infer_lock:
                dets = model.infer(image, clicks)
            latency_ms = (time.monotonic() - start) * 1000.0
        finally:
            admission.release()
        return {
            "detections": [
                {
                    "bbox": list(d.box.as_tuple()),
                    "class_id": d.class_id,
                    "score": d.score,
                }
                for d in dets
            ],
            "latency_ms": latency_ms,
            "model_version": model_version,
        }

    def _require_session(session_id: str) -> dict:
        if not store.exists(session_id):
            raise HTTPException(404, detail=f"unknown session {session_id!r}")
        return store.meta(session_id)

    @app.put("/api/v1/sessions/{session_id}/annotations/{image_id}", status_code=204)
    def put_annotations(session_id: str, image_id: str, body: AnnotationsPut):
        _require_session(session_id)
        if image_id not in image_index:
            raise HTTPException(404, detail=f"unknown image {image_id!r}")
        validated = _validate_boxes(body.boxes, catalog, image_index[image_id])
        with store.lock(session_id):
            store.write_snapshot(session_id, image_id, validated)
        return Response(status_code=204)

    @app.get("/api/v1/sessions/{session_id}/annotations/{image_id}")
    def get_annotations(session_id: str, image_id: str):
        _require_session(session_id)
        boxes = store.read_snapshot(session_id, image_id)
        if boxes is None:
            raise HTTPException(404, detail=f"no annotations for {image_id!r}")
        return {"boxes": boxes}

    @app.post("/api/v1/sessions/{session_id}/events", status_code=202)
    def post_event(session_id: str, body: EventPost):
        _require_session(session_id)
        if body.type not in EVENT_TYPES:
            raise HTTPException(422, detail=f"unknown event type {body.type!r}")
        with store.lock(session_id):
            if body.t_ms < store.last_t_ms(session_id):
                raise HTTPException(
                    422, detail=f"t_ms {body.t_ms} regresses below the log tail"
                )
            store.append_event(
                session_id, {"type": body.type, "t_ms": body.t_ms, "payload": body.payload}
            )
        return {"accepted": True}

    @app.get("/api/v1/sessions/{session_id}/export")
    def export(session_id: str):
        meta = _require_session(session_id)
        with store.lock(session_id):
            events = store.events(session_id)
            annotations = {}
            ann_dir = store.path(session_id) / "annotations"
            for snap in sorted(ann_dir.glob("*.json")):
                image_id = snap.stem
                boxes = store.read_snapshot(session_id, image_id)
                annotations[image_id] = [
                    {"bbox": b["bbox"], "class_id": b["class_id"], "score": 1.0}
                    for b in (boxes or [])
                ]
        counts = {t: 0 for t in EVENT_TYPES}
        for e in events:
            counts[e["type"]] += 1
        return {
            "session": meta,
            "annotations": annotations,
            "event_counts": counts,
            "total_events": len(events),
            "elapsed_ms": events[-1]["t_ms"] if events else 0,
        }

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def serve(
    data_root: Path,
    checkpoint: Path | None,
    port: int,
    sessions_dir: Path | None = None,
    ui_dir: Path | None = None,
) -> None:
    import uvicorn

    app = create_app(data_root, checkpoint, sessions_dir, ui_dir)
    uvicorn.run(app, host="0.0.0.0", port=port, log_level="info")


__all__ = ["create_app", "serve", "EVENT_TYPES", "INFER_QUEUE_DEPTH"]
