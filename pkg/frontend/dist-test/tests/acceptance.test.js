/** Scripted end-to-end session against the real annotation service.
 *
 * Covers the two scripted acceptance flows: a full assisted session
 * (3 hints, 2 manual edits, submit, export bookkeeping) and the
 * stale-response race under a rapid double hint click.
 */
import assert from "node:assert/strict";
import { spawn, spawnSync } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { after, before, test } from "node:test";
import { ApiClient } from "../src/api.js";
import { AnnotatorController } from "../src/controller.js";
const PORT = 18731 + Math.floor(Math.random() * 200);
const BASE = `http://127.0.0.1:${PORT}`;
const PREPARE_SCRIPT = `
import sys, torch
from pathlib import Path
from c3det.core import RandomSource, save_dataset
from c3det.model import C3DetNet, ModelConfig, save_checkpoint
from c3det.synthgen import DEFAULT_CATALOG, GenConfig, generate

root = Path(sys.argv[1])
cfg = GenConfig(canvas=(64, 64), objects_per_image=(4, 8), object_size=(6, 12),
                counts={"test": 2}, seed=3)
generate(cfg, root / "data")
torch.manual_seed(0)
model = C3DetNet(8, ModelConfig(backbone_channels=8, lf_channels=8,
                                fusion_proj_channels=8, score_thr=0.0))
save_checkpoint(root / "model.ckpt", model, DEFAULT_CATALOG)
print("ready")
`;
function pythonAvailable() {
    const probe = spawnSync("python3", ["-c", "import c3det"], { timeout: 30_000 });
    return probe.status === 0;
}
const HAVE_PYTHON = pythonAvailable();
let serverProc = null;
let workdir = "";
async function waitForServer(timeoutMs = 60_000) {
    const deadline = Date.now() + timeoutMs;
    while (Date.now() < deadline) {
        try {
            const resp = await fetch(`${BASE}/api/v1/dataset`);
            if (resp.ok)
                return;
        }
        catch {
            // not up yet
        }
        await new Promise((r) => setTimeout(r, 250));
    }
    throw new Error("annotation service did not come up");
}
before(async () => {
    if (!HAVE_PYTHON)
        return;
    workdir = mkdtempSync(join(tmpdir(), "c3det-ui-"));
    const prep = spawnSync("python3", ["-c", PREPARE_SCRIPT, workdir], {
        timeout: 120_000,
    });
    assert.equal(prep.status, 0, `dataset prep failed: ${prep.stderr}`);
    serverProc = spawn("python3", [
        "-c",
        "from c3det.cli import main; import sys; sys.exit(main(sys.argv[1:]))",
        "serve",
        "--data", join(workdir, "data"),
        "--checkpoint", join(workdir, "model.ckpt"),
        "--port", String(PORT),
        "--sessions-dir", join(workdir, "sessions"),
    ], { stdio: "ignore" });
    await waitForServer();
});
after(() => {
    serverProc?.kill("SIGTERM");
});
function listener() {
    const shown = { boxes: [] };
    return {
        shown,
        listener: {
            onBoxesChanged: (b) => shown.boxes.push(b),
            onError: (m) => {
                throw new Error(`unexpected UI error: ${m}`);
            },
            onSubmitted: () => undefined,
            onBoxRejected: () => undefined,
        },
    };
}
function sameDetections(shown, wire) {
    const model = shown.filter((b) => b.source === "model");
    if (model.length !== wire.length)
        return false;
    return model.every((b, i) => b.classId === wire[i].class_id &&
        b.score === wire[i].score &&
        b.bbox.every((v, j) => v === wire[i].bbox[j]));
}
test("scripted assisted session: hints, edits, submit, export", {
    skip: !HAVE_PYTHON && "python3 with c3det not available",
}, async () => {
    const api = new ApiClient(BASE);
    const info = await api.datasetInfo();
    const imageId = info.splits["test"][0];
    const sessionId = await api.createSession("test", "assisted");
    const { listener: lis, shown } = listener();
    const controller = new AnnotatorController(api, sessionId, imageId, "assisted", lis);
    controller.setImageSize(64, 64);
    // Three hint clicks; after each, the display must equal the service's
    // own answer for the accumulated hints.
    const hintPoints = [[12, 14], [30, 28], [45, 50]];
    for (let i = 0; i < hintPoints.length; i += 1) {
        await controller.selectClass(i);
        await controller.onHintClick(hintPoints[i][0], hintPoints[i][1]);
        const expected = await api.infer(imageId, controller.state.hints);
        assert.ok(sameDetections(shown.boxes.at(-1), expected.detections), `display after hint ${i + 1} mismatches /infer`);
    }
    // Two manual edits: one drawn box, one deletion of that same box.
    controller.setMode("draw");
    await controller.onDrawBox(5, 5, 15, 18);
    controller.setMode("delete");
    const drawnIndex = controller.state.displayedBoxes().length - 1;
    await controller.onDeleteBox(drawnIndex);
    await controller.submit();
    const bundle = await api.exportSession(sessionId);
    assert.equal(bundle.event_counts.click_hint, 3);
    assert.equal(bundle.event_counts.draw_box, 1);
    assert.equal(bundle.event_counts.delete_box, 1);
    assert.equal(bundle.event_counts.submit, 1);
    assert.equal(bundle.event_counts.class_change, 3);
    for (const boxes of Object.values(bundle.annotations)) {
        for (const box of boxes) {
            assert.equal(box.score, 1.0);
        }
    }
});
test("stale-response safety: double click renders the two-hint answer", {
    skip: !HAVE_PYTHON && "python3 with c3det not available",
}, async () => {
    const api = new ApiClient(BASE);
    const info = await api.datasetInfo();
    const imageId = info.splits["test"][1] ?? info.splits["test"][0];
    const sessionId = await api.createSession("test", "assisted");
    const { listener: lis, shown } = listener();
    const controller = new AnnotatorController(api, sessionId, imageId, "assisted", lis);
    // Fire two hints back to back without awaiting the first.
    const first = controller.onHintClick(10, 10);
    const second = controller.onHintClick(40, 40);
    await Promise.all([first, second]);
    const expected = await api.infer(imageId, controller.state.hints);
    assert.equal(controller.state.hints.length, 2);
    assert.ok(sameDetections(controller.state.displayedBoxes(), expected.detections), "display must match the two-hint inference");
    // No later render may show fewer model boxes than the final one if the
    // one-hint response straggled in: check render history monotonicity.
    const finalCount = shown.boxes.at(-1).filter((b) => b.source === "model").length;
    assert.equal(finalCount, expected.detections.length);
});
//# sourceMappingURL=acceptance.test.js.map