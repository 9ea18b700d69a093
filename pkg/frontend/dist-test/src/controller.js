/** Orchestrates the annotation workflow against the service API.
 *
 * All user gestures flow through here: hint clicks trigger inference with
 * every hint so far (at most one request in flight; newer clicks cancel
 * and replace older requests, and stale responses are discarded by id),
 * manual edits update the local box list, submit persists the snapshot.
 * Every gesture posts exactly one interaction event.
 */
import { CanvasState } from "./state.js";
const NOOP_LISTENER = {
    onBoxesChanged: () => undefined,
    onError: () => undefined,
    onSubmitted: () => undefined,
    onBoxRejected: () => undefined,
};
export const MIN_BOX_SIDE_PX = 3;
export class AnnotatorController {
    api;
    sessionId;
    imageId;
    mode;
    listener;
    now;
    state = new CanvasState();
    inflight = null;
    startedAt;
    pending = Promise.resolve();
    imageSize = null;
    constructor(api, sessionId, imageId, mode, listener = NOOP_LISTENER, now = () => Date.now()) {
        this.api = api;
        this.sessionId = sessionId;
        this.imageId = imageId;
        this.mode = mode;
        this.listener = listener;
        this.now = now;
        this.startedAt = this.now();
    }
    /** Image dimensions; submitted boxes are clamped to them. */
    setImageSize(w, h) {
        this.imageSize = { w, h };
    }
    tMs() {
        return Math.max(0, Math.round(this.now() - this.startedAt));
    }
    /** Events are queued so their t_ms values reach the log in order. */
    logEvent(type, payload) {
        const t = this.tMs();
        this.pending = this.pending.then(() => this.api
            .postEvent(this.sessionId, type, t, payload)
            .catch((err) => this.listener.onError(`event log failed: ${err}`)));
        return this.pending;
    }
    /** Wait for queued event posts (tests and submit use this). */
    flushEvents() {
        return this.pending;
    }
    setMode(mode) {
        if (this.mode === "manual" && mode === "hint") {
            this.listener.onError("hints are disabled in manual mode");
            return;
        }
        this.state.mode = mode;
    }
    selectClass(classId) {
        this.state.selectedClass = classId;
        return this.logEvent("class_change", { class_id: classId });
    }
    /** Hint gesture: append the click and run inference with all hints. */
    async onHintClick(x, y) {
        if (this.mode === "manual") {
            this.listener.onError("hints are disabled in manual mode");
            return;
        }
        if (this.state.mode !== "hint")
            return;
        const hint = { x, y, class_id: this.state.selectedClass };
        this.state.hints.push(hint);
        const logged = this.logEvent("click_hint", hint);
        const requestId = this.state.nextRequestId();
        if (this.inflight)
            this.inflight.abort();
        const aborter = new AbortController();
        this.inflight = aborter;
        try {
            const response = await this.api.infer(this.imageId, [...this.state.hints], aborter.signal);
            if (this.state.applyInferResponse(requestId, response.detections)) {
                this.listener.onBoxesChanged(this.state.displayedBoxes());
            }
        }
        catch (err) {
            if (!aborter.signal.aborted) {
                // Real failure: surface it but keep the accumulated hints.
                this.listener.onError(`inference failed: ${err}`);
            }
        }
        finally {
            if (this.inflight === aborter)
                this.inflight = null;
            await logged;
        }
    }
    /** Draw gesture in image coordinates. */
    onDrawBox(x0, y0, x1, y1) {
        const bbox = [
            Math.min(x0, x1),
            Math.min(y0, y1),
            Math.max(x0, x1),
            Math.max(y0, y1),
        ];
        if (bbox[2] - bbox[0] < MIN_BOX_SIDE_PX ||
            bbox[3] - bbox[1] < MIN_BOX_SIDE_PX) {
            this.listener.onBoxRejected(`box sides must be at least ${MIN_BOX_SIDE_PX} px`);
            return undefined;
        }
        this.state.addManualBox(bbox, this.state.selectedClass);
        this.listener.onBoxesChanged(this.state.displayedBoxes());
        return this.logEvent("draw_box", { bbox, class_id: this.state.selectedClass });
    }
    onDeleteBox(index) {
        const removed = this.state.deleteBox(index);
        if (!removed)
            return undefined;
        this.listener.onBoxesChanged(this.state.displayedBoxes());
        return this.logEvent("delete_box", { bbox: removed.bbox });
    }
    onReclassBox(index, classId) {
        const changed = this.state.reclassBox(index, classId);
        if (!changed)
            return undefined;
        this.listener.onBoxesChanged(this.state.displayedBoxes());
        return this.logEvent("class_change", { bbox: changed.bbox, class_id: classId });
    }
    /** Persist the displayed boxes and log the submission.
     *
     * Model detections may extend past the image border; annotations may
     * not, so boxes are clamped and ones left with no area are dropped.
     */
    async submit() {
        const boxes = [];
        for (const b of this.state.displayedBoxes()) {
            let bbox = b.bbox;
            if (this.imageSize) {
                bbox = [
                    Math.max(0, Math.min(this.imageSize.w, bbox[0])),
                    Math.max(0, Math.min(this.imageSize.h, bbox[1])),
                    Math.max(0, Math.min(this.imageSize.w, bbox[2])),
                    Math.max(0, Math.min(this.imageSize.h, bbox[3])),
                ];
            }
            if (bbox[2] - bbox[0] <= 0 || bbox[3] - bbox[1] <= 0)
                continue;
            boxes.push({ bbox, class_id: b.classId });
        }
        try {
            await this.api.putAnnotations(this.sessionId, this.imageId, boxes);
        }
        catch (err) {
            this.listener.onError(`submit failed: ${err}`);
            return;
        }
        await this.logEvent("submit", { boxes: boxes.length });
        await this.flushEvents();
        this.listener.onSubmitted();
    }
}
//# sourceMappingURL=controller.js.map