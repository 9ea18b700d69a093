/** Canvas state: hints, displayed boxes, selected class, edit mode.
 *
 * Displayed model boxes always come from exactly one inference response
 * (the latest applied one); manual boxes are layered separately so a new
 * response can never produce a half-stale mix.
 */
export class CanvasState {
    hints = [];
    selectedClass = 0;
    mode = "hint";
    /** Monotonic id of the newest infer request issued. */
    lastRequestId = 0;
    /** Id of the request whose response is currently displayed (0 = none). */
    appliedResponseId = 0;
    modelBoxes = [];
    manualBoxes = [];
    /** Indices into modelBoxes hidden by manual deletion. */
    deletedModel = new Set();
    nextRequestId() {
        this.lastRequestId += 1;
        return this.lastRequestId;
    }
    /** Apply a response only if it answers the newest request. */
    applyInferResponse(requestId, detections) {
        if (requestId !== this.lastRequestId || requestId <= this.appliedResponseId) {
            return false; // stale: a newer request exists or was already applied
        }
        this.appliedResponseId = requestId;
        this.modelBoxes = detections.map((d) => ({
            bbox: d.bbox,
            classId: d.class_id,
            score: d.score,
            source: "model",
        }));
        this.deletedModel.clear();
        return true;
    }
    addManualBox(bbox, classId) {
        const box = { bbox, classId, score: 1, source: "manual" };
        this.manualBoxes.push(box);
        return box;
    }
    /** Delete the displayed box at the given index; returns the removed box. */
    deleteBox(index) {
        const boxes = this.displayedBoxes();
        const target = boxes[index];
        if (!target)
            return undefined;
        if (target.source === "manual") {
            this.manualBoxes = this.manualBoxes.filter((b) => b !== target);
        }
        else {
            const modelIndex = this.modelBoxes.indexOf(target);
            if (modelIndex >= 0)
                this.deletedModel.add(modelIndex);
        }
        return target;
    }
    reclassBox(index, classId) {
        const boxes = this.displayedBoxes();
        const target = boxes[index];
        if (!target)
            return undefined;
        target.classId = classId;
        return target;
    }
    displayedBoxes() {
        const model = this.modelBoxes.filter((_, i) => !this.deletedModel.has(i));
        return [...model, ...this.manualBoxes];
    }
    reset() {
        this.hints = [];
        this.modelBoxes = [];
        this.manualBoxes = [];
        this.deletedModel.clear();
        this.appliedResponseId = 0;
    }
}
//# sourceMappingURL=state.js.map