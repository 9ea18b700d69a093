/** Canvas state: hints, displayed boxes, selected class, edit mode.
 *
 * Displayed model boxes always come from exactly one inference response
 * (the latest applied one); manual boxes are layered separately so a new
 * response can never produce a half-stale mix.
 */

import type { DisplayBox, EditMode, HintClick, WireDetection } from "./types.js";

export class CanvasState {
  hints: HintClick[] = [];
  selectedClass = 0;
  mode: EditMode = "hint";
  /** Monotonic id of the newest infer request issued. */
  lastRequestId = 0;
  /** Id of the request whose response is currently displayed (0 = none). */
  appliedResponseId = 0;

  private modelBoxes: DisplayBox[] = [];
  private manualBoxes: DisplayBox[] = [];
  /** Indices into modelBoxes hidden by manual deletion. */
  private deletedModel = new Set<number>();

  nextRequestId(): number {
    this.lastRequestId += 1;
    return this.lastRequestId;
  }

  /** Apply a response only if it answers the newest request. */
  applyInferResponse(requestId: number, detections: WireDetection[]): boolean {
    if (requestId !== this.lastRequestId || requestId <= this.appliedResponseId) {
      return false; // stale: a newer request exists or was already applied
    }
    this.appliedResponseId = requestId;
    this.modelBoxes = detections.map((d) => ({
      bbox: d.bbox,
      classId: d.class_id,
      score: d.score,
      source: "model" as const,
    }));
    this.deletedModel.clear();
    return true;
  }

  addManualBox(bbox: [number, number, number, number], classId: number): DisplayBox {
    const box: DisplayBox = { bbox, classId, score: 1, source: "manual" };
    this.manualBoxes.push(box);
    return box;
  }

  /** Delete the displayed box at the given index; returns the removed box. */
  deleteBox(index: number): DisplayBox | undefined {
    const boxes = this.displayedBoxes();
    const target = boxes[index];
    if (!target) return undefined;
    if (target.source === "manual") {
      this.manualBoxes = this.manualBoxes.filter((b) => b !== target);
    } else {
      const modelIndex = this.modelBoxes.indexOf(target);
      if (modelIndex >= 0) this.deletedModel.add(modelIndex);
    }
    return target;
  }

  reclassBox(index: number, classId: number): DisplayBox | undefined {
    const boxes = this.displayedBoxes();
    const target = boxes[index];
    if (!target) return undefined;
    target.classId = classId;
    return target;
  }

  displayedBoxes(): DisplayBox[] {
    const model = this.modelBoxes.filter((_, i) => !this.deletedModel.has(i));
    return [...model, ...this.manualBoxes];
  }

  reset(): void {
    this.hints = [];
    this.modelBoxes = [];
    this.manualBoxes = [];
    this.deletedModel.clear();
    this.appliedResponseId = 0;
  }
}
