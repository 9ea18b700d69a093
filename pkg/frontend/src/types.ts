/** Wire types shared with the annotation service API. */

export interface WireBox {
  bbox: [number, number, number, number];
  class_id: number;
  score?: number;
}

export interface WireDetection {
  bbox: [number, number, number, number];
  class_id: number;
  score: number;
}

export interface InferResponse {
  detections: WireDetection[];
  latency_ms: number;
  model_version: string;
}

export interface DatasetInfo {
  classes: string[];
  splits: Record<string, string[]>;
}

export interface HintClick {
  x: number;
  y: number;
  class_id: number;
}

export type EventType =
  | "click_hint"
  | "draw_box"
  | "delete_box"
  | "class_change"
  | "submit";

export type EditMode = "hint" | "draw" | "delete";

/** One displayed box: either a model detection or a manual edit. */
export interface DisplayBox {
  bbox: [number, number, number, number];
  classId: number;
  score: number;
  source: "model" | "manual";
}

export interface ExportBundle {
  session: { session_id: string; mode: string; dataset: string };
  annotations: Record<string, WireBox[]>;
  event_counts: Record<EventType, number>;
  total_events: number;
  elapsed_ms: number;
}
