/** Typed client for the annotation service. All backend traffic goes
 * through this module; the fetch implementation is injectable for tests. */

import type {
  DatasetInfo,
  EventType,
  HintClick,
  InferResponse,
  WireBox,
  ExportBundle,
} from "./types.js";

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

async function expectJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = (await resp.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) =>
      fetch(input, init),
  ) {}

  async createSession(
    dataset: string,
    mode: "manual" | "assisted",
  ): Promise<string> {
    const resp = await this.fetchImpl(`${this.baseUrl}/api/v1/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ dataset, mode }),
    });
    const body = await expectJson<{ session_id: string }>(resp);
    return body.session_id;
  }

  async datasetInfo(): Promise<DatasetInfo> {
    const resp = await this.fetchImpl(`${this.baseUrl}/api/v1/dataset`);
    return expectJson<DatasetInfo>(resp);
  }

  imageUrl(imageId: string): string {
    return `${this.baseUrl}/api/v1/images/${imageId}`;
  }

  async infer(
    imageId: string,
    hints: HintClick[],
    signal?: AbortSignal,
  ): Promise<InferResponse> {
    const resp = await this.fetchImpl(`${this.baseUrl}/api/v1/infer`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ image_id: imageId, user_inputs: hints }),
      signal,
    });
    return expectJson<InferResponse>(resp);
  }

  async putAnnotations(
    sessionId: string,
    imageId: string,
    boxes: WireBox[],
  ): Promise<void> {
    const resp = await this.fetchImpl(
      `${this.baseUrl}/api/v1/sessions/${sessionId}/annotations/${imageId}`,
      {
        method: "PUT",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ boxes }),
      },
    );
    if (!resp.ok) throw new ApiError(resp.status, resp.statusText);
  }

  async postEvent(
    sessionId: string,
    type: EventType,
    tMs: number,
    payload: Record<string, unknown> = {},
  ): Promise<void> {
    const resp = await this.fetchImpl(
      `${this.baseUrl}/api/v1/sessions/${sessionId}/events`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ type, t_ms: tMs, payload }),
      },
    );
    if (!resp.ok) throw new ApiError(resp.status, resp.statusText);
  }

  async exportSession(sessionId: string): Promise<ExportBundle> {
    const resp = await this.fetchImpl(
      `${this.baseUrl}/api/v1/sessions/${sessionId}/export`,
    );
    return expectJson<ExportBundle>(resp);
  }
}
