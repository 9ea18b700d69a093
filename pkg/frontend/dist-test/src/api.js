/** Typed client for the annotation service. All backend traffic goes
 * through this module; the fetch implementation is injectable for tests. */
export class ApiError extends Error {
    status;
    constructor(status, message) {
        super(message);
        this.status = status;
    }
}
async function expectJson(resp) {
    if (!resp.ok) {
        let detail = resp.statusText;
        try {
            const body = (await resp.json());
            if (body.detail)
                detail = body.detail;
        }
        catch {
            // non-JSON error body; keep the status text
        }
        throw new ApiError(resp.status, detail);
    }
    return (await resp.json());
}
export class ApiClient {
    baseUrl;
    fetchImpl;
    constructor(baseUrl = "", fetchImpl = (input, init) => fetch(input, init)) {
        this.baseUrl = baseUrl;
        this.fetchImpl = fetchImpl;
    }
    async createSession(dataset, mode) {
        const resp = await this.fetchImpl(`${this.baseUrl}/api/v1/sessions`, {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify({ dataset, mode }),
        });
        const body = await expectJson(resp);
        return body.session_id;
    }
    async datasetInfo() {
        const resp = await this.fetchImpl(`${this.baseUrl}/api/v1/dataset`);
        return expectJson(resp);
    }
    imageUrl(imageId) {
        return `${this.baseUrl}/api/v1/images/${imageId}`;
    }
    async infer(imageId, hints, signal) {
        const resp = await this.fetchImpl(`${this.baseUrl}/api/v1/infer`, {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify({ image_id: imageId, user_inputs: hints }),
            signal,
        });
        return expectJson(resp);
    }
    async putAnnotations(sessionId, imageId, boxes) {
        const resp = await this.fetchImpl(`${this.baseUrl}/api/v1/sessions/${sessionId}/annotations/${imageId}`, {
            method: "PUT",
            headers: { "content-type": "application/json" },
            body: JSON.stringify({ boxes }),
        });
        if (!resp.ok)
            throw new ApiError(resp.status, resp.statusText);
    }
    async postEvent(sessionId, type, tMs, payload = {}) {
        const resp = await this.fetchImpl(`${this.baseUrl}/api/v1/sessions/${sessionId}/events`, {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify({ type, t_ms: tMs, payload }),
        });
        if (!resp.ok)
            throw new ApiError(resp.status, resp.statusText);
    }
    async exportSession(sessionId) {
        const resp = await this.fetchImpl(`${this.baseUrl}/api/v1/sessions/${sessionId}/export`);
        return expectJson(resp);
    }
}
//# sourceMappingURL=api.js.map