/** In-memory stand-in for the annotation service, with controllable
 * inference latency so response races are deterministic in tests. */
export class MockServer {
    events = [];
    annotations = {};
    inferCalls = [];
    manualInfer = false;
    failInfer = false;
    queue = [];
    /** Default canned answer: one detection per hint, echoing its class. */
    detectionsFor(hints) {
        return hints.map((h, i) => ({
            bbox: [h.x - 2, h.y - 2, h.x + 2, h.y + 2],
            class_id: h.class_id,
            score: 0.9 - i * 0.05,
        }));
    }
    /** Resolve the oldest pending inference (manual mode). */
    releaseInfer(detections) {
        const pending = this.queue.shift();
        if (!pending)
            throw new Error("no pending inference");
        pending.resolve(detections ?? this.detectionsFor(pending.hints));
    }
    get pendingCount() {
        return this.queue.length;
    }
    fetch = async (input, init) => {
        const url = typeof input === "string" ? input : String(input);
        const method = init?.method ?? "GET";
        const body = init?.body ? JSON.parse(String(init.body)) : undefined;
        if (url.endsWith("/api/v1/sessions") && method === "POST") {
            return json201({ session_id: "mock-session" });
        }
        if (url.includes("/events") && method === "POST") {
            this.events.push(body);
            return jsonOk({ accepted: true }, 202);
        }
        if (url.includes("/annotations/") && method === "PUT") {
            const imageId = url.split("/").pop();
            this.annotations[imageId] = body.boxes;
            return new Response(null, { status: 204 });
        }
        if (url.endsWith("/api/v1/infer") && method === "POST") {
            if (this.failInfer) {
                return jsonOk({ detail: "model not loaded" }, 503);
            }
            this.inferCalls.push(body.user_inputs);
            const detections = await new Promise((resolve, reject) => {
                const pending = {
                    hints: body.user_inputs,
                    resolve,
                    reject,
                    signal: init?.signal ?? undefined,
                };
                if (this.manualInfer) {
                    this.queue.push(pending);
                }
                else {
                    resolve(this.detectionsFor(body.user_inputs));
                }
            });
            return jsonOk({ detections, latency_ms: 1, model_version: "mock" });
        }
        if (url.includes("/export")) {
            const counts = {
                click_hint: 0, draw_box: 0, delete_box: 0, class_change: 0, submit: 0,
            };
            for (const e of this.events)
                counts[e.type] = (counts[e.type] ?? 0) + 1;
            return jsonOk({
                session: { session_id: "mock-session", mode: "assisted", dataset: "test" },
                annotations: Object.fromEntries(Object.entries(this.annotations).map(([k, boxes]) => [
                    k,
                    boxes.map((b) => ({ ...b, score: 1.0 })),
                ])),
                event_counts: counts,
                total_events: this.events.length,
                elapsed_ms: this.events.length ? this.events[this.events.length - 1].t_ms : 0,
            });
        }
        return jsonOk({ detail: `unhandled ${method} ${url}` }, 404);
    };
}
function jsonOk(payload, status = 200) {
    return new Response(JSON.stringify(payload), {
        status,
        headers: { "content-type": "application/json" },
    });
}
function json201(payload) {
    return jsonOk(payload, 201);
}
//# sourceMappingURL=mockserver.js.map