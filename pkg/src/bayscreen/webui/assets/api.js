/** Typed client for the screening engine's local HTTP API. */
export const API_PREFIX = "/api/v1";
export class ApiError extends Error {
    constructor(status, message) {
        super(message);
        this.status = status;
    }
}
async function request(path, init) {
    const response = await fetch(API_PREFIX + path, {
        headers: { "Content-Type": "application/json" },
        ...init,
    });
    const body = await response.json().catch(() => ({}));
    if (!response.ok) {
        const detail = typeof body === "object" && body !== null && "detail" in body
            ? String(body.detail)
            : response.statusText;
        throw new ApiError(response.status, detail);
    }
    return body;
}
export function listSessions() {
    return request("/sessions");
}
export function getStatus(session) {
    return request(`/sessions/${encodeURIComponent(session)}/status`);
}
export function getQueue(session, offset = 0, limit = 50) {
    const q = `?status=needs_review&offset=${offset}&limit=${limit}`;
    return request(`/sessions/${encodeURIComponent(session)}/records${q}`);
}
export function postLabel(session, recordId, label) {
    return request(`/sessions/${encodeURIComponent(session)}/labels`, {
        method: "POST",
        body: JSON.stringify({ record_id: recordId, label }),
    });
}
export function postIterate(session, stopOnUnreviewed) {
    return request(`/sessions/${encodeURIComponent(session)}/iterate`, {
        method: "POST",
        body: JSON.stringify({ stop_on_unreviewed: stopOnUnreviewed }),
    });
}
export function getDensities(session) {
    return request(`/sessions/${encodeURIComponent(session)}/densities`);
}
export function getTrends(session) {
    return request(`/sessions/${encodeURIComponent(session)}/trends`);
}
export function getPerformance(session) {
    return request(`/sessions/${encodeURIComponent(session)}/performance`);
}
export function getRules(session) {
    return request(`/sessions/${encodeURIComponent(session)}/rules`);
}
export function generateRules(session) {
    return request(`/sessions/${encodeURIComponent(session)}/rules`, {
        method: "POST",
    });
}
export function postSelection(session, selected, edited) {
    return request(`/sessions/${encodeURIComponent(session)}/rules/selection`, {
        method: "POST",
        body: JSON.stringify({ selected, edited }),
    });
}
