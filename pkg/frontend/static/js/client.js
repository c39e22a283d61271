/**
 * Typed HTTP client for the annotation service.
 *
 * Thin by design: every state change flows through these four endpoints and
 * the UI holds no business logic about tasks. Errors split into three lanes
 * the session machine treats differently — ApiError carries the HTTP status
 * (409 means "already answered differently"), NetworkError means the request
 * may not have reached the service at all, and SchemaError means the reply
 * did not match the published wire format.
 */
import { SchemaError, parseExportReply, parseHealthReply, parseNextTaskReply, parseSubmissionReply, } from './api-schema.v1.js';
export class ApiError extends Error {
    status;
    detail;
    constructor(status, detail) {
        super(`HTTP ${status}: ${detail}`);
        this.status = status;
        this.detail = detail;
    }
}
export class NetworkError extends Error {
}
export class AnnotationClient {
    serviceUrl;
    token;
    fetchImpl;
    constructor(config = {}) {
        this.serviceUrl = (config.serviceUrl ?? '').replace(/\/+$/, '');
        this.token = config.token ?? null;
        this.fetchImpl = config.fetchImpl ?? globalThis.fetch.bind(globalThis);
    }
    async health() {
        return parseHealthReply(await this.request('GET', '/api/health'));
    }
    async nextTask(annotator) {
        return parseNextTaskReply(await this.request('GET', '/api/tasks/next', { annotator }));
    }
    async submit(body) {
        return parseSubmissionReply(await this.request('POST', '/api/submissions', undefined, body));
    }
    async exportRows(kind) {
        return parseExportReply(await this.request('GET', '/api/export', { kind }));
    }
    url(path, params) {
        const query = params ? `?${new URLSearchParams(params)}` : '';
        return `${this.serviceUrl}${path}${query}`;
    }
    async request(method, path, params, body) {
        const headers = {};
        if (this.token)
            headers['authorization'] = `Bearer ${this.token}`;
        if (body !== undefined)
            headers['content-type'] = 'application/json';
        let response;
        try {
            response = await this.fetchImpl(this.url(path, params), {
                method,
                headers,
                body: body === undefined ? undefined : JSON.stringify(body),
            });
        }
        catch (cause) {
            throw new NetworkError(`cannot reach the annotation service: ${String(cause)}`);
        }
        if (!response.ok) {
            throw new ApiError(response.status, await detailOf(response));
        }
        try {
            return await response.json();
        }
        catch {
            throw new SchemaError(`${method} ${path}: reply is not JSON`);
        }
    }
}
/** FastAPI error bodies look like {"detail": ...}; fall back to raw text. */
async function detailOf(response) {
    let text = '';
    try {
        text = await response.text();
    }
    catch {
        return response.statusText;
    }
    try {
        const parsed = JSON.parse(text);
        if (typeof parsed === 'object' && parsed !== null && 'detail' in parsed) {
            const detail = parsed.detail;
            return typeof detail === 'string' ? detail : JSON.stringify(detail);
        }
    }
    catch {
        // not JSON; use the raw text
    }
    return text || response.statusText;
}
