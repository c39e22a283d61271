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

import {
  ExportReply,
  HealthReply,
  NextTaskReply,
  SchemaError,
  SubmissionBody,
  SubmissionReply,
  parseExportReply,
  parseHealthReply,
  parseNextTaskReply,
  parseSubmissionReply,
} from './api-schema.v1.js';

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export class NetworkError extends Error {}

export interface ClientConfig {
  serviceUrl?: string;          // '' serves same-origin deployments
  token?: string | null;        // bearer token; omit when auth is disabled
  fetchImpl?: typeof fetch;     // injectable for tests
}

export class AnnotationClient {
  private readonly serviceUrl: string;
  private readonly token: string | null;
  private readonly fetchImpl: typeof fetch;

  constructor(config: ClientConfig = {}) {
    this.serviceUrl = (config.serviceUrl ?? '').replace(/\/+$/, '');
    this.token = config.token ?? null;
    this.fetchImpl = config.fetchImpl ?? globalThis.fetch.bind(globalThis);
  }

  async health(): Promise<HealthReply> {
    return parseHealthReply(await this.request('GET', '/api/health'));
  }

  async nextTask(annotator: string): Promise<NextTaskReply> {
    return parseNextTaskReply(
      await this.request('GET', '/api/tasks/next', { annotator }),
    );
  }

  async submit(body: SubmissionBody): Promise<SubmissionReply> {
    return parseSubmissionReply(
      await this.request('POST', '/api/submissions', undefined, body),
    );
  }

  async exportRows(kind: 'empathy' | 'fact_review'): Promise<ExportReply> {
    return parseExportReply(await this.request('GET', '/api/export', { kind }));
  }

  private url(path: string, params?: Record<string, string>): string {
    const query = params ? `?${new URLSearchParams(params)}` : '';
    return `${this.serviceUrl}${path}${query}`;
  }

  private async request(
    method: string,
    path: string,
    params?: Record<string, string>,
    body?: unknown,
  ): Promise<unknown> {
    const headers: Record<string, string> = {};
    if (this.token) headers['authorization'] = `Bearer ${this.token}`;
    if (body !== undefined) headers['content-type'] = 'application/json';

    let response: Response;
    try {
      response = await this.fetchImpl(this.url(path, params), {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (cause) {
      throw new NetworkError(`cannot reach the annotation service: ${String(cause)}`);
    }

    if (!response.ok) {
      throw new ApiError(response.status, await detailOf(response));
    }
    try {
      return await response.json();
    } catch {
      throw new SchemaError(`${method} ${path}: reply is not JSON`);
    }
  }
}

/** FastAPI error bodies look like {"detail": ...}; fall back to raw text. */
async function detailOf(response: Response): Promise<string> {
  let text = '';
  try {
    text = await response.text();
  } catch {
    return response.statusText;
  }
  try {
    const parsed: unknown = JSON.parse(text);
    if (typeof parsed === 'object' && parsed !== null && 'detail' in parsed) {
      const detail = (parsed as { detail: unknown }).detail;
      return typeof detail === 'string' ? detail : JSON.stringify(detail);
    }
  } catch {
    // not JSON; use the raw text
  }
  return text || response.statusText;
}
