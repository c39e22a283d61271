/**
 * HTTP client against a scripted fetch: URL construction, bearer headers,
 * and the three error lanes (ApiError with status, NetworkError, SchemaError).
 */

import { describe, expect, it } from 'vitest';
import { SchemaError } from '../src/api-schema.v1.js';
import { AnnotationClient, ApiError, NetworkError } from '../src/client.js';

interface Seen {
  url: string;
  method?: string;
  headers: Record<string, string>;
  body?: string;
}

/** A fetch stub that records the request and replays a canned response. */
function scripted(status: number, payload: unknown): { calls: Seen[]; fetch: typeof fetch } {
  const calls: Seen[] = [];
  const impl = (async (input: RequestInfo | URL, init?: RequestInit) => {
    calls.push({
      url: String(input),
      method: init?.method,
      headers: (init?.headers ?? {}) as Record<string, string>,
      body: typeof init?.body === 'string' ? init.body : undefined,
    });
    const body = typeof payload === 'string' ? payload : JSON.stringify(payload);
    return new Response(body, {
      status,
      headers: { 'content-type': 'application/json' },
    });
  }) as typeof fetch;
  return { calls, fetch: impl };
}

const TASK_REPLY = { task: null, remaining: 0 };

describe('request construction', () => {
  it('joins the service URL and encodes the annotator', async () => {
    const { calls, fetch } = scripted(200, TASK_REPLY);
    const client = new AnnotationClient({ serviceUrl: 'http://host:8400/', fetchImpl: fetch });
    await client.nextTask('rater one');
    expect(calls[0].url).toBe('http://host:8400/api/tasks/next?annotator=rater+one');
    expect(calls[0].headers.authorization).toBeUndefined();
  });

  it('uses relative paths for same-origin deployments', async () => {
    const { calls, fetch } = scripted(200, TASK_REPLY);
    const client = new AnnotationClient({ fetchImpl: fetch });
    await client.nextTask('r');
    expect(calls[0].url).toBe('/api/tasks/next?annotator=r');
  });

  it('sends the bearer token on every call when configured', async () => {
    const { calls, fetch } = scripted(200, { kind: 'empathy', rows: [] });
    const client = new AnnotationClient({ token: 'secret-1', fetchImpl: fetch });
    await client.exportRows('empathy');
    expect(calls[0].headers.authorization).toBe('Bearer secret-1');
  });

  it('posts submissions as JSON', async () => {
    const { calls, fetch } = scripted(200, {
      status: 'accepted',
      task_id: 'emp-ex1',
      remaining: 4,
    });
    const client = new AnnotationClient({ fetchImpl: fetch });
    const reply = await client.submit({ task_id: 'emp-ex1', annotator: 'r', label: 'equal' });
    expect(reply.status).toBe('accepted');
    expect(calls[0].method).toBe('POST');
    expect(calls[0].headers['content-type']).toBe('application/json');
    expect(JSON.parse(calls[0].body ?? '')).toEqual({
      task_id: 'emp-ex1',
      annotator: 'r',
      label: 'equal',
    });
  });
});

describe('error lanes', () => {
  it('maps HTTP failures to ApiError with the FastAPI detail', async () => {
    const { fetch } = scripted(409, { detail: 'already submitted with a different body' });
    const client = new AnnotationClient({ fetchImpl: fetch });
    const error = await client
      .submit({ task_id: 't', annotator: 'r', label: 'equal' })
      .then(() => null, (e: unknown) => e);
    expect(error).toBeInstanceOf(ApiError);
    expect((error as ApiError).status).toBe(409);
    expect((error as ApiError).detail).toContain('different body');
  });

  it('wraps transport failures in NetworkError', async () => {
    const failing = (async () => {
      throw new TypeError('fetch failed');
    }) as typeof fetch;
    const client = new AnnotationClient({ fetchImpl: failing });
    await expect(client.health()).rejects.toBeInstanceOf(NetworkError);
  });

  it('raises SchemaError on non-JSON and on malformed replies', async () => {
    const notJson = scripted(200, 'it broke');
    await expect(
      new AnnotationClient({ fetchImpl: notJson.fetch }).health(),
    ).rejects.toBeInstanceOf(SchemaError);

    const offSchema = scripted(200, { task: null, remaining: 0, hidden: {} });
    await expect(
      new AnnotationClient({ fetchImpl: offSchema.fetch }).nextTask('r'),
    ).rejects.toBeInstanceOf(SchemaError);
  });
});
