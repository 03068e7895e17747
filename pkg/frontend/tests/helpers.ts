import { readFileSync } from 'node:fs';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';

import type { FetchLike } from '../src/api.js';

const here = dirname(fileURLToPath(import.meta.url));

export function fixtureText(name: string): string {
  return readFileSync(join(here, 'fixtures', name), 'utf-8');
}

export function fixtureJson<T>(name: string): T {
  return JSON.parse(fixtureText(name)) as T;
}

export interface Scripted {
  method: string;
  path: string;
  status?: number;
  body: unknown;
  contentType?: string;
}

/**
 * Sequenced fetch stub: each call must match the next scripted entry's
 * method+path (a frozen mirror of the live server's behavior).
 */
export function scriptedFetch(entries: Scripted[]): { fetch: FetchLike; calls: string[] } {
  const queue = [...entries];
  const calls: string[] = [];
  const fetchImpl: FetchLike = async (url, init) => {
    const method = init?.method ?? 'GET';
    const path = url.replace(/^https?:\/\/[^/]+/, '').split('?')[0];
    calls.push(`${method} ${path}`);
    const next = queue.shift();
    if (!next) throw new Error(`unexpected request: ${method} ${path}`);
    if (next.method !== method || next.path !== path) {
      throw new Error(`expected ${next.method} ${next.path}, got ${method} ${path}`);
    }
    const contentType = next.contentType ?? 'application/json';
    const body =
      typeof next.body === 'string' && contentType !== 'application/json'
        ? next.body
        : JSON.stringify(next.body);
    return new Response(body, {
      status: next.status ?? 200,
      headers: { 'Content-Type': contentType },
    });
  };
  return { fetch: fetchImpl, calls };
}
