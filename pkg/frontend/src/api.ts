/**
 * Typed client for the session-service HTTP API. The fetch implementation is
 * injectable so tests can replay frozen server responses.
 */

import type {
  EltReportView,
  RunRecordView,
  SessionView,
  SummaryView,
  VarianceReportView,
  VerdictView,
} from './types.js';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: unknown,
  ) {
    super(typeof detail === 'string' ? detail : `request failed with ${status}`);
  }
}

async function parseError(response: Response): Promise<never> {
  let detail: unknown = null;
  try {
    const body = (await response.json()) as { detail?: unknown };
    detail = body.detail ?? body;
  } catch {
    detail = await response.text().catch(() => null);
  }
  throw new ApiError(response.status, detail);
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async requestJson<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      await parseError(response);
    }
    return (await response.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.requestJson<T>(path, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    });
  }

  startSession(prompt: string): Promise<SessionView> {
    return this.post<SessionView>('/sessions', { prompt });
  }

  sendMessage(sessionId: string, text: string): Promise<SessionView> {
    return this.post<SessionView>(`/sessions/${sessionId}/messages`, { text });
  }

  getSession(sessionId: string): Promise<SessionView> {
    return this.requestJson<SessionView>(`/sessions/${sessionId}`);
  }

  async getPipelineYaml(pipelineId: string): Promise<string> {
    const response = await this.fetchImpl(`${this.baseUrl}/pipelines/${pipelineId}`);
    if (!response.ok) {
      await parseError(response);
    }
    return response.text();
  }

  validatePipeline(pipelineId: string): Promise<VerdictView> {
    return this.post<VerdictView>(`/pipelines/${pipelineId}/validate`, {});
  }

  runPipeline(pipelineId: string, workers = 1): Promise<RunRecordView> {
    return this.post<RunRecordView>(`/pipelines/${pipelineId}/run?workers=${workers}`, {});
  }

  getSummary(pipelineId: string, groupBy: string, fn = 'count', col = ''): Promise<SummaryView> {
    const params = new URLSearchParams({ group_by: groupBy, fn });
    if (col) params.set('col', col);
    return this.requestJson<SummaryView>(`/pipelines/${pipelineId}/summary?${params}`);
  }

  evalVariance(prompt: string, n: number): Promise<VarianceReportView> {
    return this.post<VarianceReportView>('/eval/variance', { prompt, n });
  }

  evalElt(suite: string, mode: string): Promise<EltReportView> {
    return this.post<EltReportView>('/eval/elt', { suite, mode });
  }
}
