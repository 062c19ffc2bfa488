// Thin fetch client for the provtrail API. Every method maps 1:1 onto an
// endpoint; errors surface as ApiError with the server's status/code.

import type {
  AlertDoc,
  ArtifactDoc,
  CaptureSummary,
  DeepDiffDoc,
  DiffDoc,
  GraphDoc,
  MonitorDoc,
  NodeDoc,
  PipelineDoc,
  TaggedValue,
} from './types.js';

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

async function call<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(base + path, {
    headers: { 'Content-Type': 'application/json' },
    ...init,
  });
  const body = await resp.json();
  if (!resp.ok) {
    throw new ApiError(resp.status, body.code ?? 'error', body.message ?? resp.statusText);
  }
  return body as T;
}

export class ApiClient {
  constructor(public base: string) {}

  get<T>(path: string): Promise<T> {
    return call<T>(this.base, path);
  }

  post<T>(path: string, body: unknown): Promise<T> {
    return call<T>(this.base, path, { method: 'POST', body: JSON.stringify(body) });
  }

  graph(kinds = '', limit = 500): Promise<GraphDoc> {
    return this.get(`/graph?kinds=${encodeURIComponent(kinds)}&limit=${limit}`);
  }

  node(id: number): Promise<NodeDoc> {
    return this.get(`/node/${id}`);
  }

  query(pattern: unknown): Promise<{ bindings?: number[][]; count?: number }> {
    return this.post('/query', pattern);
  }

  diff(a: number, b: number, content = false): Promise<DiffDoc> {
    return this.get(`/diff?a=${a}&b=${b}&content=${content ? 1 : 0}`);
  }

  deepdiff(a: number, b: number): Promise<DeepDiffDoc> {
    return this.get(`/deepdiff?a=${a}&b=${b}`);
  }

  timeseries(artifact: string, key: string): Promise<{ points: [number, TaggedValue][] }> {
    return this.get(
      `/timeseries?artifact=${encodeURIComponent(artifact)}&key=${encodeURIComponent(key)}`,
    );
  }

  artifacts(tag = ''): Promise<{ artifacts: ArtifactDoc[] }> {
    return this.get(`/artifacts${tag ? `?tag=${encodeURIComponent(tag)}` : ''}`);
  }

  monitors(): Promise<{ monitors: MonitorDoc[] }> {
    return this.get('/monitors');
  }

  addMonitor(spec: {
    target: string;
    key: string;
    condition: Record<string, unknown>;
    enabled?: boolean;
  }): Promise<{ id: number }> {
    return this.post('/monitors', spec);
  }

  removeMonitor(id: number): Promise<{ ok: boolean }> {
    return call(this.base, `/monitors/${id}`, { method: 'DELETE' });
  }

  alerts(): Promise<{ alerts: AlertDoc[] }> {
    return this.get('/alerts');
  }

  pipelines(): Promise<{ pipelines: PipelineDoc[] }> {
    return this.get('/pipelines');
  }

  fileviews(): Promise<{ fileviews: Record<string, { sql: string; mode: string; view_reads: number }> }> {
    return this.get('/fileviews');
  }

  annotate(node: number, key: string, value: unknown): Promise<{ ok: boolean }> {
    return this.post('/annotate', { node, key, value });
  }

  gridrun(
    derivation: number,
    params: { key: string; start?: number; stop?: number; step?: number; values?: unknown[] }[],
  ): Promise<{ runs: CaptureSummary[] }> {
    return this.post('/gridrun', { derivation, params });
  }
}
