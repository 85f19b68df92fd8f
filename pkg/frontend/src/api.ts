import type {
  BlendshapeFile,
  BlendshapeInfo,
  ModelSummary,
  Point,
  ReconstructResponse,
  TrainStatus,
} from './types.js';

export interface TransportResponse {
  status: number;
  json(): Promise<unknown>;
}

// fetch-shaped so tests can substitute a double
export type Transport = (path: string, init?: RequestInit) => Promise<TransportResponse>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

async function unwrap<T>(resp: TransportResponse): Promise<T> {
  if (resp.status >= 200 && resp.status < 300) {
    return (await resp.json()) as T;
  }
  let code = 'unknown_error';
  let message = `HTTP ${resp.status}`;
  try {
    const body = (await resp.json()) as { error?: string; message?: string };
    if (body.error) code = body.error;
    if (body.message) message = body.message;
  } catch {
    // non-JSON error body; keep defaults
  }
  throw new ApiError(resp.status, code, message);
}

export class ApiClient {
  constructor(
    private readonly transport: Transport,
    private readonly base = '/api/v1',
  ) {}

  private get<T>(path: string): Promise<T> {
    return this.transport(this.base + path).then((r) => unwrap<T>(r));
  }

  private send<T>(method: string, path: string, body?: unknown): Promise<T> {
    return this.transport(this.base + path, {
      method,
      headers: { 'content-type': 'application/json' },
      body: body === undefined ? undefined : JSON.stringify(body),
    }).then((r) => unwrap<T>(r));
  }

  getModel(): Promise<ModelSummary> {
    return this.get('/model');
  }

  reconstruct(params: number[]): Promise<ReconstructResponse> {
    return this.send('POST', '/reconstruct', { params });
  }

  fit(points: Point[], k: number): Promise<{ params: number[]; k: number }> {
    return this.send('POST', '/fit', { points, k });
  }

  interpolate(from: number[], to: number[], steps: number): Promise<{ frames: number[][] }> {
    return this.send('POST', '/interpolate', { from, to, steps });
  }

  scale(params: number[], alpha: number): Promise<{ params: number[] }> {
    return this.send('POST', '/scale', { params, alpha });
  }

  listBlendshapes(): Promise<{ model_fingerprint: string; blendshapes: BlendshapeInfo[] }> {
    return this.get('/blendshapes');
  }

  getBlendshape(name: string): Promise<BlendshapeFile> {
    return this.get(`/blendshapes/${encodeURIComponent(name)}`);
  }

  createBlendshape(name: string, offset: number[], description = ''): Promise<{ name: string }> {
    return this.send('POST', '/blendshapes', { name, offset, description });
  }

  deleteBlendshape(name: string): Promise<{ deleted: string }> {
    return this.send('DELETE', `/blendshapes/${encodeURIComponent(name)}`);
  }

  trainStatus(): Promise<TrainStatus> {
    return this.get('/adaptor/status');
  }
}

export function fetchTransport(): Transport {
  return (path, init) => fetch(path, init);
}
