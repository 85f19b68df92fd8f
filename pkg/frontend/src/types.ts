// Payload shapes of the /api/v1 endpoints.

export type Point = [number, number];

export interface ModelSummary {
  n: number;
  m: number;
  eigenvalues: number[];
  fingerprint: string;
  warnings: string[];
}

export interface RasterPayload {
  shape: [number, number];
  values: number[];
}

export interface ReconstructResponse {
  points: Point[];
  k: number;
  raster?: RasterPayload;
}

export interface BlendshapeInfo {
  name: string;
  k: number;
  description: string;
}

export interface BlendshapeFile extends BlendshapeInfo {
  offset: number[];
  model_fingerprint: string;
}

export interface TrainStatus {
  state: 'idle' | 'running' | 'done' | 'failed';
  step: number;
  losses: Record<string, number> | null;
  job_id: string | null;
  error: string | null;
}

export interface ErrorBody {
  error: string;
  message: string;
}
