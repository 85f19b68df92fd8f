import type { Point } from './types.js';

// Standard 68-point topology: jaw 0-16, brows 17-26, nose 27-35,
// eyes 36-47, mouth 48-67.

export interface Segment {
  indices: number[];
  closed: boolean;
}

function span(start: number, stop: number): number[] {
  return Array.from({ length: stop - start }, (_, i) => start + i);
}

export const FACE_SEGMENTS: Segment[] = [
  { indices: span(0, 17), closed: false }, // jaw
  { indices: span(17, 22), closed: false }, // left brow
  { indices: span(22, 27), closed: false }, // right brow
  { indices: span(27, 31), closed: false }, // nose bridge
  { indices: span(31, 36), closed: false }, // nostril line
  { indices: span(36, 42), closed: true }, // left eye
  { indices: span(42, 48), closed: true }, // right eye
  { indices: span(48, 60), closed: true }, // outer mouth
  { indices: span(60, 68), closed: true }, // inner mouth
];

// The subset of CanvasRenderingContext2D the renderer touches; tests pass
// a recording stub.
export interface Canvas2DLike {
  clearRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  stroke(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fill(): void;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
}

export function drawWireframe(
  ctx: Canvas2DLike,
  points: Point[],
  width: number,
  height: number,
): void {
  ctx.clearRect(0, 0, width, height);
  ctx.strokeStyle = '#2a6df4';
  ctx.lineWidth = 1.5;
  for (const segment of FACE_SEGMENTS) {
    ctx.beginPath();
    segment.indices.forEach((idx, i) => {
      const [x, y] = points[idx];
      if (i === 0) {
        ctx.moveTo(x * width, y * height);
      } else {
        ctx.lineTo(x * width, y * height);
      }
    });
    if (segment.closed) ctx.closePath();
    ctx.stroke();
  }
  ctx.fillStyle = '#10337a';
  for (const [x, y] of points) {
    ctx.beginPath();
    ctx.arc(x * width, y * height, 2, 0, 2 * Math.PI);
    ctx.fill();
  }
}
