import type { RasterPayload } from './types.js';

export interface GrayImage {
  width: number;
  height: number;
  /** RGBA bytes, row-major, peak-normalized grayscale. */
  pixels: Uint8ClampedArray<ArrayBuffer>;
}

export function rasterToGray(raster: RasterPayload): GrayImage {
  const [height, width] = raster.shape;
  const peak = raster.values.reduce((a, b) => Math.max(a, b), 0);
  const scale = peak > 0 ? 255 / peak : 0;
  const pixels = new Uint8ClampedArray(new ArrayBuffer(width * height * 4));
  for (let i = 0; i < width * height; i++) {
    const g = Math.round(raster.values[i] * scale);
    pixels[4 * i] = g;
    pixels[4 * i + 1] = g;
    pixels[4 * i + 2] = g;
    pixels[4 * i + 3] = 255;
  }
  return { width, height, pixels };
}
