/** Pixel-level helpers shared by all source readers. */

/** ITU-R 601 luminance; input channels in [0, 255], output in [0, 255]. */
export function luminance(r: number, g: number, b: number): number {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

/** RGB(A) interleaved bytes -> grayscale float array (still in [0, 255]). */
export function toGrayscale(
  data: Uint8Array,
  width: number,
  height: number,
  channels: number,
): Float64Array {
  const out = new Float64Array(width * height);
  if (channels === 1) {
    for (let i = 0; i < out.length; i++) out[i] = data[i];
    return out;
  }
  for (let i = 0; i < out.length; i++) {
    const o = i * channels;
    out[i] = luminance(data[o], data[o + 1], data[o + 2]);
  }
  return out;
}

/** Mean-pool by an integer factor that must divide both sides. */
export function meanPool(
  pixels: Float64Array,
  height: number,
  width: number,
  factor: number,
): { pixels: Float64Array; height: number; width: number } {
  if (factor === 1) return { pixels, height, width };
  if (factor < 1 || height % factor !== 0 || width % factor !== 0) {
    throw new Error(`downsample factor ${factor} must divide ${height}x${width}`);
  }
  const h = height / factor;
  const w = width / factor;
  const out = new Float64Array(h * w);
  const norm = 1 / (factor * factor);
  for (let r = 0; r < h; r++) {
    for (let c = 0; c < w; c++) {
      let acc = 0;
      for (let dr = 0; dr < factor; dr++) {
        for (let dc = 0; dc < factor; dc++) {
          acc += pixels[(r * factor + dr) * width + (c * factor + dc)];
        }
      }
      out[r * w + c] = acc * norm;
    }
  }
  return { pixels: out, height: h, width: w };
}

export interface SourceRecord {
  /** Row-major intensities in [0, 1]. */
  pixels: Float64Array;
  label: number;
}
