/** Minimal PNG decoder: 8-bit depth, color types 0/2/3/4/6, filters 0-4, no interlace.
 * Enough for Coil-20 style archives without pulling in a dependency. */

import * as zlib from "zlib";
import { FormatError } from "./errors";

const SIGNATURE = Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);
const CHANNELS: Record<number, number> = { 0: 1, 2: 3, 3: 1, 4: 2, 6: 4 };

export interface DecodedPng {
  width: number;
  height: number;
  /** Interleaved 8-bit samples with `channels` per pixel (palette expanded to RGB). */
  data: Uint8Array;
  channels: number;
}

export function decodePng(buf: Buffer): DecodedPng {
  if (buf.length < 8 || !buf.subarray(0, 8).equals(SIGNATURE)) {
    throw new FormatError("not a PNG file", 0);
  }
  let offset = 8;
  let width = 0;
  let height = 0;
  let bitDepth = 0;
  let colorType = 0;
  let interlace = 0;
  let palette: Uint8Array | null = null;
  const idat: Buffer[] = [];
  while (offset + 8 <= buf.length) {
    const length = buf.readUInt32BE(offset);
    const kind = buf.toString("latin1", offset + 4, offset + 8);
    const body = buf.subarray(offset + 8, offset + 8 + length);
    if (body.length !== length) {
      throw new FormatError(`truncated ${kind} chunk`, offset);
    }
    if (kind === "IHDR") {
      width = body.readUInt32BE(0);
      height = body.readUInt32BE(4);
      bitDepth = body[8];
      colorType = body[9];
      interlace = body[12];
    } else if (kind === "PLTE") {
      palette = new Uint8Array(body);
    } else if (kind === "IDAT") {
      idat.push(Buffer.from(body));
    } else if (kind === "IEND") {
      break;
    }
    offset += 12 + length; // length + type + data + crc
  }
  if (width === 0 || height === 0) throw new FormatError("missing IHDR", 8);
  if (bitDepth !== 8) throw new FormatError(`unsupported bit depth ${bitDepth}`, 8);
  if (interlace !== 0) throw new FormatError("interlaced PNGs are not supported", 8);
  const channels = CHANNELS[colorType];
  if (channels === undefined) throw new FormatError(`unsupported color type ${colorType}`, 8);
  if (idat.length === 0) throw new FormatError("no IDAT data", offset);

  const raw = zlib.inflateSync(Buffer.concat(idat));
  const stride = width * channels;
  if (raw.length !== (stride + 1) * height) {
    throw new FormatError(`decompressed size ${raw.length}, expected ${(stride + 1) * height}`, offset);
  }
  const out = new Uint8Array(stride * height);
  const bpp = channels; // bytes per pixel at depth 8
  for (let row = 0; row < height; row++) {
    const filter = raw[row * (stride + 1)];
    const src = (row * (stride + 1)) + 1;
    const dst = row * stride;
    for (let i = 0; i < stride; i++) {
      const x = raw[src + i];
      const left = i >= bpp ? out[dst + i - bpp] : 0;
      const up = row > 0 ? out[dst + i - stride] : 0;
      const upLeft = row > 0 && i >= bpp ? out[dst + i - stride - bpp] : 0;
      let value: number;
      switch (filter) {
        case 0: value = x; break;
        case 1: value = x + left; break;
        case 2: value = x + up; break;
        case 3: value = x + Math.floor((left + up) / 2); break;
        case 4: value = x + paeth(left, up, upLeft); break;
        default:
          throw new FormatError(`unknown filter ${filter} in row ${row}`, src - 1);
      }
      out[dst + i] = value & 0xff;
    }
  }
  if (colorType === 3) {
    if (!palette) throw new FormatError("palette image without PLTE chunk", 8);
    const rgb = new Uint8Array(width * height * 3);
    for (let i = 0; i < width * height; i++) {
      const p = out[i] * 3;
      rgb[i * 3] = palette[p];
      rgb[i * 3 + 1] = palette[p + 1];
      rgb[i * 3 + 2] = palette[p + 2];
    }
    return { width, height, data: rgb, channels: 3 };
  }
  return { width, height, data: out, channels };
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}
