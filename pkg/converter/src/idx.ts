/** MNIST IDX readers (big-endian magic 0x00000803 for images, 0x00000801 for labels). */

import { FormatError, LabelMismatch } from "./errors";

export interface IdxImages {
  count: number;
  height: number;
  width: number;
  /** count*height*width bytes, row-major per image. */
  pixels: Uint8Array;
}

export function parseIdxImages(buf: Buffer): IdxImages {
  if (buf.length < 16) throw new FormatError("IDX image file shorter than its header", buf.length);
  const magic = buf.readUInt32BE(0);
  if (magic !== 0x00000803) {
    throw new FormatError(`bad IDX image magic 0x${magic.toString(16)}`, 0);
  }
  const count = buf.readUInt32BE(4);
  const height = buf.readUInt32BE(8);
  const width = buf.readUInt32BE(12);
  const expected = 16 + count * height * width;
  if (buf.length !== expected) {
    throw new FormatError(`IDX image payload is ${buf.length} bytes, expected ${expected}`,
      Math.min(buf.length, expected));
  }
  return { count, height, width, pixels: new Uint8Array(buf.buffer, buf.byteOffset + 16, count * height * width) };
}

export function parseIdxLabels(buf: Buffer): Uint8Array {
  if (buf.length < 8) throw new FormatError("IDX label file shorter than its header", buf.length);
  const magic = buf.readUInt32BE(0);
  if (magic !== 0x00000801) {
    throw new FormatError(`bad IDX label magic 0x${magic.toString(16)}`, 0);
  }
  const count = buf.readUInt32BE(4);
  const expected = 8 + count;
  if (buf.length !== expected) {
    throw new FormatError(`IDX label payload is ${buf.length} bytes, expected ${expected}`,
      Math.min(buf.length, expected));
  }
  return new Uint8Array(buf.buffer, buf.byteOffset + 8, count);
}

export function pairIdx(images: IdxImages, labels: Uint8Array): void {
  if (images.count !== labels.length) {
    throw new LabelMismatch(
      `image file has ${images.count} records but label file has ${labels.length}`);
  }
}
