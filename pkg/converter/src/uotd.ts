/** The canonical "UOTD" dataset container (little-endian):
 * magic "UOTD", u32 version=1, u32 N, u32 H, u32 W, N x u32 labels,
 * N*H*W float32 intensities in [0,1], row-major per image. */

import * as fs from "fs";
import { FormatError } from "./errors";
import { SourceRecord } from "./image";

export const UOTD_MAGIC = "UOTD";
export const UOTD_VERSION = 1;

export interface UotdSummary {
  n: number;
  h: number;
  w: number;
  classCounts: Map<number, number>;
}

export function writeUotd(path: string, records: SourceRecord[], height: number, width: number): UotdSummary {
  const n = records.length;
  const header = Buffer.alloc(20);
  header.write(UOTD_MAGIC, 0, "latin1");
  header.writeUInt32LE(UOTD_VERSION, 4);
  header.writeUInt32LE(n, 8);
  header.writeUInt32LE(height, 12);
  header.writeUInt32LE(width, 16);
  const labels = Buffer.alloc(4 * n);
  const pixels = Buffer.alloc(4 * n * height * width);
  const classCounts = new Map<number, number>();
  records.forEach((rec, i) => {
    if (rec.pixels.length !== height * width) {
      throw new FormatError(`record ${i} has ${rec.pixels.length} pixels, expected ${height * width}`, 0);
    }
    labels.writeUInt32LE(rec.label >>> 0, 4 * i);
    classCounts.set(rec.label, (classCounts.get(rec.label) ?? 0) + 1);
    for (let p = 0; p < rec.pixels.length; p++) {
      pixels.writeFloatLE(rec.pixels[p], 4 * (i * height * width + p));
    }
  });
  fs.writeFileSync(path, Buffer.concat([header, labels, pixels]));
  return { n, h: height, w: width, classCounts };
}

export interface ValidationReport {
  ok: boolean;
  findings: string[];
  classHistogram: Map<number, number>;
}

export function validateUotd(path: string): ValidationReport {
  const findings: string[] = [];
  const classHistogram = new Map<number, number>();
  const buf = fs.readFileSync(path);
  if (buf.length < 20 || buf.toString("latin1", 0, 4) !== UOTD_MAGIC) {
    return { ok: false, findings: ["bad magic: not a UOTD container"], classHistogram };
  }
  const version = buf.readUInt32LE(4);
  if (version !== UOTD_VERSION) findings.push(`unsupported version ${version}`);
  const n = buf.readUInt32LE(8);
  const h = buf.readUInt32LE(12);
  const w = buf.readUInt32LE(16);
  const expected = 20 + 4 * n + 4 * n * h * w;
  if (buf.length !== expected) {
    findings.push(`declared sizes need ${expected} bytes but file has ${buf.length}`);
    return { ok: false, findings, classHistogram };
  }
  let labelRangeBad = 0;
  for (let i = 0; i < n; i++) {
    const label = buf.readUInt32LE(20 + 4 * i);
    classHistogram.set(label, (classHistogram.get(label) ?? 0) + 1);
    if (label > 1 << 20) labelRangeBad++;
  }
  if (labelRangeBad > 0) findings.push(`${labelRangeBad} labels exceed the sane range (2^20)`);
  let intensityBad = 0;
  const base = 20 + 4 * n;
  for (let p = 0; p < n * h * w; p++) {
    const v = buf.readFloatLE(base + 4 * p);
    if (!(v >= 0 && v <= 1)) intensityBad++; // NaN fails both comparisons
  }
  if (intensityBad > 0) findings.push(`${intensityBad} intensities outside [0, 1]`);
  return { ok: findings.length === 0, findings, classHistogram };
}
