/** Minimal NPZ (zip of NPY arrays) reader: stored and deflated entries,
 * little-endian integer dtypes, C order. */

import * as zlib from "zlib";
import { FormatError } from "./errors";

export interface NpyArray {
  shape: number[];
  /** Flattened values in C order. */
  data: Float64Array;
}

const EOCD = 0x06054b50;
const CENTRAL = 0x02014b50;
const LOCAL = 0x04034b50;

export function readZipEntries(buf: Buffer): Map<string, Buffer> {
  let eocd = -1;
  const scanFrom = Math.max(0, buf.length - 65557);
  for (let i = buf.length - 22; i >= scanFrom; i--) {
    if (buf.readUInt32LE(i) === EOCD) {
      eocd = i;
      break;
    }
  }
  if (eocd < 0) throw new FormatError("zip end-of-central-directory not found", buf.length);
  const count = buf.readUInt16LE(eocd + 10);
  let offset = buf.readUInt32LE(eocd + 16);
  const entries = new Map<string, Buffer>();
  for (let k = 0; k < count; k++) {
    if (buf.readUInt32LE(offset) !== CENTRAL) {
      throw new FormatError("bad central directory entry", offset);
    }
    const method = buf.readUInt16LE(offset + 10);
    const compressed = buf.readUInt32LE(offset + 20);
    const nameLen = buf.readUInt16LE(offset + 28);
    const extraLen = buf.readUInt16LE(offset + 30);
    const commentLen = buf.readUInt16LE(offset + 32);
    const localOffset = buf.readUInt32LE(offset + 42);
    const name = buf.toString("utf8", offset + 46, offset + 46 + nameLen);
    if (buf.readUInt32LE(localOffset) !== LOCAL) {
      throw new FormatError(`bad local header for ${name}`, localOffset);
    }
    const lNameLen = buf.readUInt16LE(localOffset + 26);
    const lExtraLen = buf.readUInt16LE(localOffset + 28);
    const dataStart = localOffset + 30 + lNameLen + lExtraLen;
    const payload = buf.subarray(dataStart, dataStart + compressed);
    if (method === 0) {
      entries.set(name, Buffer.from(payload));
    } else if (method === 8) {
      entries.set(name, zlib.inflateRawSync(payload));
    } else {
      throw new FormatError(`unsupported zip compression method ${method} for ${name}`, localOffset);
    }
    offset += 46 + nameLen + extraLen + commentLen;
  }
  return entries;
}

const DTYPE_BYTES: Record<string, number> = {
  u1: 1, i1: 1, u2: 2, i2: 2, u4: 4, i4: 4, u8: 8, i8: 8, f4: 4, f8: 8,
};

export function parseNpy(buf: Buffer): NpyArray {
  if (buf.length < 10 || buf[0] !== 0x93 || buf.toString("latin1", 1, 6) !== "NUMPY") {
    throw new FormatError("not an NPY payload", 0);
  }
  const major = buf[6];
  const headerLen = major === 1 ? buf.readUInt16LE(8) : buf.readUInt32LE(8);
  const headerStart = major === 1 ? 10 : 12;
  const header = buf.toString("latin1", headerStart, headerStart + headerLen);
  const descrMatch = header.match(/'descr':\s*'([^']+)'/);
  const orderMatch = header.match(/'fortran_order':\s*(True|False)/);
  const shapeMatch = header.match(/'shape':\s*\(([^)]*)\)/);
  if (!descrMatch || !orderMatch || !shapeMatch) {
    throw new FormatError(`malformed NPY header: ${header.trim()}`, headerStart);
  }
  if (orderMatch[1] === "True") {
    throw new FormatError("fortran-ordered NPY arrays are not supported", headerStart);
  }
  const descr = descrMatch[1];
  const kind = descr.replace(/^[<>|=]/, "");
  const itemBytes = DTYPE_BYTES[kind];
  if (itemBytes === undefined || descr.startsWith(">")) {
    throw new FormatError(`unsupported NPY dtype ${descr}`, headerStart);
  }
  const shape = shapeMatch[1]
    .split(",")
    .map((s) => s.trim())
    .filter((s) => s.length > 0)
    .map((s) => parseInt(s, 10));
  const count = shape.reduce((a, b) => a * b, 1);
  const dataStart = headerStart + headerLen;
  if (buf.length < dataStart + count * itemBytes) {
    throw new FormatError(`NPY payload truncated: need ${count * itemBytes} bytes`, buf.length);
  }
  const data = new Float64Array(count);
  for (let i = 0; i < count; i++) {
    const o = dataStart + i * itemBytes;
    switch (kind) {
      case "u1": data[i] = buf.readUInt8(o); break;
      case "i1": data[i] = buf.readInt8(o); break;
      case "u2": data[i] = buf.readUInt16LE(o); break;
      case "i2": data[i] = buf.readInt16LE(o); break;
      case "u4": data[i] = buf.readUInt32LE(o); break;
      case "i4": data[i] = buf.readInt32LE(o); break;
      case "u8": data[i] = Number(buf.readBigUInt64LE(o)); break;
      case "i8": data[i] = Number(buf.readBigInt64LE(o)); break;
      case "f4": data[i] = buf.readFloatLE(o); break;
      case "f8": data[i] = buf.readDoubleLE(o); break;
    }
  }
  return { shape, data };
}

export function readNpz(buf: Buffer): Map<string, NpyArray> {
  const out = new Map<string, NpyArray>();
  for (const [name, payload] of readZipEntries(buf)) {
    const key = name.endsWith(".npy") ? name.slice(0, -4) : name;
    out.set(key, parseNpy(payload));
  }
  return out;
}
