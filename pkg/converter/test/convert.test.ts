import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import * as zlib from "zlib";
import { afterAll, describe, expect, it } from "vitest";

import { parseIdxImages, parseIdxLabels } from "../src/idx";
import { luminance, meanPool, toGrayscale } from "../src/image";
import { parseNpy, readNpz } from "../src/npz";
import { decodePng } from "../src/png";
import { labelFromFilename, loadCoilPngDir, loadMedmnistArchive, loadMnistIdx } from "../src/sources";
import { validateUotd, writeUotd } from "../src/uotd";
import { main } from "../src/cli";

const FIXTURES = path.join(__dirname, "fixtures");
const truth = JSON.parse(fs.readFileSync(path.join(FIXTURES, "truth.json"), "utf8"));

const tmpRoot = fs.mkdtempSync(path.join(os.tmpdir(), "uotd-test-"));
afterAll(() => fs.rmSync(tmpRoot, { recursive: true, force: true }));

function tmpFile(name: string): string {
  return path.join(tmpRoot, name);
}

function makeIdxPair(dir: string, n: number, h: number, w: number, seedByte = 7) {
  const images = Buffer.alloc(16 + n * h * w);
  images.writeUInt32BE(0x803, 0);
  images.writeUInt32BE(n, 4);
  images.writeUInt32BE(h, 8);
  images.writeUInt32BE(w, 12);
  for (let i = 0; i < n * h * w; i++) images[16 + i] = (i * 31 + seedByte) % 256;
  const labels = Buffer.alloc(8 + n);
  labels.writeUInt32BE(0x801, 0);
  labels.writeUInt32BE(n, 4);
  for (let i = 0; i < n; i++) labels[8 + i] = i % 10;
  fs.mkdirSync(dir, { recursive: true });
  fs.writeFileSync(path.join(dir, "train-images-idx3-ubyte"), images);
  fs.writeFileSync(path.join(dir, "train-labels-idx1-ubyte"), labels);
  return { images, labels };
}

describe("idx", () => {
  it("round-trips a synthetic pair", () => {
    const dir = tmpFile("idx1");
    const { images } = makeIdxPair(dir, 12, 4, 6);
    const parsed = parseIdxImages(fs.readFileSync(path.join(dir, "train-images-idx3-ubyte")));
    expect(parsed.count).toBe(12);
    expect(parsed.height).toBe(4);
    expect(parsed.width).toBe(6);
    expect(parsed.pixels[0]).toBe(images[16]);
    const labels = parseIdxLabels(fs.readFileSync(path.join(dir, "train-labels-idx1-ubyte")));
    expect(labels.length).toBe(12);
    expect(labels[11]).toBe(1);
  });

  it("rejects bad magic and truncation with byte offsets", () => {
    const bad = Buffer.alloc(20);
    bad.writeUInt32BE(0x9999, 0);
    expect(() => parseIdxImages(bad)).toThrow(/magic/);
    const dir = tmpFile("idx2");
    const { images } = makeIdxPair(dir, 3, 2, 2);
    expect(() => parseIdxImages(images.subarray(0, images.length - 1))).toThrow(/expected/);
  });
});

describe("image helpers", () => {
  it("luminance formula", () => {
    expect(luminance(255, 0, 0)).toBeCloseTo(76.245, 6);
    expect(luminance(10, 20, 30)).toBeCloseTo(0.299 * 10 + 0.587 * 20 + 0.114 * 30, 12);
  });

  it("mean pooling averages blocks and checks divisibility", () => {
    const img = new Float64Array([1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16]);
    const pooled = meanPool(img, 4, 4, 2);
    expect(Array.from(pooled.pixels)).toEqual([3.5, 5.5, 11.5, 13.5]);
    expect(() => meanPool(img, 4, 4, 3)).toThrow(/divide/);
  });

  it("grayscale passthrough for single channel", () => {
    const data = new Uint8Array([5, 10, 15, 20]);
    expect(Array.from(toGrayscale(data, 2, 2, 1))).toEqual([5, 10, 15, 20]);
  });
});

describe("png", () => {
  it("decodes a PIL grayscale fixture exactly", () => {
    const png = decodePng(fs.readFileSync(path.join(FIXTURES, "gradient_gray.png")));
    expect(png.width).toBe(16);
    expect(png.height).toBe(16);
    expect(png.channels).toBe(1);
    const want: number[][] = truth.gradient_gray;
    for (let r = 0; r < 16; r++) {
      for (let c = 0; c < 16; c++) {
        expect(png.data[r * 16 + c]).toBe(want[r][c]);
      }
    }
  });

  it("decodes a PIL RGB fixture exactly", () => {
    const png = decodePng(fs.readFileSync(path.join(FIXTURES, "random_rgb.png")));
    expect(png.channels).toBe(3);
    const want: number[][][] = truth.random_rgb;
    for (let r = 0; r < 8; r++) {
      for (let c = 0; c < 8; c++) {
        for (let ch = 0; ch < 3; ch++) {
          expect(png.data[(r * 8 + c) * 3 + ch]).toBe(want[r][c][ch]);
        }
      }
    }
  });

  it("expands palette images to RGB", () => {
    const png = decodePng(fs.readFileSync(path.join(FIXTURES, "palette.png")));
    expect(png.channels).toBe(3);
    const want: number[][][] = truth.palette_rgb;
    for (let r = 0; r < 8; r++) {
      for (let c = 0; c < 8; c++) {
        for (let ch = 0; ch < 3; ch++) {
          expect(png.data[(r * 8 + c) * 3 + ch]).toBe(want[r][c][ch]);
        }
      }
    }
  });

  it("round-trips a hand-encoded PNG with every filter type", () => {
    // encoder: one scanline per filter type 0..4 over a 5x4 grayscale image
    const width = 4;
    const height = 5;
    const pixels = new Uint8Array([
      10, 20, 30, 40,
      50, 60, 70, 80,
      90, 100, 110, 120,
      130, 140, 150, 160,
      170, 180, 190, 200,
    ]);
    const raw = Buffer.alloc(height * (width + 1));
    const paeth = (a: number, b: number, c: number) => {
      const p = a + b - c;
      const pa = Math.abs(p - a), pb = Math.abs(p - b), pc = Math.abs(p - c);
      return pa <= pb && pa <= pc ? a : pb <= pc ? b : c;
    };
    for (let r = 0; r < height; r++) {
      const filter = r % 5;
      raw[r * (width + 1)] = filter;
      for (let c = 0; c < width; c++) {
        const x = pixels[r * width + c];
        const left = c > 0 ? pixels[r * width + c - 1] : 0;
        const up = r > 0 ? pixels[(r - 1) * width + c] : 0;
        const ul = r > 0 && c > 0 ? pixels[(r - 1) * width + c - 1] : 0;
        let enc: number;
        switch (filter) {
          case 0: enc = x; break;
          case 1: enc = x - left; break;
          case 2: enc = x - up; break;
          case 3: enc = x - Math.floor((left + up) / 2); break;
          default: enc = x - paeth(left, up, ul); break;
        }
        raw[r * (width + 1) + 1 + c] = enc & 0xff;
      }
    }
    const crc32 = (buf: Buffer): number => {
      let crc = ~0;
      for (const byte of buf) {
        crc ^= byte;
        for (let k = 0; k < 8; k++) crc = (crc >>> 1) ^ (0xedb88320 & -(crc & 1));
      }
      return ~crc >>> 0;
    };
    const chunk = (kind: string, body: Buffer): Buffer => {
      const head = Buffer.alloc(8);
      head.writeUInt32BE(body.length, 0);
      head.write(kind, 4, "latin1");
      const crc = Buffer.alloc(4);
      crc.writeUInt32BE(crc32(Buffer.concat([Buffer.from(kind, "latin1"), body])), 0);
      return Buffer.concat([head, body, crc]);
    };
    const ihdr = Buffer.alloc(13);
    ihdr.writeUInt32BE(width, 0);
    ihdr.writeUInt32BE(height, 4);
    ihdr[8] = 8;  // bit depth
    ihdr[9] = 0;  // grayscale
    const png = Buffer.concat([
      Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]),
      chunk("IHDR", ihdr),
      chunk("IDAT", zlib.deflateSync(raw)),
      chunk("IEND", Buffer.alloc(0)),
    ]);
    const decoded = decodePng(png);
    expect(Array.from(decoded.data)).toEqual(Array.from(pixels));
  });
});

describe("npz", () => {
  it("reads a numpy-written compressed archive", () => {
    const arrays = readNpz(fs.readFileSync(path.join(FIXTURES, "med.npz")));
    expect(arrays.get("train_images")!.shape).toEqual([6, 8, 8, 3]);
    expect(arrays.get("val_images")!.shape).toEqual([3, 8, 8]);
    expect(Array.from(arrays.get("train_labels")!.data)).toEqual(
      truth.med_train_labels.map((x: number) => x));
  });

  it("parses a hand-built NPY payload", () => {
    const header = "{'descr': '<u2', 'fortran_order': False, 'shape': (2, 3), }";
    const pad = " ".repeat((64 - (10 + header.length + 1) % 64) % 64);
    const full = header + pad + "\n";
    const buf = Buffer.alloc(10 + full.length + 12);
    buf[0] = 0x93;
    buf.write("NUMPY", 1, "latin1");
    buf[6] = 1;
    buf.writeUInt16LE(full.length, 8);
    buf.write(full, 10, "latin1");
    const values = [100, 200, 300, 400, 500, 60000];
    values.forEach((v, i) => buf.writeUInt16LE(v, 10 + full.length + 2 * i));
    const arr = parseNpy(buf);
    expect(arr.shape).toEqual([2, 3]);
    expect(Array.from(arr.data)).toEqual(values);
  });
});

describe("uotd container", () => {
  it("write then validate passes and reports the histogram", () => {
    const out = tmpFile("basic.uotd");
    writeUotd(out, [
      { pixels: new Float64Array([0, 0.5, 1, 0.25]), label: 0 },
      { pixels: new Float64Array([1, 1, 0, 0]), label: 2 },
    ], 2, 2);
    const report = validateUotd(out);
    expect(report.ok).toBe(true);
    expect(report.classHistogram.get(0)).toBe(1);
    expect(report.classHistogram.get(2)).toBe(1);
  });

  it("flags truncation and out-of-range intensities", () => {
    const out = tmpFile("trunc.uotd");
    writeUotd(out, [{ pixels: new Float64Array([0.5]), label: 0 }], 1, 1);
    const whole = fs.readFileSync(out);
    fs.writeFileSync(out, whole.subarray(0, whole.length - 2));
    expect(validateUotd(out).ok).toBe(false);

    const out2 = tmpFile("range.uotd");
    writeUotd(out2, [{ pixels: new Float64Array([0.5]), label: 0 }], 1, 1);
    const buf = fs.readFileSync(out2);
    buf.writeFloatLE(1.5, buf.length - 4);
    fs.writeFileSync(out2, buf);
    const report = validateUotd(out2);
    expect(report.ok).toBe(false);
    expect(report.findings.join(" ")).toMatch(/intensities/);
  });
});

describe("sources", () => {
  it("mnist-idx conversion scales by 1/255 and keeps order", () => {
    const dir = tmpFile("idx3");
    makeIdxPair(dir, 10, 4, 4);
    const source = loadMnistIdx(dir, { classes: null, downsample: 1 });
    expect(source.records.length).toBe(10);
    expect(source.records[0].pixels[0]).toBeCloseTo(7 / 255, 12);
    expect(source.records.map((r) => r.label)).toEqual([0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
  });

  it("class filter keeps only requested labels", () => {
    const dir = tmpFile("idx4");
    makeIdxPair(dir, 20, 2, 2);
    const source = loadMnistIdx(dir, { classes: [0, 1, 2], downsample: 1 });
    expect(source.records.length).toBe(6);
    expect(new Set(source.records.map((r) => r.label))).toEqual(new Set([0, 1, 2]));
  });

  it("coil filenames map objN__ to label N-1", () => {
    expect(labelFromFilename("obj7__31.png")).toBe(6);
    expect(labelFromFilename("obj20__0.png")).toBe(19);
    expect(labelFromFilename("3_image.png")).toBe(3);
  });

  it("coil directory converts with default pooling", () => {
    const source = loadCoilPngDir(path.join(FIXTURES, "coil"), { classes: null, downsample: 4 });
    expect(source.records.length).toBe(6);
    expect(source.height).toBe(8);
    expect(source.width).toBe(8);
    // pooling preserves the mean intensity
    const byName = truth.coil_means as Record<string, number>;
    const firstMean = source.records[0].pixels.reduce((a, b) => a + b, 0) / 64;
    expect(firstMean).toBeCloseTo(byName["obj1__0.png"], 10);
  });

  it("medmnist archive converts RGB via luminance and concatenates splits", () => {
    const source = loadMedmnistArchive(path.join(FIXTURES, "med.npz"),
      { classes: null, downsample: 1 });
    expect(source.records.length).toBe(9);
    expect(source.splits).toEqual([["train", 0, 6], ["val", 6, 9]]);
    const want: number[][] = truth.med_first_train_lum;
    for (let r = 0; r < 8; r++) {
      for (let c = 0; c < 8; c++) {
        expect(source.records[0].pixels[r * 8 + c]).toBeCloseTo(want[r][c], 10);
      }
    }
    expect(source.records.map((r) => r.label)).toEqual(
      [...truth.med_train_labels, ...truth.med_val_labels]);
  });
});

describe("cli", () => {
  it("convert + validate end to end, idempotent bytes", () => {
    const dir = tmpFile("idx5");
    makeIdxPair(dir, 30, 4, 4);
    const out = tmpFile("cli.uotd");
    expect(main(["convert", "--kind", "mnist-idx", "--in", dir, "--out", out])).toBe(0);
    const first = fs.readFileSync(out);
    expect(main(["convert", "--kind", "mnist-idx", "--in", dir, "--out", out])).toBe(0);
    expect(fs.readFileSync(out).equals(first)).toBe(true);
    expect(main(["validate", out])).toBe(0);
    expect(fs.existsSync(`${out}.splits`)).toBe(true);
  });

  it("validate fails on a corrupted header byte", () => {
    const dir = tmpFile("idx6");
    makeIdxPair(dir, 5, 2, 2);
    const out = tmpFile("corrupt.uotd");
    expect(main(["convert", "--kind", "mnist-idx", "--in", dir, "--out", out])).toBe(0);
    const buf = fs.readFileSync(out);
    buf[9] ^= 0xff; // record-count field
    fs.writeFileSync(out, buf);
    expect(main(["validate", out])).toBe(1);
  });

  it("downsample flag pools images", () => {
    const dir = tmpFile("idx7");
    makeIdxPair(dir, 4, 4, 4);
    const out = tmpFile("pooled.uotd");
    expect(main(["convert", "--kind", "mnist-idx", "--in", dir, "--out", out,
      "--downsample", "2"])).toBe(0);
    const buf = fs.readFileSync(out);
    expect(buf.readUInt32LE(12)).toBe(2);
    expect(buf.readUInt32LE(16)).toBe(2);
  });

  it("unknown command and bad flags fail", () => {
    expect(main(["frobnicate"])).toBe(1);
    expect(main(["convert", "--kind", "mnist-idx"])).toBe(1);
  });
});
