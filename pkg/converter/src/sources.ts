/** Source-format readers: each yields records in deterministic source order. */

import * as fs from "fs";
import * as path from "path";
import { FormatError, LabelMismatch } from "./errors";
import { meanPool, SourceRecord, toGrayscale } from "./image";
import { pairIdx, parseIdxImages, parseIdxLabels } from "./idx";
import { readNpz } from "./npz";
import { decodePng } from "./png";

export interface ConvertOptions {
  classes: number[] | null;
  downsample: number;
}

export interface LoadedSource {
  records: SourceRecord[];
  height: number;
  width: number;
  /** Optional split ranges (name, start, end) for the sidecar file. */
  splits: Array<[string, number, number]>;
}

function keepLabel(label: number, classes: number[] | null): boolean {
  return classes === null || classes.includes(label);
}

/** MNIST IDX pair: <dir>/train-images-idx3-ubyte + train-labels-idx1-ubyte,
 * or an explicit images file with its sibling labels file. */
export function loadMnistIdx(input: string, opts: ConvertOptions): LoadedSource {
  let imagesPath = input;
  let labelsPath: string;
  if (fs.statSync(input).isDirectory()) {
    imagesPath = path.join(input, "train-images-idx3-ubyte");
    labelsPath = path.join(input, "train-labels-idx1-ubyte");
  } else {
    labelsPath = input.replace("images-idx3", "labels-idx1");
    if (labelsPath === imagesPath) {
      throw new FormatError(`cannot derive a labels path from ${input}`, 0);
    }
  }
  const images = parseIdxImages(fs.readFileSync(imagesPath));
  const labels = parseIdxLabels(fs.readFileSync(labelsPath));
  pairIdx(images, labels);
  const records: SourceRecord[] = [];
  const size = images.height * images.width;
  for (let i = 0; i < images.count; i++) {
    if (!keepLabel(labels[i], opts.classes)) continue;
    const gray = new Float64Array(size);
    for (let p = 0; p < size; p++) gray[p] = images.pixels[i * size + p];
    const pooled = meanPool(gray, images.height, images.width, opts.downsample);
    const scaled = pooled.pixels.map((v) => v / 255);
    records.push({ pixels: scaled, label: labels[i] });
  }
  if (records.length === 0) throw new LabelMismatch("no records left after class filtering");
  const h = images.height / opts.downsample;
  const w = images.width / opts.downsample;
  return { records, height: h, width: w, splits: [["train", 0, records.length]] };
}

/** Coil-20 style PNG directory: class from the objN__ filename prefix
 * (label N-1), falling back to the leading integer in the name. */
export function labelFromFilename(name: string): number {
  const obj = name.match(/^obj(\d+)__/);
  if (obj) return parseInt(obj[1], 10) - 1;
  const lead = name.match(/^(\d+)/);
  if (lead) return parseInt(lead[1], 10);
  throw new LabelMismatch(`cannot derive a class label from filename ${name}`);
}

export function loadCoilPngDir(input: string, opts: ConvertOptions): LoadedSource {
  const names = fs.readdirSync(input).filter((n) => n.toLowerCase().endsWith(".png")).sort();
  if (names.length === 0) throw new FormatError(`no PNG files in ${input}`, 0);
  const records: SourceRecord[] = [];
  let height = -1;
  let width = -1;
  for (const name of names) {
    const label = labelFromFilename(name);
    if (!keepLabel(label, opts.classes)) continue;
    const png = decodePng(fs.readFileSync(path.join(input, name)));
    const gray = toGrayscale(png.data, png.width, png.height, png.channels);
    const pooled = meanPool(gray, png.height, png.width, opts.downsample);
    if (height < 0) {
      height = pooled.height;
      width = pooled.width;
    } else if (pooled.height !== height || pooled.width !== width) {
      throw new FormatError(`${name}: size ${pooled.height}x${pooled.width} differs from ${height}x${width}`, 0);
    }
    records.push({ pixels: pooled.pixels.map((v) => v / 255), label });
  }
  if (records.length === 0) throw new LabelMismatch("no records left after class filtering");
  return { records, height, width, splits: [["all", 0, records.length]] };
}

/** MedMNIST-style archive: {split}_images / {split}_labels arrays, splits
 * concatenated in train/val/test order. */
export function loadMedmnistArchive(input: string, opts: ConvertOptions): LoadedSource {
  const arrays = readNpz(fs.readFileSync(input));
  const records: SourceRecord[] = [];
  const splits: Array<[string, number, number]> = [];
  let height = -1;
  let width = -1;
  for (const split of ["train", "val", "test"]) {
    const images = arrays.get(`${split}_images`);
    const labels = arrays.get(`${split}_labels`);
    if (!images || !labels) continue;
    const [n, h, w] = images.shape;
    const channels = images.shape.length === 4 ? images.shape[3] : 1;
    if (labels.data.length !== n) {
      throw new LabelMismatch(`${split}: ${n} images but ${labels.data.length} labels`);
    }
    const start = records.length;
    const frame = h * w * channels;
    for (let i = 0; i < n; i++) {
      let gray: Float64Array;
      if (channels === 1) {
        gray = images.data.subarray(i * frame, (i + 1) * frame).slice();
      } else {
        gray = new Float64Array(h * w);
        for (let p = 0; p < h * w; p++) {
          const o = i * frame + p * channels;
          gray[p] = 0.299 * images.data[o] + 0.587 * images.data[o + 1] + 0.114 * images.data[o + 2];
        }
      }
      const label = labels.data[i];
      if (!keepLabel(label, opts.classes)) continue;
      const pooled = meanPool(gray, h, w, opts.downsample);
      if (height < 0) {
        height = pooled.height;
        width = pooled.width;
      }
      records.push({ pixels: pooled.pixels.map((v) => v / 255), label });
    }
    if (records.length > start) splits.push([split, start, records.length]);
  }
  if (records.length === 0) {
    throw new FormatError("archive has no {split}_images / {split}_labels arrays", 0);
  }
  return { records, height, width, splits };
}

export function loadSource(kind: string, input: string, opts: ConvertOptions): LoadedSource {
  switch (kind) {
    case "mnist-idx": return loadMnistIdx(input, opts);
    case "coil20-png": return loadCoilPngDir(input, opts);
    case "medmnist-archive": return loadMedmnistArchive(input, opts);
    default:
      throw new FormatError(`unknown source kind ${kind}`, 0);
  }
}
