#!/usr/bin/env node
/** Dataset converter CLI.
 *
 *   convert --kind mnist-idx|coil20-png|medmnist-archive --in <path> --out <file>
 *           [--downsample f] [--classes a,b,...]
 *   validate <file>
 */

import * as fs from "fs";
import { loadSource } from "./sources";
import { validateUotd, writeUotd } from "./uotd";

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    if (!argv[i].startsWith("--")) throw new Error(`unexpected argument ${argv[i]}`);
    const key = argv[i].slice(2);
    if (i + 1 >= argv.length) throw new Error(`missing value for --${key}`);
    flags.set(key, argv[++i]);
  }
  return flags;
}

function cmdConvert(argv: string[]): number {
  const flags = parseFlags(argv);
  const kind = flags.get("kind");
  const input = flags.get("in");
  const out = flags.get("out");
  if (!kind || !input || !out) {
    console.error("usage: convert --kind <k> --in <path> --out <file> [--downsample f] [--classes a,b,...]");
    return 1;
  }
  const downsample = flags.has("downsample")
    ? parseInt(flags.get("downsample")!, 10)
    : kind === "coil20-png" ? 4 : 1;  // Coil-20 ships at 128x128; pool to 32x32
  const classes = flags.has("classes")
    ? flags.get("classes")!.split(",").map((s) => parseInt(s.trim(), 10))
    : null;
  const source = loadSource(kind, input, { classes, downsample });
  const summary = writeUotd(out, source.records, source.height, source.width);
  const sidecar = source.splits.map(([name, lo, hi]) => `${name}\t${lo}\t${hi}`).join("\n");
  fs.writeFileSync(`${out}.splits`, sidecar + "\n");
  const hist = [...summary.classCounts.entries()]
    .sort((a, b) => a[0] - b[0])
    .map(([label, count]) => `${label}:${count}`)
    .join(" ");
  console.log(`wrote ${out}: n=${summary.n} h=${summary.h} w=${summary.w} classes=${summary.classCounts.size}`);
  console.log(`class counts: ${hist}`);
  return 0;
}

function cmdValidate(argv: string[]): number {
  if (argv.length !== 1) {
    console.error("usage: validate <file>");
    return 1;
  }
  const report = validateUotd(argv[0]);
  const hist = [...report.classHistogram.entries()]
    .sort((a, b) => a[0] - b[0])
    .map(([label, count]) => `${label}:${count}`)
    .join(" ");
  console.log(`class histogram: ${hist.length > 0 ? hist : "(none)"}`);
  for (const finding of report.findings) console.log(`FAIL: ${finding}`);
  if (report.ok) {
    console.log("all checks passed");
    return 0;
  }
  return 1;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    if (command === "convert") return cmdConvert(rest);
    if (command === "validate") return cmdValidate(rest);
    console.error("usage: uotd-convert convert|validate ...");
    return 1;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
