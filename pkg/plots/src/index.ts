#!/usr/bin/env node
/**
 * CLI: render one sweep CSV to an SVG figure.
 *
 *   hdoms-plots robustness robustness.csv robustness.svg
 *   hdoms-plots dimension  dimension.csv  dimension.svg
 *   hdoms-plots device     rram.csv       rram.svg
 */

import { readFile, writeFile } from "fs/promises";
import { render, type FigureKind } from "./figures.js";

export * from "./figures.js";
export * from "./csv.js";
export * from "./stats.js";
export { chart, chartRow, niceTicks } from "./svg.js";

const KINDS: readonly FigureKind[] = ["robustness", "dimension", "device"];

async function main(argv: string[]): Promise<number> {
  const [kind, input, output] = argv;
  if (!kind || !input || !output || !KINDS.includes(kind as FigureKind)) {
    console.error("usage: hdoms-plots <robustness|dimension|device> <in.csv> <out.svg>");
    return 2;
  }
  const text = await readFile(input, "utf-8");
  const svg = render(kind as FigureKind, text);
  await writeFile(output, svg);
  console.log(`${output}: ${svg.length} bytes`);
  return 0;
}

const entry = process.argv[1] ?? "";
if (entry.endsWith("index.js") || entry.endsWith("hdoms-plots")) {
  main(process.argv.slice(2)).then(
    (code) => process.exitCode = code,
    (err) => {
      console.error(err instanceof Error ? err.message : String(err));
      process.exitCode = 1;
    }
  );
}
