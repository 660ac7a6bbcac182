/**
 * plotkit <family> --in data.csv [--in more.csv] --out figure.svg
 *
 * Families: training-curve, regret-by-exposure, maze-steps,
 * rgate-timecourse, choice-fit. Repeated --in files must carry the same
 * config hash. Nothing is written when rendering fails.
 */

import { writeFileSync } from "node:fs";
import { mergeTables, readCsv } from "./csv.js";
import { FAMILIES } from "./families.js";

export function run(argv: string[]): number {
  const [family, ...rest] = argv;
  if (!family || family === "--help" || family === "-h") {
    console.error(`usage: plotkit <family> --in data.csv [--in ...] --out figure.svg`);
    console.error(`families: ${Object.keys(FAMILIES).join(", ")}`);
    return family ? 0 : 2;
  }
  const renderer = FAMILIES[family];
  if (!renderer) {
    console.error(`unknown figure family "${family}"; ` +
      `have ${Object.keys(FAMILIES).join(", ")}`);
    return 2;
  }
  const inputs: string[] = [];
  let out: string | undefined;
  for (let i = 0; i < rest.length; i += 1) {
    if (rest[i] === "--in") {
      inputs.push(rest[++i]);
    } else if (rest[i] === "--out") {
      out = rest[++i];
    } else {
      console.error(`unknown flag "${rest[i]}"`);
      return 2;
    }
  }
  if (inputs.length === 0 || inputs.some((p) => p === undefined) || !out) {
    console.error("both --in and --out are required");
    return 2;
  }
  try {
    const table = mergeTables(inputs.map(readCsv));
    const svg = renderer(table);
    writeFileSync(out, svg);
    console.log(`wrote ${out}`);
    return 0;
  } catch (error) {
    console.error(`error: ${(error as Error).message}`);
    return 1;
  }
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(run(process.argv.slice(2)));
}
