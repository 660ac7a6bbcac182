import { mkdtempSync, readFileSync, statSync, existsSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { mergeTables, parseCsv, readCsv } from "../src/csv.js";
import { FAMILIES } from "../src/families.js";
import { run } from "../src/cli.js";

const GOLDEN = join(__dirname, "golden");

const GOLDEN_INPUTS: Record<string, string> = {
  "training-curve": "training_curve.csv",
  "regret-by-exposure": "regret_by_exposure.csv",
  "maze-steps": "maze_steps.csv",
  "rgate-timecourse": "rgate_timecourse.csv",
  "choice-fit": "choice_fit.csv",
};

function countMatches(text: string, pattern: RegExp): number {
  return (text.match(pattern) ?? []).length;
}

describe("csv parsing", () => {
  it("reads the metadata line and typed rows", () => {
    const table = readCsv(join(GOLDEN, "regret_by_exposure.csv"));
    expect(table.meta.config_hash).toBe("abc123def456");
    expect(table.columns).toEqual(["exposure", "trial", "cum_regret_mean", "n_episodes"]);
    expect(table.rows.length).toBe(60);
  });

  it("rejects ragged rows", () => {
    expect(() => parseCsv("a,b\n1,2,3\n")).toThrow(/cells/);
  });

  it("refuses to merge mismatched config hashes", () => {
    const a = parseCsv("# config_hash=aaa\nx\n1\n");
    const b = parseCsv("# config_hash=bbb\nx\n2\n");
    expect(() => mergeTables([a, b])).toThrow(/config hash mismatch/);
  });

  it("merges matching inputs row-wise", () => {
    const a = parseCsv("# config_hash=aaa\nx\n1\n");
    const b = parseCsv("# config_hash=aaa\nx\n2\n");
    expect(mergeTables([a, b]).rows.length).toBe(2);
  });
});

describe("figure families", () => {
  for (const [family, file] of Object.entries(GOLDEN_INPUTS)) {
    it(`renders ${family} from the golden CSV`, () => {
      const svg = FAMILIES[family](readCsv(join(GOLDEN, file)));
      expect(svg.startsWith("<svg")).toBe(true);
      expect(svg.length).toBeGreaterThan(500);
    });
  }

  it("draws one regret line per exposure bin", () => {
    const table = readCsv(join(GOLDEN, "regret_by_exposure.csv"));
    const bins = new Set(table.rows.map((r) => r.exposure));
    const svg = FAMILIES["regret-by-exposure"](table);
    expect(countMatches(svg, /class="series"/g)).toBe(bins.size);
    // legend entries appear in monotone exposure order
    const labels = [...svg.matchAll(/exposure (\d+)</g)].map((m) => Number(m[1]));
    expect(labels).toEqual([...labels].sort((a, b) => a - b));
  });

  it("training curve carries a shaded band and a mean line", () => {
    const svg = FAMILIES["training-curve"](readCsv(join(GOLDEN, "training_curve.csv")));
    expect(countMatches(svg, /class="band"/g)).toBe(1);
    expect(countMatches(svg, /class="series"/g)).toBe(1);
  });

  it("maze figure has one bar per exposure bin with whiskers", () => {
    const table = readCsv(join(GOLDEN, "maze_steps.csv"));
    const bins = table.rows.filter((r) => r.segment === "start").length;
    const svg = FAMILIES["maze-steps"](table);
    expect(countMatches(svg, /class="bar"/g)).toBe(bins);
    expect(countMatches(svg, /class="whisker"/g)).toBeGreaterThan(0);
  });

  it("choice-fit renders all five strategies", () => {
    const svg = FAMILIES["choice-fit"](readCsv(join(GOLDEN, "choice_fit.csv")));
    for (const name of ["intercept", "imf", "imb", "emf", "emb"]) {
      expect(svg).toContain(`data-key="${name}"`);
    }
  });

  it("rejects empty CSVs without writing", () => {
    const empty = parseCsv("# config_hash=x\nepoch,return_mean,return_lo,return_hi\n");
    expect(() => FAMILIES["training-curve"](empty)).toThrow(/no data rows/);
  });

  it("renders deterministically from identical inputs", () => {
    const table = readCsv(join(GOLDEN, "regret_by_exposure.csv"));
    expect(FAMILIES["regret-by-exposure"](table))
      .toBe(FAMILIES["regret-by-exposure"](table));
  });

  it("names missing columns in schema errors", () => {
    const bad = parseCsv("# config_hash=x\nepoch,ret\n1,2\n");
    expect(() => FAMILIES["training-curve"](bad)).toThrow(/return_mean/);
  });
});

describe("cli", () => {
  it("writes a nonzero SVG for every family", () => {
    const dir = mkdtempSync(join(tmpdir(), "plotkit-"));
    for (const [family, file] of Object.entries(GOLDEN_INPUTS)) {
      const out = join(dir, `${family}.svg`);
      const code = run([family, "--in", join(GOLDEN, file), "--out", out]);
      expect(code).toBe(0);
      expect(statSync(out).size).toBeGreaterThan(0);
    }
  });

  it("fails cleanly on unknown families and missing flags", () => {
    expect(run(["volcano-plot"])).toBe(2);
    expect(run(["training-curve"])).toBe(2);
  });

  it("does not write an output file when rendering fails", () => {
    const dir = mkdtempSync(join(tmpdir(), "plotkit-"));
    const bad = join(dir, "empty.csv");
    writeFileSync(bad, "# config_hash=x\nepoch,return_mean,return_lo,return_hi\n");
    const out = join(dir, "fig.svg");
    expect(run(["training-curve", "--in", bad, "--out", out])).toBe(1);
    expect(existsSync(out)).toBe(false);
  });
});
