/**
 * One renderer per figure family. Each consumes the documented CSV
 * contract and returns an SVG string; rows must be non-empty and carry
 * the expected columns, otherwise the error names what is missing.
 */

import { CsvTable, num, requireColumns } from "./csv.js";
import { Chart, PALETTE } from "./svg.js";

function assertRows(table: CsvTable, family: string): void {
  if (table.rows.length === 0) {
    throw new Error(`${family}: input CSV has no data rows`);
  }
}

/** Mean training return per epoch with a shaded across-runs band. */
export function trainingCurve(table: CsvTable): string {
  assertRows(table, "training-curve");
  requireColumns(table, ["epoch", "return_mean", "return_lo", "return_hi"]);
  const rows = table.rows
    .slice()
    .sort((a, b) => num(a, "epoch") - num(b, "epoch"));
  const chart = new Chart("Training curve", "epoch", "mean episode return");
  chart.addBand({
    key: "return-band",
    upper: rows.map((r) => [num(r, "epoch"), num(r, "return_hi")]),
    lower: rows.map((r) => [num(r, "epoch"), num(r, "return_lo")]),
    color: PALETTE[0],
  });
  chart.addSeries({
    key: "return-mean",
    label: "mean return",
    points: rows.map((r) => [num(r, "epoch"), num(r, "return_mean")]),
    color: PALETTE[0],
  });
  return chart.render();
}

/** Cumulative regret per trial, one line per exposure bin. */
export function regretByExposure(table: CsvTable): string {
  assertRows(table, "regret-by-exposure");
  requireColumns(table, ["exposure", "trial", "cum_regret_mean"]);
  const byExposure = new Map<number, [number, number][]>();
  for (const row of table.rows) {
    const exposure = num(row, "exposure");
    if (!byExposure.has(exposure)) byExposure.set(exposure, []);
    byExposure.get(exposure)!.push([num(row, "trial"), num(row, "cum_regret_mean")]);
  }
  const chart = new Chart("Cumulative regret by exposure", "trial",
    "cumulative expected regret");
  const exposures = [...byExposure.keys()].sort((a, b) => a - b);
  exposures.forEach((exposure, i) => {
    const points = byExposure.get(exposure)!.sort((a, b) => a[0] - b[0]);
    chart.addSeries({
      key: `exposure-${exposure}`,
      label: `exposure ${exposure}`,
      points,
      color: PALETTE[i % PALETTE.length],
    });
  });
  return chart.render();
}

/** Steps to goal from episode start, by exposure bin, with intervals. */
export function mazeSteps(table: CsvTable): string {
  assertRows(table, "maze-steps");
  requireColumns(table, ["exposure", "segment", "mean_steps", "ci_lo", "ci_hi"]);
  const rows = table.rows
    .filter((r) => r.segment === "start")
    .sort((a, b) => num(a, "exposure") - num(b, "exposure"));
  if (rows.length === 0) {
    throw new Error("maze-steps: no 'start' segment rows");
  }
  const chart = new Chart("Steps to goal by exposure", "exposure bin",
    "steps to first goal");
  rows.forEach((row, i) => {
    chart.addBar({
      label: `exp ${Math.trunc(num(row, "exposure"))}`,
      value: num(row, "mean_steps"),
      lo: num(row, "ci_lo"),
      hi: num(row, "ci_hi"),
      color: PALETTE[i % PALETTE.length],
    });
  });
  if (table.columns.includes("mean_bfs_optimal")) {
    const points = rows
      .filter((r) => r.mean_bfs_optimal !== "" && r.mean_bfs_optimal !== "nan")
      .map((r, i) => [i, num(r, "mean_bfs_optimal")] as [number, number]);
    if (points.length > 1) {
      chart.addSeries({
        key: "bfs-optimal",
        label: "shortest path",
        points,
        color: "#222222",
      });
    }
  }
  return chart.render();
}

/** Mean reinstatement-gate value per step, grouped by stage and cueing. */
export function rgateTimecourse(table: CsvTable): string {
  assertRows(table, "rgate-timecourse");
  requireColumns(table, ["stage", "cued", "step", "r_gate_mean"]);
  const groups = new Map<string, [number, number][]>();
  for (const row of table.rows) {
    const key = `stage ${row.stage} ${row.cued === "1" ? "cued" : "uncued"}`;
    if (!groups.has(key)) groups.set(key, []);
    groups.get(key)!.push([num(row, "step"), num(row, "r_gate_mean")]);
  }
  const chart = new Chart("Reinstatement gate time course", "step",
    "mean r-gate value");
  [...groups.keys()].sort().forEach((key, i) => {
    chart.addSeries({
      key: key.replace(/\s+/g, "-"),
      label: key,
      points: groups.get(key)!.sort((a, b) => a[0] - b[0]),
      color: PALETTE[i % PALETTE.length],
    });
  });
  return chart.render();
}

/** Fitted strategy weights with standard-error whiskers. */
export function choiceFit(table: CsvTable): string {
  assertRows(table, "choice-fit");
  requireColumns(table, ["strategy", "weight", "std_error"]);
  const chart = new Chart("Choice-model strategy weights", "strategy",
    "fitted weight");
  table.rows.forEach((row, i) => {
    const weight = num(row, "weight");
    const se = num(row, "std_error");
    chart.addBar({
      label: row.strategy,
      value: weight,
      lo: weight - se,
      hi: weight + se,
      color: PALETTE[i % PALETTE.length],
    });
  });
  return chart.render();
}

export const FAMILIES: Record<string, (table: CsvTable) => string> = {
  "training-curve": trainingCurve,
  "regret-by-exposure": regretByExposure,
  "maze-steps": mazeSteps,
  "rgate-timecourse": rgateTimecourse,
  "choice-fit": choiceFit,
};
