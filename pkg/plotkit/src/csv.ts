/**
 * Strict reader for the analysis CSV contract: an optional leading
 * `# key=value ...` metadata line, a header row, then plain comma rows
 * (no quoting; the upstream writer never emits commas inside cells).
 */

import { readFileSync } from "node:fs";

export interface CsvTable {
  meta: Record<string, string>;
  columns: string[];
  rows: Record<string, string>[];
}

export function parseCsv(text: string): CsvTable {
  const lines = text.split(/\r?\n/).filter((line) => line.length > 0);
  const meta: Record<string, string> = {};
  let start = 0;
  if (lines.length > 0 && lines[0].startsWith("#")) {
    for (const pair of lines[0].slice(1).trim().split(/\s+/)) {
      const eq = pair.indexOf("=");
      if (eq > 0) meta[pair.slice(0, eq)] = pair.slice(eq + 1);
    }
    start = 1;
  }
  if (lines.length <= start) {
    throw new Error("CSV has no header row");
  }
  const columns = lines[start].split(",");
  const rows: Record<string, string>[] = [];
  for (const line of lines.slice(start + 1)) {
    const cells = line.split(",");
    if (cells.length !== columns.length) {
      throw new Error(
        `CSV row has ${cells.length} cells, header has ${columns.length}`,
      );
    }
    const row: Record<string, string> = {};
    columns.forEach((name, i) => (row[name] = cells[i]));
    rows.push(row);
  }
  return { meta, columns, rows };
}

export function readCsv(path: string): CsvTable {
  return parseCsv(readFileSync(path, "utf8"));
}

/** Every referenced column must exist; diagnostics name the offender. */
export function requireColumns(table: CsvTable, needed: string[]): void {
  for (const column of needed) {
    if (!table.columns.includes(column)) {
      throw new Error(`missing required column "${column}"`);
    }
  }
}

export function num(row: Record<string, string>, column: string): number {
  const value = Number(row[column]);
  if (!Number.isFinite(value)) {
    throw new Error(`column "${column}" has non-numeric cell "${row[column]}"`);
  }
  return value;
}

/** Merge tables from repeated --in flags; config hashes must agree. */
export function mergeTables(tables: CsvTable[]): CsvTable {
  if (tables.length === 0) throw new Error("no input tables");
  const hashes = new Set(tables.map((t) => t.meta.config_hash ?? ""));
  if (hashes.size > 1) {
    throw new Error(
      `config hash mismatch across inputs: ${[...hashes].join(", ")}`,
    );
  }
  const [first, ...rest] = tables;
  for (const table of rest) {
    if (table.columns.join(",") !== first.columns.join(",")) {
      throw new Error("inputs have different column sets");
    }
  }
  return {
    meta: first.meta,
    columns: first.columns,
    rows: tables.flatMap((t) => t.rows),
  };
}
