/** Strict reading of the sweep harness's CSV files.
 *
 * The harness writes rectangular UTF-8 CSVs with a single header row,
 * `repr`-round-trip float cells, and empty cells for "not applicable".
 * Anything that deviates from that shape is treated as data corruption,
 * never silently patched over.
 */

import { readFileSync } from "node:fs";
import Papa from "papaparse";

/** A malformed input file or a failed cross-check between input files. */
export class DataIntegrityError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "DataIntegrityError";
  }
}

/** One parsed CSV file: header names plus raw string cells, no type guessing. */
export interface CsvTable {
  readonly path: string;
  readonly columns: readonly string[];
  readonly rows: readonly (readonly string[])[];
}

/** Parse CSV text into a rectangular table, validating the header. */
export function parseCsvText(text: string, path: string): CsvTable {
  const parsed = Papa.parse<string[]>(text, {
    delimiter: ",",
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    const first = parsed.errors[0]!;
    const where = first.row === undefined ? "" : ` (row ${first.row})`;
    throw new DataIntegrityError(`${path}: ${first.message}${where}`);
  }
  const grid = parsed.data;
  if (grid.length === 0) {
    throw new DataIntegrityError(`${path}: empty file`);
  }
  const columns = grid[0]!;
  const seen = new Set<string>();
  for (const name of columns) {
    if (name === "") {
      throw new DataIntegrityError(`${path}: header has an empty column name`);
    }
    if (seen.has(name)) {
      throw new DataIntegrityError(`${path}: duplicate column '${name}'`);
    }
    seen.add(name);
  }
  const rows = grid.slice(1);
  rows.forEach((row, i) => {
    if (row.length !== columns.length) {
      throw new DataIntegrityError(
        `${path}: data row ${i + 1} has ${row.length} cells, ` +
          `header has ${columns.length}`,
      );
    }
  });
  return { path, columns, rows };
}

/** Read and parse one CSV file. */
export function readCsv(path: string): CsvTable {
  return parseCsvText(readFileSync(path, "utf8"), path);
}

/** Fail with the first missing column named explicitly. */
export function requireColumns(
  table: CsvTable,
  names: readonly string[],
): void {
  for (const name of names) {
    if (!table.columns.includes(name)) {
      throw new DataIntegrityError(`${table.path}: column not found: '${name}'`);
    }
  }
}

/** Index of a column that is known to exist. */
export function columnIndex(table: CsvTable, name: string): number {
  const index = table.columns.indexOf(name);
  if (index < 0) {
    throw new DataIntegrityError(`${table.path}: column not found: '${name}'`);
  }
  return index;
}

/** Numeric cell value; empty means "not applicable" and maps to null. */
export function numericCell(
  cell: string,
  table: CsvTable,
  column: string,
  rowIndex: number,
): number | null {
  if (cell === "") {
    return null;
  }
  const value = Number(cell);
  if (!Number.isFinite(value)) {
    throw new DataIntegrityError(
      `${table.path}: non-numeric value '${cell}' in column '${column}' ` +
        `(data row ${rowIndex + 1})`,
    );
  }
  return value;
}
