/** Shared test utilities: fixture paths, an independent CSV reader, and
 * naive statistics used as an oracle against the package's own math.
 */

import { readFileSync } from "node:fs";
import path from "node:path";
import { fileURLToPath } from "node:url";

const HERE = path.dirname(fileURLToPath(import.meta.url));

export function fixture(...segments: string[]): string {
  return path.join(HERE, "fixtures", ...segments);
}

export function readText(filePath: string): string {
  return readFileSync(filePath, "utf8");
}

/** Minimal split-based CSV reader; fixture cells contain no quoting. */
export function naiveCsv(filePath: string): {
  columns: string[];
  rows: string[][];
} {
  const lines = readText(filePath).split("\n").filter((line) => line !== "");
  const columns = lines[0]!.split(",");
  return { columns, rows: lines.slice(1).map((line) => line.split(",")) };
}

/** Summary cells keyed by sweep_value|epsilon|baseline|metric (raw text). */
export function summaryMap(filePath: string): Map<
  string,
  { mean: number; std: number | null; nSeeds: number }
> {
  const { columns, rows } = naiveCsv(filePath);
  const col = (name: string): number => {
    const index = columns.indexOf(name);
    if (index < 0) {
      throw new Error(`${filePath}: no column ${name}`);
    }
    return index;
  };
  const out = new Map<
    string,
    { mean: number; std: number | null; nSeeds: number }
  >();
  for (const row of rows) {
    const key = [
      row[col("sweep_value")]!,
      row[col("epsilon")]!,
      row[col("baseline")]!,
      row[col("metric")]!,
    ].join("|");
    out.set(key, {
      mean: Number(row[col("mean")]!),
      std: row[col("std")]! === "" ? null : Number(row[col("std")]!),
      nSeeds: Number(row[col("n_seeds")]!),
    });
  }
  return out;
}

/** Plain-loop mean: a deliberately different algorithm from the package's. */
export function naiveMean(values: readonly number[]): number {
  let total = 0;
  for (const value of values) {
    total += value;
  }
  return total / values.length;
}

export function naiveStd(values: readonly number[]): number {
  const mean = naiveMean(values);
  let total = 0;
  for (const value of values) {
    total += (value - mean) * (value - mean);
  }
  return Math.sqrt(total / (values.length - 1));
}

export interface SvgPoint {
  epsilon: string;
  x: number;
  mean: number;
  std: number | null;
  nSeeds: number;
}

/** Pull every plotted point's data attributes back out of an SVG. */
export function extractPoints(svg: string): SvgPoint[] {
  const points: SvgPoint[] = [];
  const pattern = /<circle class="mean-point"[^>]*>/g;
  for (const match of svg.matchAll(pattern)) {
    const tag = match[0];
    const attr = (name: string): string => {
      const found = tag.match(new RegExp(`data-${name}="([^"]*)"`));
      if (!found) {
        throw new Error(`point tag missing data-${name}: ${tag}`);
      }
      return found[1]!;
    };
    points.push({
      epsilon: attr("epsilon"),
      x: Number(attr("x")),
      mean: Number(attr("mean")),
      std: attr("std") === "" ? null : Number(attr("std")),
      nSeeds: Number(attr("n-seeds")),
    });
  }
  return points;
}

/** Group metric values from a rows CSV by (epsilon, x) for recomputation. */
export function groupRowValues(
  filePath: string,
  xColumn: string,
  metric: string,
): Map<string, number[]> {
  const { columns, rows } = naiveCsv(filePath);
  const col = (name: string): number => columns.indexOf(name);
  const out = new Map<string, number[]>();
  for (const row of rows) {
    if (row[col("baseline")]! !== "") {
      continue;
    }
    const key = `${Number(row[col(xColumn)]!)}|${Number(row[col("epsilon")]!)}`;
    const cell = row[col(metric)]!;
    if (cell === "") {
      continue;
    }
    const bucket = out.get(key) ?? [];
    bucket.push(Number(cell));
    out.set(key, bucket);
  }
  return out;
}
