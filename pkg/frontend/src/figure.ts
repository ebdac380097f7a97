/** Figure rendering: one SVG file per metric, integrity-checked.
 *
 * This layer aggregates and draws; it never produces a number the sweep
 * harness did not already publish.  Every plotted mean and band width is
 * taken from the summary CSV after the recomputation cross-check passes,
 * and every reference line is the cross-checked baseline summary mean.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import path from "node:path";

import { buildSeries, referenceLine } from "./aggregate.js";
import { CsvTable, readCsv, requireColumns } from "./csv.js";
import { FigureSpec, SpecError } from "./spec.js";
import { buildFigureSvg, RefLine } from "./svg.js";

export interface RenderReport {
  /** Absolute paths of the SVG files written, in metric order. */
  readonly written: readonly string[];
  /** Non-fatal observations (skipped empty cells or groups). */
  readonly warnings: readonly string[];
}

const REF_DASHES = { erm: "7 4", oracle: "2 3" } as const;

/** Render every metric of a figure spec; returns what was written. */
export function render(spec: FigureSpec): RenderReport {
  if (spec.format === "png") {
    throw new SpecError(
      "png output is not supported by this renderer; use format 'svg'",
    );
  }
  const rows = readCsv(spec.rows);
  requireColumns(rows, [spec.xColumn, "epsilon", "baseline", ...spec.metrics]);
  const summary = readCsv(spec.summary);

  let baselineRows: CsvTable | null = null;
  let baselineSummary: CsvTable | null = null;
  const wantedRefs: ("erm" | "oracle")[] = [];
  if (spec.referenceLines.erm) {
    wantedRefs.push("erm");
  }
  if (spec.referenceLines.oracle) {
    wantedRefs.push("oracle");
  }
  if (wantedRefs.length > 0) {
    baselineRows = readCsv(spec.baselinesRows!);
    requireColumns(baselineRows, ["baseline", ...spec.metrics]);
    baselineSummary = readCsv(spec.baselinesSummary!);
  }

  mkdirSync(spec.outputDir, { recursive: true });
  const written: string[] = [];
  const warnings: string[] = [];
  for (const metric of spec.metrics) {
    const result = buildSeries(rows, summary, spec.xColumn, metric);
    warnings.push(...result.warnings);
    if (result.series.length === 0) {
      warnings.push(`metric '${metric}': no series to draw; figure skipped`);
      continue;
    }
    const refLines: RefLine[] = wantedRefs.map((tag) => ({
      label: tag,
      value: referenceLine(baselineRows!, baselineSummary!, tag, metric),
      dash: REF_DASHES[tag],
    }));
    const svg = buildFigureSvg({
      title: `${metric} vs ${spec.xColumn}`,
      xLabel: spec.xColumn,
      yLabel: metric,
      series: result.series,
      refLines,
      marker: spec.marker,
    });
    const file = path.join(spec.outputDir, `${spec.name}_${metric}.svg`);
    writeFileSync(file, svg, "utf8");
    written.push(file);
  }
  return { written, warnings };
}
