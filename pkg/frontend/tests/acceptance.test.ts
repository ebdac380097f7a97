/** End-to-end guarantees of the plot layer, one test per guarantee.
 *
 * Each test prints a single `ACCEPTANCE <name>: PASS (...)` line after its
 * assertions succeed, mirroring the style of the Python acceptance suite.
 */

import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import path from "node:path";

import { describe, expect, it } from "vitest";

import { render } from "../src/figure.js";
import { specFromObject } from "../src/spec.js";
import {
  extractPoints,
  fixture,
  groupRowValues,
  naiveMean,
  summaryMap,
} from "./helpers.js";

function report(name: string, detail: string): void {
  console.log(`ACCEPTANCE ${name}: PASS (${detail})`);
}

function ksweepSpec(outputDir: string) {
  return specFromObject(
    {
      spec_version: 1,
      rows: fixture("ksweep", "rows.csv"),
      summary: fixture("ksweep", "rows_summary.csv"),
      baselines_rows: fixture("ksweep", "rows_baselines.csv"),
      baselines_summary: fixture("ksweep", "rows_baselines_summary.csv"),
      metrics: ["test_acc", "indomain_test_acc"],
      reference_lines: { erm: true, oracle: true },
      vertical_marker: 6,
      output_dir: outputDir,
      name: "ksweep",
    },
    process.cwd(),
  );
}

describe("plot layer acceptance", () => {
  it("rendered mean curves match the harness summary to 1e-9", () => {
    const out = mkdtempSync(path.join(tmpdir(), "acc-"));
    const { written } = render(ksweepSpec(out));
    const cells = summaryMap(fixture("ksweep", "rows_summary.csv"));
    let checked = 0;
    let worst = 0;
    for (const [index, metric] of ["test_acc", "indomain_test_acc"].entries()) {
      const svg = readFileSync(written[index]!, "utf8");
      const points = extractPoints(svg);
      expect(points).toHaveLength(6);
      const recomputed = groupRowValues(
        fixture("ksweep", "rows.csv"),
        "sweep_value",
        metric,
      );
      for (const point of points) {
        const eps = point.epsilon === "0" ? "0.0" : "1.0";
        const cell = cells.get(`${point.x}|${eps}||${metric}`)!;
        expect(cell).toBeDefined();
        // drawn value is the summary value, bit for bit
        expect(point.mean).toBe(cell.mean);
        // and the summary value agrees with an independent recomputation
        const values = recomputed.get(`${point.x}|${point.epsilon}`)!;
        const diff = Math.abs(point.mean - naiveMean(values));
        expect(diff).toBeLessThanOrEqual(1e-9);
        worst = Math.max(worst, diff);
        checked += 1;
      }
    }
    report(
      "plotted-means-match-summary",
      `${checked} points across 2 metrics, worst |diff| ${worst.toExponential(2)}`,
    );
  });

  it("renders are byte-deterministic", () => {
    const outA = mkdtempSync(path.join(tmpdir(), "acc-"));
    const outB = mkdtempSync(path.join(tmpdir(), "acc-"));
    const first = render(ksweepSpec(outA)).written;
    const second = render(ksweepSpec(outB)).written;
    expect(first).toHaveLength(2);
    let bytes = 0;
    for (let i = 0; i < first.length; i++) {
      const a = readFileSync(first[i]!);
      const b = readFileSync(second[i]!);
      expect(a.equals(b)).toBe(true);
      bytes += a.length;
    }
    report(
      "byte-deterministic-renders",
      `2 figures, ${bytes} total bytes identical across independent renders`,
    );
  });

  it("the pair-count figure carries the marker and both baselines", () => {
    const out = mkdtempSync(path.join(tmpdir(), "acc-"));
    const { written } = render(ksweepSpec(out));
    const svg = readFileSync(written[0]!, "utf8");
    expect(svg).toContain('<g class="x-marker" data-x="6">');
    const refs = [...svg.matchAll(/<g class="ref-line" data-ref="(\w+)"/g)].map(
      (match) => match[1],
    );
    expect(refs.sort()).toEqual(["erm", "oracle"]);
    const erm = summaryMap(
      fixture("ksweep", "rows_baselines_summary.csv"),
    ).get("||erm|test_acc")!.mean;
    expect(svg).toContain(`data-ref="erm" data-value="${erm}"`);
    report(
      "marker-and-baseline-lines",
      "vertical marker at 6 plus erm and oracle reference lines present",
    );
  });
});
