#!/usr/bin/env node
/** Command-line entry point.
 *
 * Usage::
 *
 *     ncmatch-plot --spec <figure.json>
 *     ncmatch-plot --rows <rows.csv> --summary <summary.csv> \
 *         --metrics test_acc[,more] [--x sweep_value] [--marker N] \
 *         [--baselines-rows F --baselines-summary F --erm --oracle] \
 *         [--out-dir DIR] [--name STEM] [--format svg]
 *
 * Either a spec file or direct flags, never both.  Flag paths resolve
 * against the current directory; spec paths against the spec file.
 * Progress and warnings go to stderr; the only outputs are image files.
 * Exit codes: 0 success, 2 spec or usage error, 3 data-integrity failure,
 * 4 I/O error.
 */

import { pathToFileURL } from "node:url";
import { parseArgs } from "node:util";

import { DataIntegrityError } from "./csv.js";
import { render } from "./figure.js";
import { FigureSpec, loadSpec, specFromObject, SpecError } from "./spec.js";

const USAGE =
  "usage: ncmatch-plot --spec <figure.json>\n" +
  "       ncmatch-plot --rows <csv> --summary <csv> --metrics <m1[,m2...]>\n" +
  "                    [--x <column>] [--marker <number>]\n" +
  "                    [--baselines-rows <csv> --baselines-summary <csv>]\n" +
  "                    [--erm] [--oracle] [--out-dir <dir>] [--name <stem>]\n" +
  "                    [--format svg]";

interface ParsedFlags {
  spec?: string;
  rows?: string;
  summary?: string;
  "baselines-rows"?: string;
  "baselines-summary"?: string;
  x?: string;
  metrics?: string;
  marker?: string;
  erm?: boolean;
  oracle?: boolean;
  "out-dir"?: string;
  name?: string;
  format?: string;
  help?: boolean;
}

function specFromFlags(flags: ParsedFlags): FigureSpec {
  if (!flags.rows || !flags.summary || !flags.metrics) {
    throw new SpecError(
      "without --spec, the flags --rows, --summary, and --metrics are required",
    );
  }
  let marker: number | undefined;
  if (flags.marker !== undefined) {
    marker = Number(flags.marker);
    if (!Number.isFinite(marker)) {
      throw new SpecError(`--marker must be a number, got '${flags.marker}'`);
    }
  }
  const raw: Record<string, unknown> = {
    spec_version: 1,
    rows: flags.rows,
    summary: flags.summary,
    metrics: flags.metrics.split(",").map((name) => name.trim()),
    reference_lines: { erm: flags.erm ?? false, oracle: flags.oracle ?? false },
  };
  if (flags["baselines-rows"] !== undefined) {
    raw["baselines_rows"] = flags["baselines-rows"];
  }
  if (flags["baselines-summary"] !== undefined) {
    raw["baselines_summary"] = flags["baselines-summary"];
  }
  if (flags.x !== undefined) {
    raw["x_column"] = flags.x;
  }
  if (marker !== undefined) {
    raw["vertical_marker"] = marker;
  }
  if (flags["out-dir"] !== undefined) {
    raw["output_dir"] = flags["out-dir"];
  }
  if (flags.name !== undefined) {
    raw["name"] = flags.name;
  }
  if (flags.format !== undefined) {
    raw["format"] = flags.format;
  }
  return specFromObject(raw, process.cwd());
}

/** Run the CLI; returns the process exit code instead of exiting. */
export function main(argv: readonly string[]): number {
  try {
    let flags: ParsedFlags;
    try {
      const parsed = parseArgs({
        args: [...argv],
        options: {
          spec: { type: "string" },
          rows: { type: "string" },
          summary: { type: "string" },
          "baselines-rows": { type: "string" },
          "baselines-summary": { type: "string" },
          x: { type: "string" },
          metrics: { type: "string" },
          marker: { type: "string" },
          erm: { type: "boolean" },
          oracle: { type: "boolean" },
          "out-dir": { type: "string" },
          name: { type: "string" },
          format: { type: "string" },
          help: { type: "boolean", short: "h" },
        },
        allowPositionals: false,
      });
      flags = parsed.values;
    } catch (error) {
      throw new SpecError((error as Error).message);
    }
    if (flags.help) {
      console.error(USAGE);
      return 0;
    }
    if (flags.spec !== undefined && flags.rows !== undefined) {
      throw new SpecError("use either --spec or direct flags, not both");
    }
    if (flags.spec === undefined && flags.rows === undefined) {
      throw new SpecError(`nothing to do\n${USAGE}`);
    }
    const spec =
      flags.spec !== undefined ? loadSpec(flags.spec) : specFromFlags(flags);
    const report = render(spec);
    for (const warning of report.warnings) {
      console.error(`warning: ${warning}`);
    }
    for (const file of report.written) {
      console.error(`wrote ${file}`);
    }
    return 0;
  } catch (error) {
    if (error instanceof SpecError) {
      console.error(`error: ${error.message}`);
      return 2;
    }
    if (error instanceof DataIntegrityError) {
      console.error(`data error: ${error.message}`);
      return 3;
    }
    if (
      error instanceof Error &&
      typeof (error as NodeJS.ErrnoException).code === "string" &&
      ["ENOENT", "EACCES", "EISDIR", "ENOTDIR"].includes(
        (error as NodeJS.ErrnoException).code!,
      )
    ) {
      console.error(`i/o error: ${error.message}`);
      return 4;
    }
    throw error;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === pathToFileURL(process.argv[1]).href;

if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
