/** Figure specification: which CSVs to read and what to draw from them.
 *
 * Specs are JSON documents validated against a strict schema; unknown keys
 * are rejected so typos fail loudly.  Relative CSV and output paths are
 * resolved against the spec file's own directory, which keeps a spec valid
 * no matter where the tool is invoked from.
 */

import { readFileSync } from "node:fs";
import path from "node:path";
import { z } from "zod";

/** A malformed spec file or unusable combination of options. */
export class SpecError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "SpecError";
  }
}

const rawSpecSchema = z
  .object({
    spec_version: z.literal(1),
    rows: z.string().min(1),
    summary: z.string().min(1),
    baselines_rows: z.string().min(1).optional(),
    baselines_summary: z.string().min(1).optional(),
    x_column: z.string().min(1).default("sweep_value"),
    metrics: z.array(z.string().min(1)).min(1),
    reference_lines: z
      .object({
        erm: z.boolean().default(false),
        oracle: z.boolean().default(false),
      })
      .strict()
      .default({ erm: false, oracle: false }),
    vertical_marker: z.number().finite().optional(),
    output_dir: z.string().min(1).default("figures"),
    name: z
      .string()
      .regex(/^[A-Za-z0-9_.-]+$/, "name must be a plain file-name stem")
      .optional(),
    format: z.enum(["svg", "png"]).default("svg"),
  })
  .strict();

/** Validated figure spec with all paths resolved to absolute form. */
export interface FigureSpec {
  readonly rows: string;
  readonly summary: string;
  readonly baselinesRows: string | null;
  readonly baselinesSummary: string | null;
  readonly xColumn: string;
  readonly metrics: readonly string[];
  readonly referenceLines: { readonly erm: boolean; readonly oracle: boolean };
  readonly marker: number | null;
  readonly outputDir: string;
  readonly name: string;
  readonly format: "svg" | "png";
}

function stem(filePath: string): string {
  const base = path.basename(filePath);
  const dot = base.lastIndexOf(".");
  return dot > 0 ? base.slice(0, dot) : base;
}

/** Validate a raw spec object; relative paths resolve against baseDir. */
export function specFromObject(raw: unknown, baseDir: string): FigureSpec {
  const parsed = rawSpecSchema.safeParse(raw);
  if (!parsed.success) {
    const issue = parsed.error.issues[0]!;
    const where = issue.path.length > 0 ? issue.path.join(".") : "(root)";
    throw new SpecError(`figure spec: ${where}: ${issue.message}`);
  }
  const spec = parsed.data;
  const needsBaselines = spec.reference_lines.erm || spec.reference_lines.oracle;
  if (needsBaselines && (!spec.baselines_rows || !spec.baselines_summary)) {
    throw new SpecError(
      "figure spec: reference_lines need both baselines_rows and " +
        "baselines_summary paths",
    );
  }
  const resolve = (p: string): string => path.resolve(baseDir, p);
  return {
    rows: resolve(spec.rows),
    summary: resolve(spec.summary),
    baselinesRows: spec.baselines_rows ? resolve(spec.baselines_rows) : null,
    baselinesSummary: spec.baselines_summary
      ? resolve(spec.baselines_summary)
      : null,
    xColumn: spec.x_column,
    metrics: spec.metrics,
    referenceLines: {
      erm: spec.reference_lines.erm,
      oracle: spec.reference_lines.oracle,
    },
    marker: spec.vertical_marker ?? null,
    outputDir: resolve(spec.output_dir),
    name: spec.name ?? stem(spec.rows),
    format: spec.format,
  };
}

/** Load and validate a spec JSON file. */
export function loadSpec(specPath: string): FigureSpec {
  const text = readFileSync(specPath, "utf8");
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch (error) {
    throw new SpecError(`${specPath}: not valid JSON: ${(error as Error).message}`);
  }
  return specFromObject(raw, path.dirname(path.resolve(specPath)));
}
