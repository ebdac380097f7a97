/** Deterministic SVG assembly for mean-curve figures.
 *
 * Output bytes are a pure function of the figure input: fixed canvas,
 * fixed palette, fixed number formatting, no timestamps, no randomness.
 * Every plotted point carries its numeric values in data attributes so the
 * drawn figure can be audited against the source CSVs.
 */

import { Series } from "./aggregate.js";

export interface RefLine {
  readonly label: string;
  readonly value: number;
  readonly dash: string;
}

export interface FigureInput {
  readonly title: string;
  readonly xLabel: string;
  readonly yLabel: string;
  readonly series: readonly Series[];
  readonly refLines: readonly RefLine[];
  readonly marker: number | null;
}

const WIDTH = 720;
const HEIGHT = 480;
const MARGIN = { top: 48, right: 176, bottom: 56, left: 72 } as const;
const PLOT_W = WIDTH - MARGIN.left - MARGIN.right;
const PLOT_H = HEIGHT - MARGIN.top - MARGIN.bottom;

/** Colour-blind-safe palette (Okabe–Ito), cycled over series. */
const PALETTE = [
  "#0072b2",
  "#d55e00",
  "#009e73",
  "#cc79a7",
  "#e69f00",
  "#56b4e9",
  "#000000",
  "#999999",
] as const;

/** Step of roughly (hi - lo) / targetCount, snapped to 1/2/5 x 10^k. */
export function tickStep(span: number, targetCount: number): number {
  const raw = span / Math.max(1, targetCount);
  const magnitude = Math.pow(10, Math.floor(Math.log10(raw) + 1e-12));
  const normalized = raw / magnitude;
  let snapped: number;
  if (normalized <= 1.5) {
    snapped = 1;
  } else if (normalized <= 3.5) {
    snapped = 2;
  } else if (normalized <= 7.5) {
    snapped = 5;
  } else {
    snapped = 10;
  }
  return snapped * magnitude;
}

export interface NiceDomain {
  readonly lo: number;
  readonly hi: number;
  readonly step: number;
}

/** Expand [min, max] outward to tick-step boundaries; degenerate-safe. */
export function niceDomain(
  min: number,
  max: number,
  targetCount: number,
): NiceDomain {
  let lo = Math.min(min, max);
  let hi = Math.max(min, max);
  if (hi - lo === 0) {
    const pad = Math.max(Math.abs(lo) * 0.1, 1);
    lo -= pad;
    hi += pad;
  }
  const step = tickStep(hi - lo, targetCount);
  return {
    lo: Math.floor(lo / step + 1e-9) * step,
    hi: Math.ceil(hi / step - 1e-9) * step,
    step,
  };
}

/** Tick values spanning a nice domain, free of accumulation drift. */
export function ticksFor(domain: NiceDomain): number[] {
  const first = Math.round(domain.lo / domain.step);
  const last = Math.round(domain.hi / domain.step);
  const ticks: number[] = [];
  for (let i = first; i <= last; i++) {
    ticks.push(i * domain.step);
  }
  return ticks;
}

/** Decimal places needed to print multiples of `step` exactly. */
function decimalsOf(step: number): number {
  const text = String(step);
  const eIndex = text.indexOf("e");
  if (eIndex >= 0) {
    const mantissa = text.slice(0, eIndex);
    const exponent = Number(text.slice(eIndex + 1));
    const dot = mantissa.indexOf(".");
    const mantissaDecimals = dot < 0 ? 0 : mantissa.length - dot - 1;
    return Math.min(20, Math.max(0, mantissaDecimals - exponent));
  }
  const dot = text.indexOf(".");
  return dot < 0 ? 0 : Math.min(20, text.length - dot - 1);
}

/** Uniform-width tick label; never emits "-0". */
export function formatTick(value: number, step: number): string {
  const text = value.toFixed(decimalsOf(step));
  return /^-0(\.0+)?$/.test(text) ? text.slice(1) : text;
}

/** Pixel coordinate with fixed precision; never emits "-0.00". */
function px(value: number): string {
  const text = value.toFixed(2);
  return text === "-0.00" ? "0.00" : text;
}

export function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&apos;");
}

/** Data attribute text: shortest round-trip repr, "" for absent. */
function dataAttr(value: number | null): string {
  return value === null ? "" : String(value);
}

function seriesLabel(epsilon: number | null): string {
  return epsilon === null ? "epsilon = (none)" : `epsilon = ${String(epsilon)}`;
}

/** Assemble the complete SVG document for one figure. */
export function buildFigureSvg(figure: FigureInput): string {
  const xs: number[] = [];
  const ys: number[] = [];
  for (const series of figure.series) {
    for (const point of series.points) {
      xs.push(point.x);
      const half = point.std ?? 0;
      ys.push(point.mean - half, point.mean + half);
    }
  }
  if (figure.marker !== null) {
    xs.push(figure.marker);
  }
  for (const ref of figure.refLines) {
    ys.push(ref.value);
  }
  if (xs.length === 0 || ys.length === 0) {
    throw new RangeError("figure has nothing to draw");
  }
  const xDomain = niceDomain(Math.min(...xs), Math.max(...xs), 6);
  const yDomain = niceDomain(Math.min(...ys), Math.max(...ys), 6);
  const sx = (value: number): number =>
    MARGIN.left + ((value - xDomain.lo) / (xDomain.hi - xDomain.lo)) * PLOT_W;
  const sy = (value: number): number =>
    MARGIN.top + PLOT_H - ((value - yDomain.lo) / (yDomain.hi - yDomain.lo)) * PLOT_H;

  const lines: string[] = [];
  lines.push('<?xml version="1.0" encoding="UTF-8"?>');
  lines.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" ` +
      `height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}" ` +
      'font-family="sans-serif">',
  );
  lines.push(
    `<rect x="0" y="0" width="${WIDTH}" height="${HEIGHT}" fill="#ffffff"/>`,
  );
  lines.push(
    `<text x="${px(MARGIN.left + PLOT_W / 2)}" y="28" text-anchor="middle" ` +
      `font-size="16" fill="#1a1a1a">${escapeXml(figure.title)}</text>`,
  );

  lines.push('<g class="grid" stroke="#e0e0e0" stroke-width="1">');
  for (const tick of ticksFor(yDomain)) {
    const y = px(sy(tick));
    lines.push(
      `<line x1="${px(MARGIN.left)}" y1="${y}" ` +
        `x2="${px(MARGIN.left + PLOT_W)}" y2="${y}"/>`,
    );
  }
  lines.push("</g>");

  lines.push('<g class="axes" stroke="#333333" stroke-width="1">');
  lines.push(
    `<line x1="${px(MARGIN.left)}" y1="${px(MARGIN.top + PLOT_H)}" ` +
      `x2="${px(MARGIN.left + PLOT_W)}" y2="${px(MARGIN.top + PLOT_H)}"/>`,
  );
  lines.push(
    `<line x1="${px(MARGIN.left)}" y1="${px(MARGIN.top)}" ` +
      `x2="${px(MARGIN.left)}" y2="${px(MARGIN.top + PLOT_H)}"/>`,
  );
  lines.push("</g>");

  lines.push('<g class="tick-labels" font-size="11" fill="#333333">');
  for (const tick of ticksFor(xDomain)) {
    const x = px(sx(tick));
    lines.push(
      `<line x1="${x}" y1="${px(MARGIN.top + PLOT_H)}" x2="${x}" ` +
        `y2="${px(MARGIN.top + PLOT_H + 5)}" stroke="#333333"/>`,
    );
    lines.push(
      `<text x="${x}" y="${px(MARGIN.top + PLOT_H + 18)}" ` +
        `text-anchor="middle">${formatTick(tick, xDomain.step)}</text>`,
    );
  }
  for (const tick of ticksFor(yDomain)) {
    const y = sy(tick);
    lines.push(
      `<line x1="${px(MARGIN.left - 5)}" y1="${px(y)}" ` +
        `x2="${px(MARGIN.left)}" y2="${px(y)}" stroke="#333333"/>`,
    );
    lines.push(
      `<text x="${px(MARGIN.left - 9)}" y="${px(y + 3.5)}" ` +
        `text-anchor="end">${formatTick(tick, yDomain.step)}</text>`,
    );
  }
  lines.push("</g>");

  lines.push(
    `<text x="${px(MARGIN.left + PLOT_W / 2)}" ` +
      `y="${px(HEIGHT - 14)}" text-anchor="middle" font-size="13" ` +
      `fill="#1a1a1a">${escapeXml(figure.xLabel)}</text>`,
  );
  lines.push(
    `<text x="20" y="${px(MARGIN.top + PLOT_H / 2)}" text-anchor="middle" ` +
      `font-size="13" fill="#1a1a1a" transform="rotate(-90 20 ` +
      `${px(MARGIN.top + PLOT_H / 2)})">${escapeXml(figure.yLabel)}</text>`,
  );

  figure.series.forEach((series, seriesIndex) => {
    const color = PALETTE[seriesIndex % PALETTE.length]!;
    const eps = dataAttr(series.epsilon);
    lines.push(`<g class="series" data-epsilon="${eps}">`);
    const hasBand = series.points.some(
      (point) => point.std !== null && point.std > 0,
    );
    if (hasBand) {
      const upper = series.points.map(
        (point) => `${px(sx(point.x))},${px(sy(point.mean + (point.std ?? 0)))}`,
      );
      const lower = [...series.points]
        .reverse()
        .map(
          (point) =>
            `${px(sx(point.x))},${px(sy(point.mean - (point.std ?? 0)))}`,
        );
      lines.push(
        `<path class="band" d="M ${[...upper, ...lower].join(" L ")} Z" ` +
          `fill="${color}" fill-opacity="0.15" stroke="none"/>`,
      );
    }
    const mean = series.points.map(
      (point) => `${px(sx(point.x))},${px(sy(point.mean))}`,
    );
    lines.push(
      `<path class="mean-line" d="M ${mean.join(" L ")}" fill="none" ` +
        `stroke="${color}" stroke-width="2"/>`,
    );
    for (const point of series.points) {
      lines.push(
        `<circle class="mean-point" cx="${px(sx(point.x))}" ` +
          `cy="${px(sy(point.mean))}" r="2.5" fill="${color}" ` +
          `data-epsilon="${eps}" data-x="${String(point.x)}" ` +
          `data-mean="${String(point.mean)}" ` +
          `data-std="${dataAttr(point.std)}" ` +
          `data-n-seeds="${String(point.nSeeds)}"/>`,
      );
    }
    lines.push("</g>");
  });

  for (const ref of figure.refLines) {
    const y = px(sy(ref.value));
    lines.push(
      `<g class="ref-line" data-ref="${escapeXml(ref.label)}" ` +
        `data-value="${String(ref.value)}">`,
    );
    lines.push(
      `<line x1="${px(MARGIN.left)}" y1="${y}" ` +
        `x2="${px(MARGIN.left + PLOT_W)}" y2="${y}" stroke="#444444" ` +
        `stroke-width="1.5" stroke-dasharray="${ref.dash}"/>`,
    );
    lines.push("</g>");
  }

  if (figure.marker !== null) {
    const x = px(sx(figure.marker));
    lines.push(`<g class="x-marker" data-x="${String(figure.marker)}">`);
    lines.push(
      `<line x1="${x}" y1="${px(MARGIN.top)}" x2="${x}" ` +
        `y2="${px(MARGIN.top + PLOT_H)}" stroke="#888888" stroke-width="1.5" ` +
        'stroke-dasharray="5 4"/>',
    );
    lines.push(
      `<text x="${x}" y="${px(MARGIN.top - 6)}" text-anchor="middle" ` +
        `font-size="11" fill="#555555">${escapeXml(String(figure.marker))}</text>`,
    );
    lines.push("</g>");
  }

  lines.push('<g class="legend" font-size="12" fill="#1a1a1a">');
  let legendRow = 0;
  const legendX = MARGIN.left + PLOT_W + 18;
  const legendEntry = (
    swatch: (y: number) => string,
    label: string,
  ): void => {
    const y = MARGIN.top + 10 + legendRow * 22;
    lines.push(swatch(y));
    lines.push(
      `<text x="${px(legendX + 32)}" y="${px(y + 4)}">${escapeXml(label)}</text>`,
    );
    legendRow += 1;
  };
  figure.series.forEach((series, seriesIndex) => {
    const color = PALETTE[seriesIndex % PALETTE.length]!;
    legendEntry(
      (y) =>
        `<line x1="${px(legendX)}" y1="${px(y)}" x2="${px(legendX + 24)}" ` +
        `y2="${px(y)}" stroke="${color}" stroke-width="2"/>`,
      seriesLabel(series.epsilon),
    );
  });
  for (const ref of figure.refLines) {
    legendEntry(
      (y) =>
        `<line x1="${px(legendX)}" y1="${px(y)}" x2="${px(legendX + 24)}" ` +
        `y2="${px(y)}" stroke="#444444" stroke-width="1.5" ` +
        `stroke-dasharray="${ref.dash}"/>`,
      ref.label,
    );
  }
  if (figure.marker !== null) {
    legendEntry(
      (y) =>
        `<line x1="${px(legendX + 12)}" y1="${px(y - 7)}" ` +
        `x2="${px(legendX + 12)}" y2="${px(y + 7)}" stroke="#888888" ` +
        'stroke-width="1.5" stroke-dasharray="5 4"/>',
      `marker at ${String(figure.marker)}`,
    );
  }
  lines.push("</g>");

  lines.push("</svg>");
  return lines.join("\n") + "\n";
}
