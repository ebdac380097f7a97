export {
  buildSeries,
  CHECK_TOLERANCE,
  meanStd,
  referenceLine,
  type Series,
  type SeriesPoint,
  type SeriesResult,
} from "./aggregate.js";
export {
  columnIndex,
  type CsvTable,
  DataIntegrityError,
  numericCell,
  parseCsvText,
  readCsv,
  requireColumns,
} from "./csv.js";
export { render, type RenderReport } from "./figure.js";
export {
  type FigureSpec,
  loadSpec,
  SpecError,
  specFromObject,
} from "./spec.js";
export {
  buildFigureSvg,
  escapeXml,
  type FigureInput,
  formatTick,
  niceDomain,
  type NiceDomain,
  type RefLine,
  ticksFor,
  tickStep,
} from "./svg.js";
