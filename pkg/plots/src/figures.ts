/**
 * The three figure kinds, one per sweep CSV schema:
 *
 *   robustness  D,id_bits,ber,seed,retrieval_rate,accepted_count
 *   dimension   D,seed,retrieval_rate
 *   device      n,time_bucket,rows,ber,nmse
 *
 * Each renderer validates its schema first (failing with the missing column
 * by name), averages over seeds where the schema carries them, and returns a
 * self-contained SVG string.
 */

import { numeric, parseCsv, requireColumns, requireNumeric, type Table } from "./csv.js";
import { aggregate, groupBy } from "./stats.js";
import { chart, chartRow, niceTicks, type Series } from "./svg.js";

export const ROBUSTNESS_COLUMNS = [
  "D",
  "id_bits",
  "ber",
  "seed",
  "retrieval_rate",
  "accepted_count",
] as const;
export const DIMENSION_COLUMNS = ["D", "seed", "retrieval_rate"] as const;
export const DEVICE_COLUMNS = ["n", "time_bucket", "rows", "ber", "nmse"] as const;

const PALETTE = ["#4361ee", "#2d6a4f", "#e63946", "#9d4edd", "#f77f00", "#06aed5"];

const pct = (v: number): string => `${Number((v * 100).toPrecision(3))}%`;

function sortedUnique(values: number[]): number[] {
  return [...new Set(values)].sort((a, b) => a - b);
}

/** Mean ± std of `col` over seeds, per distinct x; points sorted by x. */
function meanLine(
  rows: Record<string, string>[],
  xCol: string,
  yCol: string
): { points: { x: number; y: number }[]; band: { upper: number; lower: number }[] } {
  const byX = groupBy(rows, (r) => String(numeric(r, xCol)));
  const xs = sortedUnique(rows.map((r) => numeric(r, xCol)));
  const points: { x: number; y: number }[] = [];
  const band: { upper: number; lower: number }[] = [];
  for (const x of xs) {
    const group = byX.get(String(x))!;
    const agg = aggregate(group.map((r) => numeric(r, yCol)));
    points.push({ x, y: agg.mean });
    band.push({ upper: agg.mean + agg.std, lower: agg.mean - agg.std });
  }
  return { points, band };
}

export function renderRobustness(csvText: string): string {
  const table = parseCsv(csvText);
  requireColumns(table, ROBUSTNESS_COLUMNS, "robustness");
  requireNumeric(table, ROBUSTNESS_COLUMNS);
  const seeds = new Set(table.rows.map((r) => r["seed"]!)).size;

  const series: Series[] = [];
  let i = 0;
  for (const [key, rows] of groupBy(table.rows, (r) => `${r["D"]}|${r["id_bits"]}`)) {
    const [d, bits] = key.split("|");
    const { points, band } = meanLine(rows, "ber", "retrieval_rate");
    series.push({
      label: `D=${d}, ${bits}-bit`,
      color: PALETTE[i % PALETTE.length]!,
      points,
      band,
    });
    i++;
  }

  const bers = sortedUnique(table.rows.map((r) => numeric(r, "ber")));
  return chart({
    title: "Retrieval vs. storage bit-error rate",
    subtitle: `rank-1 retrieval rate, mean ± std over ${seeds} seeds`,
    x: { label: "bit-error rate", ticks: bers, tickFormat: pct },
    y: { label: "retrieval rate", ticks: niceTicks(0, 1, 5), min: 0, max: 1 },
    series,
    width: 520,
  });
}

export function renderDimension(csvText: string): string {
  const table = parseCsv(csvText);
  requireColumns(table, DIMENSION_COLUMNS, "dimension");
  requireNumeric(table, DIMENSION_COLUMNS);
  const seeds = new Set(table.rows.map((r) => r["seed"]!)).size;

  const { points, band } = meanLine(table.rows, "D", "retrieval_rate");
  const dims = points.map((p) => p.x);
  return chart({
    title: "Retrieval vs. hypervector dimension",
    subtitle: `fixed bit-error rate, mean ± std over ${seeds} seeds`,
    x: { label: "dimension D (log scale)", ticks: dims, log: true },
    y: { label: "retrieval rate", ticks: niceTicks(0, 1, 5), min: 0, max: 1 },
    series: [
      { label: "rank-1 retrieval", color: PALETTE[0]!, points, band },
    ],
    width: 480,
  });
}

export function renderDevice(csvText: string): string {
  const table = parseCsv(csvText);
  requireColumns(table, DEVICE_COLUMNS, "device");
  requireNumeric(table, DEVICE_COLUMNS.filter((c) => c !== "time_bucket"));

  // bucket order as produced (relaxation time ascending)
  const buckets = [...new Set(table.rows.map((r) => r["time_bucket"]!))];
  const bucketPos = new Map(buckets.map((b, i) => [b, i]));
  const ns = sortedUnique(table.rows.map((r) => numeric(r, "n")));

  const berSeries: Series[] = ns.map((n, i) => {
    const points = buckets.map((bucket, bi) => {
      const rows = table.rows.filter(
        (r) => numeric(r, "n") === n && r["time_bucket"] === bucket
      );
      if (rows.length === 0) throw new Error(`no rows for n=${n}, ${bucket}`);
      // ber is independent of the rows column; collapse duplicates
      return { x: bi, y: aggregate(rows.map((r) => numeric(r, "ber"))).mean };
    });
    return { label: `${n} bit/cell`, color: PALETTE[i % PALETTE.length]!, points };
  });
  const berMax = Math.max(...berSeries.flatMap((s) => s.points.map((p) => p.y)));

  const lastBucket = buckets[buckets.length - 1]!;
  const rowsVals = sortedUnique(table.rows.map((r) => numeric(r, "rows")));
  const nmseSeries: Series[] = ns.map((n, i) => {
    const points = rowsVals.map((rv) => {
      const rows = table.rows.filter(
        (r) =>
          numeric(r, "n") === n &&
          r["time_bucket"] === lastBucket &&
          numeric(r, "rows") === rv
      );
      if (rows.length === 0) throw new Error(`no rows for n=${n}, rows=${rv}`);
      return { x: rv, y: aggregate(rows.map((r) => numeric(r, "nmse"))).mean };
    });
    return { label: `${n} bit/cell`, color: PALETTE[i % PALETTE.length]!, points };
  });
  const nmseMax = Math.max(...nmseSeries.flatMap((s) => s.points.map((p) => p.y)));

  return chartRow([
    {
      title: "Storage bit-error rate vs. relaxation time",
      subtitle: "read-back errors per stored bit",
      x: {
        label: "relaxation time bucket",
        ticks: buckets.map((_, i) => i),
        tickFormat: (v) => buckets[v] ?? "",
      },
      y: { label: "bit-error rate", ticks: niceTicks(0, berMax, 5), min: 0, tickFormat: pct },
      series: berSeries,
      width: 460,
    },
    {
      title: "MAC error vs. active rows",
      subtitle: `normalized MSE of analog dot products, ${lastBucket}`,
      x: { label: "active rows (log scale)", ticks: rowsVals, log: true },
      y: { label: "NMSE", ticks: niceTicks(0, nmseMax, 5), min: 0 },
      series: nmseSeries,
      width: 460,
    },
  ]);
}

export type FigureKind = "robustness" | "dimension" | "device";

export function render(kind: FigureKind, csvText: string): string {
  switch (kind) {
    case "robustness":
      return renderRobustness(csvText);
    case "dimension":
      return renderDimension(csvText);
    case "device":
      return renderDevice(csvText);
  }
}

export { parseCsv, requireColumns, type Table };
