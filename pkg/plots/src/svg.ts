/**
 * Minimal hand-rolled SVG line charts: one X/Y panel with optional log X,
 * shaded mean±std bands, ticks, legend. No DOM, no dependencies; output is a
 * deterministic string for a given input.
 */

export interface Point {
  x: number;
  y: number;
}

export interface Series {
  label: string;
  color: string;
  points: Point[]; // sorted by x
  band?: { upper: number; lower: number }[]; // same length as points
  dash?: string;
}

export interface Axis {
  label: string;
  ticks: number[];
  tickFormat?: (v: number) => string;
  log?: boolean; // log10-position the values (all must be > 0)
  min?: number;
  max?: number;
}

export interface ChartSpec {
  title: string;
  subtitle?: string;
  x: Axis;
  y: Axis;
  series: Series[];
  width?: number;
  height?: number;
}

export function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

const fmtDefault = (v: number): string =>
  Math.abs(v) >= 1000 || v === Math.round(v)
    ? String(v)
    : v.toPrecision(3).replace(/\.?0+$/, "");

/** Round tick positions covering [min, max] with a 1/2/5 step. */
export function niceTicks(min: number, max: number, count: number): number[] {
  const span = max - min || 1;
  const rough = span / count;
  const mag = Math.pow(10, Math.floor(Math.log10(rough)));
  const step = [1, 2, 5, 10].map((m) => m * mag).find((s) => s >= rough) ?? rough;
  const ticks: number[] = [];
  const k0 = Math.ceil(min / step - 1e-9);
  const k1 = Math.floor(max / step + 1e-9);
  for (let k = k0; k <= k1; k++) {
    ticks.push(k === 0 ? 0 : Number((k * step).toPrecision(12)));
  }
  return ticks;
}

function position(v: number, axis: Axis): number {
  if (!axis.log) return v;
  if (v <= 0) throw new Error(`log axis "${axis.label}" needs positive values, got ${v}`);
  return Math.log10(v);
}

function range(axis: Axis, dataVals: number[]): [number, number] {
  const vals = [...axis.ticks, ...dataVals].map((v) => position(v, axis));
  let lo = axis.min !== undefined ? position(axis.min, axis) : Math.min(...vals);
  let hi = axis.max !== undefined ? position(axis.max, axis) : Math.max(...vals);
  if (hi === lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  const pad = axis.log ? 0.04 * (hi - lo) : 0.03 * (hi - lo);
  return [lo - pad, hi + pad];
}

/** Render one chart panel into a <g> translated to (ox, oy); used by chart(). */
function panel(spec: ChartSpec, ox: number, oy: number): string {
  const W = spec.width ?? 460;
  const H = spec.height ?? 300;
  const ml = 56;
  const mr = 14;
  const mt = spec.subtitle ? 40 : 30;
  const mb = 44;
  const pw = W - ml - mr;
  const ph = H - mt - mb;

  const xData = spec.series.flatMap((s) => s.points.map((p) => p.x));
  const yData = spec.series.flatMap((s) => [
    ...s.points.map((p) => p.y),
    ...(s.band ?? []).flatMap((b) => [b.upper, b.lower]),
  ]);
  const [x0, x1] = range(spec.x, xData);
  const [y0, y1] = range(spec.y, yData);
  const xOf = (v: number) => ml + ((position(v, spec.x) - x0) / (x1 - x0)) * pw;
  const yOf = (v: number) => mt + ph - ((position(v, spec.y) - y0) / (y1 - y0)) * ph;
  const xFmt = spec.x.tickFormat ?? fmtDefault;
  const yFmt = spec.y.tickFormat ?? fmtDefault;

  let s = `<g transform="translate(${ox},${oy})">\n`;
  s += `<text x="${ml}" y="14" font-size="11" font-weight="600" fill="#222">${esc(spec.title)}</text>\n`;
  if (spec.subtitle) {
    s += `<text x="${ml}" y="26" font-size="8" fill="#888">${esc(spec.subtitle)}</text>\n`;
  }

  for (const v of spec.y.ticks) {
    const y = yOf(v).toFixed(1);
    s += `<line x1="${ml}" y1="${y}" x2="${ml + pw}" y2="${y}" stroke="#eee" stroke-width="0.6"/>\n`;
    s += `<text x="${ml - 5}" y="${(yOf(v) + 3).toFixed(1)}" text-anchor="end" font-size="8" fill="#555">${esc(yFmt(v))}</text>\n`;
  }
  for (const v of spec.x.ticks) {
    const x = xOf(v).toFixed(1);
    s += `<line x1="${x}" y1="${mt + ph}" x2="${x}" y2="${mt + ph + 3}" stroke="#333" stroke-width="0.6"/>\n`;
    s += `<text x="${x}" y="${mt + ph + 13}" text-anchor="middle" font-size="8" fill="#555">${esc(xFmt(v))}</text>\n`;
  }

  for (const sr of spec.series) {
    if (sr.band) {
      const fwd = sr.points.map(
        (p, i) => `${xOf(p.x).toFixed(1)},${yOf(sr.band![i]!.upper).toFixed(1)}`
      );
      const back = [...sr.points]
        .reverse()
        .map((p, i) => {
          const b = sr.band![sr.points.length - 1 - i]!;
          return `${xOf(p.x).toFixed(1)},${yOf(b.lower).toFixed(1)}`;
        });
      s += `<polygon fill="${sr.color}" opacity="0.12" points="${[...fwd, ...back].join(" ")}"/>\n`;
    }
    const pts = sr.points
      .map((p) => `${xOf(p.x).toFixed(1)},${yOf(p.y).toFixed(1)}`)
      .join(" ");
    s += `<polyline fill="none" stroke="${sr.color}" stroke-width="1.4" ${sr.dash ? `stroke-dasharray="${sr.dash}" ` : ""}points="${pts}"/>\n`;
    for (const p of sr.points) {
      s += `<circle cx="${xOf(p.x).toFixed(1)}" cy="${yOf(p.y).toFixed(1)}" r="2" fill="${sr.color}"/>\n`;
    }
  }

  s += `<line x1="${ml}" y1="${mt}" x2="${ml}" y2="${mt + ph}" stroke="#333" stroke-width="0.8"/>\n`;
  s += `<line x1="${ml}" y1="${mt + ph}" x2="${ml + pw}" y2="${mt + ph}" stroke="#333" stroke-width="0.8"/>\n`;
  s += `<text x="${ml + pw / 2}" y="${H - 6}" text-anchor="middle" font-size="9" fill="#333">${esc(spec.x.label)}</text>\n`;
  s += `<text x="14" y="${mt + ph / 2}" text-anchor="middle" font-size="9" fill="#333" transform="rotate(-90,14,${mt + ph / 2})">${esc(spec.y.label)}</text>\n`;

  const lx = ml + 10;
  let ly = mt + 10;
  for (const sr of spec.series) {
    s += `<line x1="${lx}" y1="${ly}" x2="${lx + 16}" y2="${ly}" stroke="${sr.color}" stroke-width="1.4" ${sr.dash ? `stroke-dasharray="${sr.dash}" ` : ""}/>\n`;
    s += `<text x="${lx + 20}" y="${ly + 3}" font-size="8" fill="#444">${esc(sr.label)}</text>\n`;
    ly += 12;
  }
  s += `</g>\n`;
  return s;
}

export function chart(spec: ChartSpec): string {
  const W = spec.width ?? 460;
  const H = spec.height ?? 300;
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${W} ${H}" font-family="Helvetica, Arial, sans-serif">\n` +
    `<rect width="${W}" height="${H}" fill="#fff"/>\n` +
    panel(spec, 0, 0) +
    `</svg>\n`
  );
}

/** Side-by-side panels sharing one SVG canvas. */
export function chartRow(specs: ChartSpec[]): string {
  const widths = specs.map((s) => s.width ?? 460);
  const H = Math.max(...specs.map((s) => s.height ?? 300));
  const W = widths.reduce((a, b) => a + b, 0);
  let s = `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${W} ${H}" font-family="Helvetica, Arial, sans-serif">\n`;
  s += `<rect width="${W}" height="${H}" fill="#fff"/>\n`;
  let ox = 0;
  specs.forEach((sp, i) => {
    s += panel(sp, ox, 0);
    ox += widths[i]!;
  });
  s += `</svg>\n`;
  return s;
}
