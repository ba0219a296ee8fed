export interface Agg {
  mean: number;
  std: number;
  n: number;
}

/** Mean and sample standard deviation (0 for a single value). */
export function aggregate(values: number[]): Agg {
  if (values.length === 0) throw new Error("cannot aggregate zero values");
  const n = values.length;
  const mean = values.reduce((a, b) => a + b, 0) / n;
  if (n === 1) return { mean, std: 0, n };
  const ss = values.reduce((a, b) => a + (b - mean) * (b - mean), 0);
  return { mean, std: Math.sqrt(ss / (n - 1)), n };
}

/** Group rows by a derived key, preserving first-appearance order. */
export function groupBy<T>(rows: T[], key: (row: T) => string): Map<string, T[]> {
  const out = new Map<string, T[]>();
  for (const row of rows) {
    const k = key(row);
    const bucket = out.get(k);
    if (bucket) bucket.push(row);
    else out.set(k, [row]);
  }
  return out;
}
