/**
 * Strict reader for the sweep CSVs. The producers never quote fields, so a
 * plain comma split is exact; headers are matched by name and every figure
 * declares the columns it needs up front.
 */

export interface Table {
  columns: string[];
  rows: Record<string, string>[];
}

export function parseCsv(text: string): Table {
  const lines = text
    .split(/\r?\n/)
    .filter((line) => line.trim().length > 0);
  if (lines.length === 0) throw new Error("csv is empty");
  const columns = lines[0]!.split(",").map((c) => c.trim());
  const rows: Record<string, string>[] = [];
  for (let i = 1; i < lines.length; i++) {
    const cells = lines[i]!.split(",");
    if (cells.length !== columns.length) {
      throw new Error(
        `csv line ${i + 1}: expected ${columns.length} cells, got ${cells.length}`
      );
    }
    const row: Record<string, string> = {};
    columns.forEach((col, j) => (row[col] = cells[j]!.trim()));
    rows.push(row);
  }
  return { columns, rows };
}

/** Fail fast, naming the first missing column, before any numbers are read. */
export function requireColumns(
  table: Table,
  needed: readonly string[],
  kind: string
): void {
  for (const col of needed) {
    if (!table.columns.includes(col)) {
      throw new Error(`${kind} csv: missing column "${col}"`);
    }
  }
}

export function numeric(row: Record<string, string>, col: string): number {
  const v = Number(row[col]);
  if (!Number.isFinite(v)) {
    throw new Error(`column "${col}": not a number: ${JSON.stringify(row[col])}`);
  }
  return v;
}

/** Check every cell of the given columns parses, so bad values surface even
 * in rows a particular figure would not otherwise read. */
export function requireNumeric(table: Table, cols: readonly string[]): void {
  for (const row of table.rows) {
    for (const col of cols) numeric(row, col);
  }
}
