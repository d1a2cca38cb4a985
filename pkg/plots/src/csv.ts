/**
 * Reader for the simulator's CSV contract.
 *
 * Layout: `#`-prefixed `key = value` comments carrying the resolved run
 * config, then the exact header
 * `t,th1,th2,om1,om2,u1,u2,N,resolves,status,Vf_end`, then one row per time
 * step.  Anything else is a schema violation and is reported as a column
 * diff so the caller can print something actionable.
 */

export const SCHEMA = [
  "t", "th1", "th2", "om1", "om2", "u1", "u2", "N", "resolves", "status", "Vf_end",
] as const;

export interface RunRow {
  t: number;
  th1: number;
  th2: number;
  om1: number;
  om2: number;
  u1: number;
  u2: number;
  N: number;
  resolves: number;
  status: string;
  vfEnd: number;
}

export interface RunLog {
  config: Map<string, string>;
  rows: RunRow[];
}

export class SchemaError extends Error {
  readonly missing: string[];
  readonly unexpected: string[];

  constructor(message: string, missing: string[] = [], unexpected: string[] = []) {
    super(message);
    this.name = "SchemaError";
    this.missing = missing;
    this.unexpected = unexpected;
  }

  columnDiff(): string {
    const parts: string[] = [];
    if (this.missing.length > 0) parts.push(`missing: ${this.missing.join(", ")}`);
    if (this.unexpected.length > 0) parts.push(`unexpected: ${this.unexpected.join(", ")}`);
    return parts.join("; ");
  }
}

function parseNumberField(raw: string, column: string, line: number): number {
  const value = Number(raw);
  if (raw.trim() === "" || Number.isNaN(value) && raw.trim().toLowerCase() !== "nan") {
    throw new SchemaError(`line ${line}: bad number in column ${column}: ${JSON.stringify(raw)}`);
  }
  return value;
}

export function parseRunLog(text: string): RunLog {
  const config = new Map<string, string>();
  const rows: RunRow[] = [];
  let headerSeen = false;
  let lastT = -Infinity;

  const lines = text.split(/\r?\n/);
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i];
    if (line.trim() === "") continue;
    if (line.startsWith("#")) {
      const m = /^#\s*([^=]+?)\s*=\s*(.*)$/.exec(line);
      if (m) config.set(m[1], m[2]);
      continue;
    }
    if (!headerSeen) {
      const got = line.split(",").map((c) => c.trim());
      const want = SCHEMA as readonly string[];
      if (got.length !== want.length || got.some((c, k) => c !== want[k])) {
        const missing = want.filter((c) => !got.includes(c));
        const unexpected = got.filter((c) => !want.includes(c));
        const err = new SchemaError(
          `header mismatch at line ${i + 1}`, missing, unexpected);
        err.message += `: ${err.columnDiff() || "column order differs"}`;
        throw err;
      }
      headerSeen = true;
      continue;
    }
    const cells = line.split(",");
    if (cells.length !== SCHEMA.length) {
      throw new SchemaError(
        `line ${i + 1}: expected ${SCHEMA.length} columns, got ${cells.length}`);
    }
    const row: RunRow = {
      t: parseNumberField(cells[0], "t", i + 1),
      th1: parseNumberField(cells[1], "th1", i + 1),
      th2: parseNumberField(cells[2], "th2", i + 1),
      om1: parseNumberField(cells[3], "om1", i + 1),
      om2: parseNumberField(cells[4], "om2", i + 1),
      u1: parseNumberField(cells[5], "u1", i + 1),
      u2: parseNumberField(cells[6], "u2", i + 1),
      N: parseNumberField(cells[7], "N", i + 1),
      resolves: parseNumberField(cells[8], "resolves", i + 1),
      status: cells[9],
      vfEnd: Number(cells[10]),
    };
    if (!(row.t > lastT)) {
      throw new SchemaError(`line ${i + 1}: time column is not strictly increasing`);
    }
    lastT = row.t;
    rows.push(row);
  }
  if (!headerSeen) {
    throw new SchemaError("no header line found", [...SCHEMA], []);
  }
  return { config, rows };
}
