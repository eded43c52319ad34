/**
 * Flat-buffer bindings for the tokensieve core.
 *
 * A batch travels as two contiguous row-major Float64Array buffers
 * (students and teachers, m rows of |V| probabilities each); results
 * come back as one Float64Array per metric.  No math lives here: every
 * call serializes its input to the core's line-record or score-file
 * format, invokes the `tokensieve` CLI, and parses the emitted CSV/JSON
 * back into buffers, so binding outputs are the core's outputs.
 *
 * The Python interpreter is resolved from $TOKENSIEVE_PYTHON (default
 * `python3`) and must have the core package installed.  Calls are
 * reentrant: each one works in its own temp directory.
 */

import { execFile } from "node:child_process";
import { mkdtemp, readFile, rm, writeFile } from "node:fs/promises";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { promisify } from "node:util";

import { ShapeError, errorFromCli } from "./errors.js";

export * from "./errors.js";

const execFileAsync = promisify(execFile);

export interface FlatBatch {
  /** Row-major m x vocabSize student probabilities. */
  studentProbs: Float64Array;
  /** Row-major m x vocabSize teacher probabilities. */
  teacherProbs: Float64Array;
  m: number;
  vocabSize: number;
}

export interface ColumnarMetrics {
  h: Float64Array;
  deltaRev: Float64Array;
  deltaFwd: Float64Array;
  hHat: Float64Array;
  deltaHat: Float64Array;
  softor: Float64Array;
  q3Score: Float64Array;
}

export type Strategy =
  | "entropy-sample"
  | "softor-topk"
  | "q3-topk"
  | "div-topk"
  | "softor-bottomk";

function pythonBin(): string {
  return process.env.TOKENSIEVE_PYTHON ?? "python3";
}

async function runCore(args: string[]): Promise<void> {
  try {
    await execFileAsync(pythonBin(), ["-m", "tokensieve", ...args], {
      maxBuffer: 64 * 1024 * 1024,
    });
  } catch (err) {
    const e = err as { stderr?: string; code?: number };
    throw errorFromCli(e.stderr ?? String(err), typeof e.code === "number" ? e.code : null);
  }
}

function checkShape(batch: FlatBatch): void {
  const { studentProbs, teacherProbs, m, vocabSize } = batch;
  if (!Number.isInteger(m) || m < 1 || !Number.isInteger(vocabSize) || vocabSize < 2) {
    throw new ShapeError(`need m >= 1 and vocabSize >= 2, got m=${m}, vocabSize=${vocabSize}`);
  }
  if (studentProbs.length !== m * vocabSize) {
    throw new ShapeError(
      `studentProbs has ${studentProbs.length} entries, expected m*vocabSize = ${m * vocabSize}`,
    );
  }
  if (teacherProbs.length !== m * vocabSize) {
    throw new ShapeError(
      `teacherProbs has ${teacherProbs.length} entries, expected m*vocabSize = ${m * vocabSize}`,
    );
  }
}

/** Serialize a flat batch in the core's line-record format. */
export function renderRecordFile(batch: FlatBatch): string {
  checkShape(batch);
  const { studentProbs, teacherProbs, m, vocabSize } = batch;
  const lines: string[] = [
    JSON.stringify({
      format: "token-records",
      version: 1,
      vocab_size: vocabSize,
      encoding: "probs",
    }),
  ];
  for (let t = 0; t < m; t++) {
    const row = (buf: Float64Array) => Array.from(buf.subarray(t * vocabSize, (t + 1) * vocabSize));
    lines.push(
      JSON.stringify({
        position: t,
        sampled_token: 0,
        student: row(studentProbs),
        teacher: row(teacherProbs),
      }),
    );
  }
  return lines.join("\n") + "\n";
}

async function withWorkdir<T>(fn: (dir: string) => Promise<T>): Promise<T> {
  const dir = await mkdtemp(join(tmpdir(), "tokensieve-"));
  try {
    return await fn(dir);
  } finally {
    await rm(dir, { recursive: true, force: true });
  }
}

const CSV_COLUMNS: Array<[keyof ColumnarMetrics, number]> = [
  ["h", 1],
  ["deltaRev", 2],
  ["deltaFwd", 3],
  ["hHat", 4],
  ["deltaHat", 5],
  ["softor", 6],
  ["q3Score", 7],
];

function parseTokenCsv(text: string, m: number): ColumnarMetrics {
  const rows = text.trim().split("\n").slice(1);
  if (rows.length !== m) {
    throw new ShapeError(`core returned ${rows.length} rows for a batch of ${m}`);
  }
  const out: ColumnarMetrics = {
    h: new Float64Array(m),
    deltaRev: new Float64Array(m),
    deltaFwd: new Float64Array(m),
    hHat: new Float64Array(m),
    deltaHat: new Float64Array(m),
    softor: new Float64Array(m),
    q3Score: new Float64Array(m),
  };
  rows.forEach((row, i) => {
    const fields = row.split(",");
    for (const [name, col] of CSV_COLUMNS) {
      out[name][i] = Number(fields[col]);
    }
  });
  return out;
}

/**
 * Score a flat batch through the core pipeline.
 *
 * Equivalent to the CLI's per-token report on the same data: one
 * Float64Array per metric, indexed by batch position.
 */
export async function scoreBatchFlat(batch: FlatBatch): Promise<ColumnarMetrics> {
  checkShape(batch);
  return withWorkdir(async (dir) => {
    const recordsPath = join(dir, "batch.jsonl");
    await writeFile(recordsPath, renderRecordFile(batch), "utf8");
    await runCore(["analyze", recordsPath, "--out", dir]);
    const csv = await readFile(join(dir, "report.tokens.csv"), "utf8");
    return parseTokenCsv(csv, batch.m);
  });
}

/**
 * Select positions from a raw score buffer with one of the core
 * strategies.  Contracts (budget, tie-breaking, seeded sampling) are the
 * core's: identical inputs and seeds give identical index lists.
 */
export async function selectFlat(
  scores: Float64Array | number[],
  strategy: Strategy,
  rho: number,
  seed?: number,
): Promise<number[]> {
  const values = Array.from(scores);
  if (values.length === 0) {
    throw new ShapeError("scores buffer is empty");
  }
  return withWorkdir(async (dir) => {
    const scoresPath = join(dir, "scores.txt");
    await writeFile(scoresPath, values.map((v) => String(v)).join("\n") + "\n", "utf8");
    const args = [
      "select-scores",
      scoresPath,
      "--strategy",
      strategy,
      "--rho",
      String(rho),
      "--out",
      dir,
    ];
    if (seed !== undefined) {
      args.push("--seed", String(seed));
    }
    await runCore(args);
    const mask = JSON.parse(await readFile(join(dir, `mask_${strategy}.json`), "utf8")) as {
      retained: number[];
    };
    return mask.retained;
  });
}
