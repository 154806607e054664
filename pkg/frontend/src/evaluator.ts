/**
 * Session-mode mask evaluator speaking the line-delimited JSON protocol:
 * handshake {"op":"hello","n":N} -> {"ok":true,"n":N}, then
 * {"op":"eval","mask":[...],"id":k} -> {"id":k,"score":psnr_db}.
 *
 * A mask is applied by zeroing the designated filters' output channels
 * (gate 0 on the conv pre-activation), which silences dependent consumers
 * without touching the weights; the score is the mean per-image PSNR over
 * a validation subset pinned by the data seed.
 */

import * as readline from "readline";
import * as tf from "@tensorflow/tfjs";
import { Batch, DataConfig, validationBatches } from "./data";
import { TinyDenoiser, psnrPerImageMean } from "./model";

export interface EvaluatorOptions {
  valBatches: number;
  data: DataConfig;
  dataSeed: number;
}

export class MaskEvaluator {
  private readonly subset: Batch[];

  constructor(private readonly model: TinyDenoiser, opts: EvaluatorOptions) {
    this.subset = validationBatches(opts.dataSeed, opts.valBatches, opts.data);
  }

  get n(): number {
    return this.model.numFilters;
  }

  /** Mean PSNR (dB) of the gated model over the pinned subset. */
  score(bits: ArrayLike<number>): number {
    const gates = this.model.gatesFromMask(bits);
    try {
      let total = 0;
      for (const batch of this.subset) {
        const psnr = tf.tidy(() =>
          psnrPerImageMean(this.model.forward(batch.noisy, gates), batch.clean));
        total += psnr;
      }
      return total / this.subset.length;
    } finally {
      gates.forEach((g) => g.dispose());
    }
  }

  dispose(): void {
    for (const b of this.subset) {
      b.noisy.dispose();
      b.clean.dispose();
    }
  }
}

function isBinaryMask(value: unknown, n: number): value is number[] {
  return Array.isArray(value) && value.length === n &&
    value.every((b) => b === 0 || b === 1);
}

/** Handle one protocol line; returns the reply line (never throws). */
export function handleRequest(evaluator: MaskEvaluator, line: string,
                              state: { ready: boolean }): string {
  let req: any;
  try {
    req = JSON.parse(line);
  } catch {
    return JSON.stringify({ id: null, error: `malformed request: ${line.slice(0, 80)}` });
  }
  if (req && req.op === "hello") {
    if (req.n !== evaluator.n) {
      return JSON.stringify({ ok: false, error: `expected n=${evaluator.n}, got ${req.n}` });
    }
    state.ready = true;
    return JSON.stringify({ ok: true, n: evaluator.n });
  }
  const id = req && Number.isInteger(req.id) ? req.id : null;
  if (!req || req.op !== "eval") {
    return JSON.stringify({ id, error: `unknown op: ${req && req.op}` });
  }
  if (!isBinaryMask(req.mask, evaluator.n)) {
    return JSON.stringify({ id, error: `mask must be a binary array of length ${evaluator.n}` });
  }
  try {
    return JSON.stringify({ id, score: evaluator.score(req.mask) });
  } catch (err) {
    return JSON.stringify({ id, error: String(err) });
  }
}

/** Blocking stdin/stdout session loop. */
export function serve(evaluator: MaskEvaluator): Promise<void> {
  const rl = readline.createInterface({ input: process.stdin, terminal: false });
  const state = { ready: false };
  return new Promise((resolve) => {
    rl.on("line", (line) => {
      if (!line.trim()) return;
      process.stdout.write(handleRequest(evaluator, line, state) + "\n");
    });
    rl.on("close", resolve);
  });
}
