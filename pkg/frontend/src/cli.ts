#!/usr/bin/env node
/**
 * Entry point: `export` writes the problem file for the Python optimizer,
 * `serve` runs the session-mode mask evaluator on stdin/stdout. One --seed
 * drives weights, calibration data, and the pinned validation subset, so
 * export and serve agree on the model when given the same seed.
 */

import * as tf from "@tensorflow/tfjs";
import { DEFAULT_DATA } from "./data";
import { DEFAULT_MODEL, TinyDenoiser } from "./model";
import { DEFAULT_EXPORT, exportProblem } from "./exporter";
import { MaskEvaluator, serve } from "./evaluator";
import { deriveSeed } from "./rng";

interface Args {
  [key: string]: string | boolean;
}

function parseArgs(argv: string[]): { command: string; args: Args } {
  if (argv.length === 0) usage("missing command");
  const command = argv[0];
  const args: Args = {};
  for (let i = 1; i < argv.length; i++) {
    const token = argv[i];
    if (!token.startsWith("--")) usage(`unexpected argument: ${token}`);
    const key = token.slice(2);
    if (i + 1 < argv.length && !argv[i + 1].startsWith("--")) {
      args[key] = argv[++i];
    } else {
      args[key] = true;
    }
  }
  return { command, args };
}

function usage(message?: string): never {
  if (message) console.error(`error: ${message}`);
  console.error(
    "usage:\n" +
    "  cli.js export --out <file> [--seed S] [--batches B] [--channels 8,8]\n" +
    "                [--image 16] [--batch 4] [--loss psnr|mse] [--single-sample]\n" +
    "  cli.js serve  [--seed S] [--val-batches 4] [--channels 8,8] [--image 16]\n" +
    "                [--batch 4] [--loss psnr|mse]");
  process.exit(2);
}

function intArg(args: Args, key: string, fallback: number): number {
  const raw = args[key];
  if (raw === undefined) return fallback;
  const v = parseInt(String(raw), 10);
  if (!Number.isFinite(v)) usage(`--${key} needs an integer, got ${raw}`);
  return v;
}

function buildModel(args: Args) {
  const seed = intArg(args, "seed", 0);
  const channels = String(args["channels"] ?? DEFAULT_MODEL.channels.join(","))
    .split(",").map((s) => parseInt(s, 10));
  if (channels.some((c) => !Number.isFinite(c) || c < 1)) usage("bad --channels");
  const loss = String(args["loss"] ?? "psnr");
  if (loss !== "psnr" && loss !== "mse") usage("--loss must be psnr or mse");
  const imageSize = intArg(args, "image", DEFAULT_DATA.imageSize);
  const model = new TinyDenoiser({
    channels,
    imageSize,
    seed: deriveSeed(seed, "model"),
    loss,
  });
  const data = {
    imageSize,
    batchSize: intArg(args, "batch", DEFAULT_DATA.batchSize),
    noiseStd: DEFAULT_DATA.noiseStd,
  };
  return { model, data, seed };
}

async function main(): Promise<void> {
  await tf.setBackend("cpu");
  const { command, args } = parseArgs(process.argv.slice(2));
  if (command === "export") {
    const out = args["out"];
    if (typeof out !== "string") usage("export needs --out");
    const { model, data, seed } = buildModel(args);
    const doc = exportProblem(model, out, {
      ...DEFAULT_EXPORT,
      data,
      dataSeed: deriveSeed(seed, "data"),
      batches: intArg(args, "batches", DEFAULT_EXPORT.batches),
      singleSampleSimilarity: args["single-sample"] === true,
    });
    console.error(`wrote ${out} (${doc.filters.length} filters, ` +
                  `${doc.similarity.length} similarity blocks)`);
    return;
  }
  if (command === "serve") {
    const { model, data, seed } = buildModel(args);
    const evaluator = new MaskEvaluator(model, {
      valBatches: intArg(args, "val-batches", 4),
      data,
      dataSeed: deriveSeed(seed, "data"),
    });
    await serve(evaluator);
    return;
  }
  usage(`unknown command: ${command}`);
}

main().catch((err) => {
  console.error(String(err));
  process.exit(1);
});
