/** Activation-similarity blocks: tied filters, dead filters, invariants. */

import { beforeAll, describe, expect, it } from "vitest";
import * as tf from "@tensorflow/tfjs";
import { makeBatch } from "../src/data";
import { TinyDenoiser } from "../src/model";
import { computeSimilarity } from "../src/stats";
import { Rng } from "../src/rng";

beforeAll(async () => {
  await tf.setBackend("cpu");
});

function calibration(count: number, imageSize: number) {
  const rng = new Rng(13);
  return Array.from({ length: count },
                    () => makeBatch(rng, { imageSize, batchSize: 2, noiseStd: 0.1 }));
}

describe("computeSimilarity", () => {
  it("tied filters have similarity 1", () => {
    const model = new TinyDenoiser({ channels: [3], imageSize: 8, seed: 1, loss: "mse" });
    // Copy filter 0's weights and bias onto filter 1.
    const k = model.kernels[0].arraySync() as number[][][][];
    for (let a = 0; a < 3; a++) {
      for (let b = 0; b < 3; b++) {
        for (let c = 0; c < 3; c++) k[a][b][c][1] = k[a][b][c][0];
      }
    }
    model.kernels[0].assign(tf.tensor4d(k));
    const bias = model.biases[0].arraySync() as number[];
    bias[1] = bias[0];
    model.biases[0].assign(tf.tensor1d(bias));

    const blocks = computeSimilarity(model, calibration(3, 8));
    expect(blocks[0][0][1]).toBeCloseTo(1.0, 6);
  });

  it("a dead filter has zero similarity with every other filter", () => {
    const model = new TinyDenoiser({ channels: [3], imageSize: 8, seed: 2, loss: "mse" });
    // Large negative bias keeps the relu response of filter 2 at exactly 0,
    // a response vector orthogonal to everything.
    const bias = model.biases[0].arraySync() as number[];
    bias[2] = -100;
    model.biases[0].assign(tf.tensor1d(bias));
    const blocks = computeSimilarity(model, calibration(3, 8));
    expect(blocks[0][0][2]).toBe(0);
    expect(blocks[0][1][2]).toBe(0);
  });

  it("blocks satisfy the similarity invariants", () => {
    const model = new TinyDenoiser({ channels: [4, 5], imageSize: 8, seed: 3, loss: "mse" });
    const blocks = computeSimilarity(model, calibration(4, 8));
    expect(blocks.length).toBe(2);
    blocks.forEach((block, layer) => {
      const size = [4, 5][layer];
      expect(block.length).toBe(size);
      for (let i = 0; i < size; i++) {
        expect(block[i][i]).toBe(1.0);
        for (let j = 0; j < size; j++) {
          expect(block[i][j]).toBe(block[j][i]);
          expect(Math.abs(block[i][j])).toBeLessThanOrEqual(1.0);
        }
      }
    });
  });

  it("single-sample mode uses only the first batch", () => {
    const model = new TinyDenoiser({ channels: [4], imageSize: 8, seed: 4, loss: "mse" });
    const batches = calibration(3, 8);
    const single = computeSimilarity(model, batches, true);
    const first = computeSimilarity(model, batches.slice(0, 1));
    expect(single).toEqual(first);
  });
});
