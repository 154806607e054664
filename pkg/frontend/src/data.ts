/**
 * Synthetic paired denoising data: smooth random fields as clean images,
 * plus seeded gaussian noise. Batches are NHWC float32 in [0, 1].
 */

import * as tf from "@tensorflow/tfjs";
import { Rng, stream } from "./rng";

export interface Batch {
  noisy: tf.Tensor4D;
  clean: tf.Tensor4D;
}

export interface DataConfig {
  imageSize: number;
  batchSize: number;
  noiseStd: number;
}

export const DEFAULT_DATA: DataConfig = { imageSize: 16, batchSize: 4, noiseStd: 0.1 };

/** Smooth field: sum of a few random low-frequency sinusoids per channel. */
function cleanImage(rng: Rng, size: number): Float32Array {
  const img = new Float32Array(size * size * 3);
  for (let c = 0; c < 3; c++) {
    const waves = [];
    for (let w = 0; w < 3; w++) {
      waves.push({
        fx: (rng.next() * 2 - 1) * 2.5,
        fy: (rng.next() * 2 - 1) * 2.5,
        phase: rng.next() * 2 * Math.PI,
        amp: 0.4 + 0.6 * rng.next(),
      });
    }
    for (let y = 0; y < size; y++) {
      for (let x = 0; x < size; x++) {
        let v = 0;
        for (const w of waves) {
          v += w.amp * Math.sin((w.fx * x + w.fy * y) / size * 2 * Math.PI + w.phase);
        }
        img[(y * size + x) * 3 + c] = 0.5 + 0.5 * Math.tanh(v);
      }
    }
  }
  return img;
}

export function makeBatch(rng: Rng, cfg: DataConfig): Batch {
  const { imageSize: s, batchSize: b, noiseStd } = cfg;
  const clean = new Float32Array(b * s * s * 3);
  const noisy = new Float32Array(b * s * s * 3);
  for (let i = 0; i < b; i++) {
    const img = cleanImage(rng, s);
    clean.set(img, i * s * s * 3);
    for (let j = 0; j < img.length; j++) {
      const v = img[j] + rng.normal() * noiseStd;
      noisy[i * s * s * 3 + j] = Math.min(1, Math.max(0, v));
    }
  }
  const shape: [number, number, number, number] = [b, s, s, 3];
  return { noisy: tf.tensor4d(noisy, shape), clean: tf.tensor4d(clean, shape) };
}

/** Calibration stream: `count` batches from the labeled stream. */
export function calibrationBatches(seed: number, count: number,
                                   cfg: DataConfig = DEFAULT_DATA): Batch[] {
  const rng = stream(seed, "calibration");
  const out: Batch[] = [];
  for (let i = 0; i < count; i++) out.push(makeBatch(rng, cfg));
  return out;
}

/** Validation subset pinned by the data seed; evaluators re-derive it exactly. */
export function validationBatches(seed: number, count: number,
                                  cfg: DataConfig = DEFAULT_DATA): Batch[] {
  const rng = stream(seed, "validation");
  const out: Batch[] = [];
  for (let i = 0; i < count; i++) out.push(makeBatch(rng, cfg));
  return out;
}

export function disposeBatches(batches: Batch[]): void {
  for (const b of batches) {
    b.noisy.dispose();
    b.clean.dispose();
  }
}
