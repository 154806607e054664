/**
 * Per-filter statistics from calibration batches.
 *
 * Taylor importance is the L1 norm of gradient * weight over each filter's
 * parameters; Weight-Fisher aggregates w^2 * g^2 (squared batch gradients
 * as the diagonal Fisher proxy); Channel-Fisher differentiates a virtual
 * per-channel scale on the conv output, computed hook-style from cached
 * pre-activations and output gradients with a mean over batch and spatial
 * dimensions. Every statistic is smoothed across batches with an
 * exponential moving average initialized at the first batch.
 */

import * as tf from "@tensorflow/tfjs";
import { Batch } from "./data";
import { TinyDenoiser } from "./model";

export interface CalibrationConfig {
  emaDecay: number; // rho in (0, 1)
}

export const DEFAULT_CALIBRATION: CalibrationConfig = { emaDecay: 0.9 };

export class Ema {
  private value: Float64Array | null = null;
  constructor(private readonly decay: number) {
    if (!(decay > 0 && decay < 1)) {
      throw new Error(`ema decay must lie in (0, 1), got ${decay}`);
    }
  }

  update(sample: ArrayLike<number>): void {
    if (this.value === null) {
      this.value = Float64Array.from(sample);
      return;
    }
    for (let i = 0; i < this.value.length; i++) {
      this.value[i] = this.decay * this.value[i] + (1 - this.decay) * sample[i];
    }
  }

  current(): Float64Array {
    if (this.value === null) throw new Error("ema has no samples");
    return this.value;
  }
}

/** Per-layer list of per-filter values, flattened in (layer, filter) order. */
export function flattenLayers(perLayer: Float64Array[]): number[] {
  const out: number[] = [];
  for (const arr of perLayer) for (const v of arr) out.push(v);
  return out;
}

function kernelGrads(model: TinyDenoiser, batch: Batch): tf.Tensor4D[] {
  const { grads } = tf.variableGrads(
    () => model.loss(model.forward(batch.noisy), batch.clean),
    model.trainables());
  return model.kernels.map((k) => grads[k.name] as tf.Tensor4D);
}

/** Sum |g . w| (or w^2 g^2) over (kh, kw, cin) per output filter. */
function reducePerFilter(kernel: tf.Tensor4D, grad: tf.Tensor4D,
                         kind: "taylor" | "fisher"): Float64Array {
  const data = tf.tidy(() => {
    const prod = tf.mul(grad, kernel);
    const reduced = kind === "taylor"
      ? tf.sum(tf.abs(prod), [0, 1, 2])
      : tf.sum(tf.square(prod), [0, 1, 2]);
    return reduced.dataSync() as Float32Array;
  });
  return Float64Array.from(data);
}

function perBatchKernelStat(model: TinyDenoiser, batch: Batch,
                            kind: "taylor" | "fisher"): Float64Array[] {
  const grads = kernelGrads(model, batch);
  const out: Float64Array[] = [];
  for (let layer = 0; layer < model.prunableLayers; layer++) {
    out.push(reducePerFilter(model.kernels[layer] as tf.Tensor4D, grads[layer], kind));
  }
  grads.forEach((g) => g.dispose());
  return out;
}

function emaOverBatches(model: TinyDenoiser, batches: Batch[],
                        cfg: CalibrationConfig,
                        statFn: (batch: Batch) => Float64Array[]): Float64Array[] {
  const emas = Array.from({ length: model.prunableLayers },
                          () => new Ema(cfg.emaDecay));
  for (const batch of batches) {
    const perLayer = statFn(batch);
    perLayer.forEach((vals, layer) => emas[layer].update(vals));
  }
  return emas.map((e) => Float64Array.from(e.current()));
}

/** First-order importance |dL/dW . W|_1 per filter, EMA over batches. */
export function computeTaylor(model: TinyDenoiser, batches: Batch[],
                              cfg: CalibrationConfig = DEFAULT_CALIBRATION): Float64Array[] {
  return emaOverBatches(model, batches, cfg,
                        (b) => perBatchKernelStat(model, b, "taylor"));
}

/** Weight-Fisher sum_k w_k^2 g_k^2 per filter, EMA over batches. */
export function computeWeightFisher(model: TinyDenoiser, batches: Batch[],
                                    cfg: CalibrationConfig = DEFAULT_CALIBRATION): Float64Array[] {
  return emaOverBatches(model, batches, cfg,
                        (b) => perBatchKernelStat(model, b, "fisher"));
}

/**
 * Channel-Fisher per prunable conv: cache the conv pre-activation a, take
 * the loss gradient at a, and square the mean-reduced inner product
 * mean_{n,h,w}(dL/da . a) per channel.
 */
export function channelScaleGrads(model: TinyDenoiser, batch: Batch): Float64Array[] {
  const out: Float64Array[] = [];
  const preacts: tf.Tensor4D[] = [];
  let h: tf.Tensor4D = batch.noisy;
  for (let i = 0; i < model.prunableLayers; i++) {
    const pre = model.preact(i, h);
    preacts.push(pre);
    h = tf.relu(pre) as tf.Tensor4D;
  }
  for (let layer = 0; layer < model.prunableLayers; layer++) {
    const tail = (a: tf.Tensor) => {
      const rest = model.forwardFromPreact(layer, a as tf.Tensor4D, batch.noisy);
      return model.loss(rest, batch.clean);
    };
    const gradFn = tf.grad(tail);
    const scaleGrad = tf.tidy(() => {
      const g = gradFn(preacts[layer]);
      const m = tf.mean(tf.mul(g, preacts[layer]), [0, 1, 2]);
      return m.dataSync() as Float32Array;
    });
    out.push(Float64Array.from(scaleGrad));
  }
  preacts.forEach((p) => p.dispose());
  return out;
}

export function computeChannelFisher(model: TinyDenoiser, batches: Batch[],
                                     cfg: CalibrationConfig = DEFAULT_CALIBRATION): Float64Array[] {
  return emaOverBatches(model, batches, cfg, (batch) => {
    return channelScaleGrads(model, batch).map(
      (grads) => Float64Array.from(grads, (g) => g * g));
  });
}

/**
 * Mean post-relu activation map per filter over the calibration stream
 * (single-sample mode uses only the first batch), then cosine similarity
 * between same-layer filters.
 */
export function computeSimilarity(model: TinyDenoiser, batches: Batch[],
                                  singleSample = false): number[][][] {
  const used = singleSample ? batches.slice(0, 1) : batches;
  const sums: Float64Array[] = [];
  let count = 0;
  for (const batch of used) {
    const maps: Float32Array[] = tf.tidy(() => {
      const { preacts } = model.forwardWithPreacts(batch.noisy);
      return preacts.slice(0, model.prunableLayers).map((pre) => {
        const act = tf.relu(pre);
        const mean = tf.mean(act, [0]); // (h, w, c) response averaged over batch
        return mean.dataSync() as Float32Array;
      });
    });
    maps.forEach((flat, layer) => {
      if (sums[layer] === undefined) {
        sums[layer] = Float64Array.from(flat);
      } else {
        for (let i = 0; i < flat.length; i++) sums[layer][i] += flat[i];
      }
    });
    count += 1;
  }
  const blocks: number[][][] = [];
  for (let layer = 0; layer < model.prunableLayers; layer++) {
    const width = model.config.channels[layer];
    const hw = sums[layer].length / width;
    // sums holds (h, w, c); gather per-channel response vectors.
    const vectors: Float64Array[] = [];
    for (let c = 0; c < width; c++) {
      const v = new Float64Array(hw);
      for (let p = 0; p < hw; p++) v[p] = sums[layer][p * width + c] / count;
      vectors.push(v);
    }
    const block: number[][] = [];
    for (let i = 0; i < width; i++) {
      block.push(new Array(width).fill(0));
      block[i][i] = 1.0;
    }
    for (let i = 0; i < width; i++) {
      for (let j = i + 1; j < width; j++) {
        const s = cosine(vectors[i], vectors[j]);
        block[i][j] = s;
        block[j][i] = s;
      }
    }
    blocks.push(block);
  }
  return blocks;
}

function cosine(a: Float64Array, b: Float64Array): number {
  let dot = 0;
  let na = 0;
  let nb = 0;
  for (let i = 0; i < a.length; i++) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na === 0 || nb === 0) return 0;
  const s = dot / Math.sqrt(na * nb);
  return Math.min(1, Math.max(-1, s));
}

/** Mean |w| per filter: the weight-only importance used by the redundancy term. */
export function l1Scores(model: TinyDenoiser): Float64Array[] {
  const out: Float64Array[] = [];
  for (let layer = 0; layer < model.prunableLayers; layer++) {
    const perFilter = tf.tidy(() => {
      const k = model.kernels[layer] as tf.Tensor4D;
      return tf.mean(tf.abs(k), [0, 1, 2]).dataSync() as Float32Array;
    });
    out.push(Float64Array.from(perFilter));
  }
  return out;
}
