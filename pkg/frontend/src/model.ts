/**
 * Tiny convolutional denoiser with per-channel gates on every prunable
 * convolution. All convs are 3x3 same-padding; hidden convs use relu, the
 * output conv is linear. Gates multiply the conv pre-activation (the
 * channel's output map), so a zero gate removes the filter's entire
 * contribution, consumers included.
 */

import * as tf from "@tensorflow/tfjs";
import { stream } from "./rng";

export interface ModelConfig {
  channels: number[]; // hidden conv widths; prunable filters, in layer order
  imageSize: number;
  seed: number;
  loss: "psnr" | "mse";
}

export const DEFAULT_MODEL: ModelConfig = {
  channels: [8, 8],
  imageSize: 16,
  seed: 0,
  loss: "psnr",
};

const KERNEL = 3;
const DATA_RANGE = 1.0;

// tfjs variable names are engine-global; a counter keeps instances apart.
let instanceCounter = 0;

export class TinyDenoiser {
  readonly config: ModelConfig;
  readonly kernels: tf.Variable[] = [];
  readonly biases: tf.Variable[] = [];
  /** Output channels per conv; the last conv (RGB out) is not prunable. */
  readonly widths: number[];

  constructor(config: ModelConfig) {
    this.config = config;
    this.widths = [...config.channels, 3];
    const tag = instanceCounter++;
    const rng = stream(config.seed, "weights");
    let inCh = 3;
    this.widths.forEach((outCh, i) => {
      const fanIn = KERNEL * KERNEL * inCh;
      // Small-init the output conv: the network predicts a residual
      // correction, so the untrained model stays near the identity.
      const std = Math.sqrt(2.0 / fanIn) * (i === this.widths.length - 1 ? 0.1 : 1.0);
      const k = tf.tensor4d(rng.normals(KERNEL * KERNEL * inCh * outCh, std),
                            [KERNEL, KERNEL, inCh, outCh]);
      this.kernels.push(tf.variable(k, true, `m${tag}/kernel${i}`));
      this.biases.push(tf.variable(
        tf.tensor1d(rng.normals(outCh, 0.01)), true, `m${tag}/bias${i}`));
      inCh = outCh;
    });
  }

  get numConvs(): number {
    return this.widths.length;
  }

  get prunableLayers(): number {
    return this.widths.length - 1;
  }

  /** Total prunable filters across hidden convs. */
  get numFilters(): number {
    return this.config.channels.reduce((a, b) => a + b, 0);
  }

  paramsPerFilter(layer: number): number {
    const inCh = layer === 0 ? 3 : this.config.channels[layer - 1];
    return KERNEL * KERNEL * inCh;
  }

  /** Pre-activation of conv `i` applied to its input feature map. */
  preact(i: number, input: tf.Tensor4D): tf.Tensor4D {
    const conv = tf.conv2d(input, this.kernels[i] as tf.Tensor4D, 1, "same");
    return tf.add(conv, this.biases[i]) as tf.Tensor4D;
  }

  private activation(i: number, pre: tf.Tensor4D): tf.Tensor4D {
    return i === this.numConvs - 1 ? pre : (tf.relu(pre) as tf.Tensor4D);
  }

  /**
   * Run convs `from`.. given the pre-activation of conv `from`, then add
   * the global residual (the network predicts a correction to its input).
   * Gates (one vector per prunable conv, length = width) scale the
   * pre-activations; missing entries mean all-ones.
   */
  forwardFromPreact(from: number, pre: tf.Tensor4D, residual: tf.Tensor4D,
                    gates?: (tf.Tensor1D | null)[]): tf.Tensor4D {
    let h = pre;
    for (let i = from; i < this.numConvs; i++) {
      let cur = i === from ? h : this.preact(i, h);
      const gate = gates && i < this.prunableLayers ? gates[i] : null;
      if (gate) {
        cur = tf.mul(cur, gate) as tf.Tensor4D;
      }
      h = this.activation(i, cur);
    }
    return tf.add(h, residual) as tf.Tensor4D;
  }

  forward(x: tf.Tensor4D, gates?: (tf.Tensor1D | null)[]): tf.Tensor4D {
    return this.forwardFromPreact(0, this.preact(0, x), x, gates);
  }

  /** Forward pass capturing every conv's ungated pre-activation. */
  forwardWithPreacts(x: tf.Tensor4D): { out: tf.Tensor4D; preacts: tf.Tensor4D[] } {
    const preacts: tf.Tensor4D[] = [];
    let h = x;
    for (let i = 0; i < this.numConvs; i++) {
      const pre = this.preact(i, h);
      preacts.push(pre);
      h = this.activation(i, pre);
    }
    return { out: tf.add(h, x) as tf.Tensor4D, preacts };
  }

  /** Batch loss; the default mirrors training: 100 - PSNR(batch MSE). */
  loss(pred: tf.Tensor4D, clean: tf.Tensor4D): tf.Scalar {
    const mse = tf.mean(tf.square(tf.sub(pred, clean))) as tf.Scalar;
    if (this.config.loss === "mse") {
      return mse;
    }
    const psnr = tf.mul(tf.scalar(-10 / Math.LN10),
                        tf.log(tf.div(mse, DATA_RANGE * DATA_RANGE)));
    return tf.sub(tf.scalar(100), psnr) as tf.Scalar;
  }

  trainables(): tf.Variable[] {
    return [...this.kernels, ...this.biases];
  }

  /** Gate vectors (1 = keep, 0 = pruned) from a global mask over filter ids. */
  gatesFromMask(bits: ArrayLike<number>): tf.Tensor1D[] {
    if (bits.length !== this.numFilters) {
      throw new Error(`mask length ${bits.length} does not match N=${this.numFilters}`);
    }
    const gates: tf.Tensor1D[] = [];
    let offset = 0;
    for (const width of this.config.channels) {
      const g = new Float32Array(width);
      for (let j = 0; j < width; j++) g[j] = bits[offset + j] ? 0 : 1;
      gates.push(tf.tensor1d(g));
      offset += width;
    }
    return gates;
  }

  dispose(): void {
    for (const v of [...this.kernels, ...this.biases]) v.dispose();
  }
}

/** Mean per-image PSNR in dB over a prediction batch. */
export function psnrPerImageMean(pred: tf.Tensor4D, clean: tf.Tensor4D): number {
  return tf.tidy(() => {
    const mse = tf.mean(tf.square(tf.sub(pred, clean)), [1, 2, 3]);
    const psnr = tf.mul(tf.scalar(-10 / Math.LN10),
                        tf.log(tf.maximum(mse, 1e-12)));
    return tf.mean(psnr).dataSync()[0];
  });
}
