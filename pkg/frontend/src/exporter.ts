/**
 * Assemble the problem file (schema version 1) consumed by the Python
 * optimizer: per-filter statistics plus per-layer activation-similarity
 * blocks, all computed from a calibration stream.
 */

import * as fs from "fs";
import { Batch, DataConfig, DEFAULT_DATA, calibrationBatches, disposeBatches } from "./data";
import { TinyDenoiser } from "./model";
import {
  CalibrationConfig,
  DEFAULT_CALIBRATION,
  computeChannelFisher,
  computeSimilarity,
  computeTaylor,
  computeWeightFisher,
  l1Scores,
} from "./stats";

export interface ExportOptions {
  batches: number;
  singleSampleSimilarity: boolean;
  calibration: CalibrationConfig;
  data: DataConfig;
  dataSeed: number;
}

export const DEFAULT_EXPORT: ExportOptions = {
  batches: 8,
  singleSampleSimilarity: false,
  calibration: DEFAULT_CALIBRATION,
  data: DEFAULT_DATA,
  dataSeed: 0,
};

export interface ProblemDoc {
  version: number;
  filters: Array<{
    id: number;
    layer: number;
    param_count: number;
    l1: number;
    taylor: number;
    fisher_w: number;
    fisher_c: number;
  }>;
  similarity: Array<{ layer: number; matrix: number[][] }>;
  metadata: Record<string, string>;
}

export function buildProblem(model: TinyDenoiser, stream: Batch[],
                             opts: ExportOptions): ProblemDoc {
  const taylor = computeTaylor(model, stream, opts.calibration);
  const fisherW = computeWeightFisher(model, stream, opts.calibration);
  const fisherC = computeChannelFisher(model, stream, opts.calibration);
  const sim = computeSimilarity(model, stream, opts.singleSampleSimilarity);
  const l1 = l1Scores(model);

  const doc: ProblemDoc = { version: 1, filters: [], similarity: [], metadata: {} };
  let id = 0;
  for (let layer = 0; layer < model.prunableLayers; layer++) {
    const width = model.config.channels[layer];
    const params = model.paramsPerFilter(layer);
    for (let j = 0; j < width; j++) {
      doc.filters.push({
        id: id++,
        layer,
        param_count: params,
        l1: l1[layer][j],
        taylor: taylor[layer][j],
        fisher_w: fisherW[layer][j],
        fisher_c: fisherC[layer][j],
      });
    }
    doc.similarity.push({ layer, matrix: sim[layer] });
  }
  doc.metadata = {
    model: "tiny-denoiser",
    channels: model.config.channels.join(","),
    image_size: String(opts.data.imageSize),
    weight_seed: String(model.config.seed),
    data_seed: String(opts.dataSeed),
    calib_batches: String(opts.batches),
    loss: model.config.loss,
  };
  return doc;
}

export function exportProblem(model: TinyDenoiser, path: string,
                              opts: ExportOptions): ProblemDoc {
  const stream = calibrationBatches(opts.dataSeed, opts.batches, opts.data);
  try {
    const doc = buildProblem(model, stream, opts);
    fs.writeFileSync(path, JSON.stringify(doc, null, 1) + "\n", "utf-8");
    return doc;
  } finally {
    disposeBatches(stream);
  }
}
