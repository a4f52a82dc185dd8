/**
 * Checkpoint -> PINF conversion.
 *
 * BatchNorm statistics are folded into an affine (w = gamma/sigma,
 * b = beta - gamma*mean/sigma) in real arithmetic first; only then is
 * everything quantized round-half-away-from-zero at 2^fracBits.
 * Folding after quantization would compound the two error sources.
 */

import { Checkpoint, CheckpointLayer, numel } from './checkpoint.js';
import { PinfLayer, PinfModel } from './pinf.js';
import { RingConfig, maxQuantError, quantizeArray } from './quantize.js';

export interface LayerReport {
  index: number;
  kind: string;
  action: 'mapped' | 'folded' | 'skipped';
  reason?: string;
  maxQuantError?: number; // real units, worst element over weight+bias
}

export interface ExportManifest {
  source: string;
  ring: RingConfig;
  layers: LayerReport[];
}

export class UnsupportedLayerError extends Error {
  constructor(index: number, kind: string) {
    super(`layer ${index}: unsupported kind '${kind}'`);
  }
}

const SUPPORTED = new Set(['fc', 'conv2d', 'batchnorm', 'relu', 'avgpool', 'add_skip']);

export function foldBatchnorm(layer: CheckpointLayer): { w: number[]; b: number[] } {
  const { gamma, beta, mean, sigma } = layer;
  if (!gamma || !beta || !mean || !sigma) {
    throw new Error('batchnorm layer missing gamma/beta/mean/sigma');
  }
  const w: number[] = [];
  const b: number[] = [];
  for (let c = 0; c < gamma.length; c++) {
    if (sigma[c] <= 0) throw new Error(`batchnorm channel ${c}: sigma <= 0`);
    w.push(gamma[c] / sigma[c]);
    b.push(beta[c] - (gamma[c] * mean[c]) / sigma[c]);
  }
  return { w, b };
}

export function exportCheckpoint(
  ckpt: Checkpoint,
  ring: RingConfig,
  source = 'checkpoint',
): { model: PinfModel; manifest: ExportManifest } {
  const layers: PinfLayer[] = [];
  const reports: LayerReport[] = [];

  for (const [i, layer] of ckpt.layers.entries()) {
    if (!SUPPORTED.has(layer.kind)) {
      throw new UnsupportedLayerError(i, layer.kind);
    }
    if (layer.kind === 'batchnorm') {
      const { w, b } = foldBatchnorm(layer);
      layers.push({
        kind: 'batchnorm',
        params: {},
        weight: { shape: [w.length], values: quantizeArray(w, ring) },
        bias: { shape: [b.length], values: quantizeArray(b, ring) },
      });
      reports.push({
        index: i,
        kind: layer.kind,
        action: 'folded',
        maxQuantError: Math.max(maxQuantError(w, ring), maxQuantError(b, ring)),
      });
      continue;
    }

    const params: Record<string, unknown> = {};
    if (layer.kind === 'fc' && layer.weight) {
      params.out_dim = layer.weight.shape[0];
      params.in_dim = layer.weight.shape[1];
    }
    if (layer.kind === 'conv2d') {
      params.stride = layer.stride ?? 1;
      params.padding = layer.padding ?? 0;
    }
    if (layer.kind === 'avgpool') {
      params.kh = layer.kh;
      params.kw = layer.kw;
    }
    if (layer.kind === 'add_skip') params.source = layer.source;

    const spec: PinfLayer = { kind: layer.kind, params };
    let worst: number | undefined;
    if (layer.weight) {
      spec.weight = {
        shape: layer.weight.shape,
        values: quantizeArray(layer.weight.data, ring),
      };
      worst = maxQuantError(layer.weight.data, ring);
    }
    if (layer.bias) {
      spec.bias = {
        shape: layer.bias.shape,
        values: quantizeArray(layer.bias.data, ring),
      };
      worst = Math.max(worst ?? 0, maxQuantError(layer.bias.data, ring));
    }
    layers.push(spec);
    reports.push({
      index: i,
      kind: layer.kind,
      action: 'mapped',
      ...(worst !== undefined ? { maxQuantError: worst } : {}),
    });
  }

  const model: PinfModel = {
    name: ckpt.name,
    inputShape: ckpt.input_shape,
    ring,
    layers,
  };
  return { model, manifest: { source, ring, layers: reports } };
}
