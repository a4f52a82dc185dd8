/**
 * Float checkpoint format.
 *
 * A checkpoint is a JSON document describing the layer graph with
 * float64 weights stored flat alongside their shapes.  This is the
 * interchange representation the exporter consumes; adapters from
 * framework-native formats only need to emit this document.
 */

import { readFileSync } from 'node:fs';
import { z } from 'zod';

const tensorSchema = z.object({
  shape: z.array(z.number().int().positive()),
  data: z.array(z.number()),
});

const layerSchema = z.object({
  kind: z.string(),
  weight: tensorSchema.optional(),
  bias: tensorSchema.optional(),
  // batchnorm statistics (pre-fold)
  gamma: z.array(z.number()).optional(),
  beta: z.array(z.number()).optional(),
  mean: z.array(z.number()).optional(),
  sigma: z.array(z.number()).optional(),
  // geometry
  stride: z.number().int().positive().optional(),
  padding: z.number().int().nonnegative().optional(),
  kh: z.number().int().positive().optional(),
  kw: z.number().int().positive().optional(),
  source: z.number().int().optional(),
});

const checkpointSchema = z.object({
  name: z.string(),
  input_shape: z.array(z.number().int().positive()),
  layers: z.array(layerSchema),
});

export type FloatTensor = z.infer<typeof tensorSchema>;
export type CheckpointLayer = z.infer<typeof layerSchema>;
export type Checkpoint = z.infer<typeof checkpointSchema>;

export function numel(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

export function parseCheckpoint(text: string): Checkpoint {
  const ckpt = checkpointSchema.parse(JSON.parse(text));
  for (const [i, layer] of ckpt.layers.entries()) {
    for (const t of [layer.weight, layer.bias]) {
      if (t && t.data.length !== numel(t.shape)) {
        throw new Error(`layer ${i}: tensor data length != shape product`);
      }
    }
  }
  return ckpt;
}

export function loadCheckpoint(path: string): Checkpoint {
  return parseCheckpoint(readFileSync(path, 'utf8'));
}
