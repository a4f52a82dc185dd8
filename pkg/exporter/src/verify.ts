/**
 * Export verification: float inference here vs the engine's plaintext
 * oracle, reached only through the engine CLI and its file formats.
 */

import { execFileSync } from 'node:child_process';
import { mkdtempSync, rmSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';

import { Checkpoint, numel } from './checkpoint.js';
import { argmax, floatInfer } from './infer.js';
import { writePten } from './pten.js';

export interface AgreementReport {
  samples: number;
  top1Agreement: number; // fraction in [0, 1]
  maxLogitDeviation: number;
}

/** Deterministic PRNG so verification runs are reproducible. */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function engineCommand(): string[] {
  const cmd = process.env.PRIVINFER_CMD ?? 'python3 -m privinfer.cli';
  return cmd.split(' ');
}

/** Run the engine's plaintext oracle on a batch; returns flat logits. */
export function enginePlaintextInfer(modelPath: string, inputPath: string): number[] {
  const [exe, ...args] = engineCommand();
  const out = execFileSync(
    exe,
    [...args, 'infer-plain', '--model', modelPath, '--input', inputPath],
    { encoding: 'utf8', maxBuffer: 1 << 26 },
  );
  const lines = out.trim().split('\n');
  return JSON.parse(lines[lines.length - 1]);
}

export function verifyExport(
  modelPath: string,
  ckpt: Checkpoint,
  samples: number,
  seed = 0,
): AgreementReport {
  const inSize = numel(ckpt.input_shape);
  const rand = mulberry32(seed ^ 0x9e3779b9);
  const batch = new Float64Array(samples * inSize);
  for (let i = 0; i < batch.length; i++) batch[i] = rand() * 2 - 1;

  const dir = mkdtempSync(join(tmpdir(), 'verify-'));
  let flat: number[];
  try {
    const inputPath = join(dir, 'inputs.pten');
    writeFileSync(inputPath, writePten([samples, ...ckpt.input_shape], batch));
    flat = enginePlaintextInfer(modelPath, inputPath);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
  const outSize = flat.length / samples;

  let agree = 0;
  let worst = 0;
  for (let s = 0; s < samples; s++) {
    const want = floatInfer(ckpt, batch.subarray(s * inSize, (s + 1) * inSize));
    const got = flat.slice(s * outSize, (s + 1) * outSize);
    if (argmax(got) === argmax(want)) agree++;
    for (let k = 0; k < outSize; k++) {
      worst = Math.max(worst, Math.abs(got[k] - want[k]));
    }
  }
  return {
    samples,
    top1Agreement: agree / samples,
    maxLogitDeviation: worst,
  };
}
