import { describe, expect, it } from 'vitest';

import { parseCheckpoint } from '../src/checkpoint.js';
import { exportCheckpoint, foldBatchnorm, UnsupportedLayerError } from '../src/export.js';
import { canonicalJson, readPinf, writePinf } from '../src/pinf.js';
import { DEFAULT_RING, dequantize, quantize } from '../src/quantize.js';
import { mulberry32 } from '../src/verify.js';
import { identityModel, lenet5, toyMlp } from './fixtures.js';

describe('pinf container', () => {
  it('round-trips through the reader', () => {
    const { model } = exportCheckpoint(toyMlp(1, [12, 6, 3]), DEFAULT_RING);
    const back = readPinf(writePinf(model));
    expect(back.name).toBe(model.name);
    expect(back.inputShape).toEqual([12]);
    expect(back.ring).toEqual(DEFAULT_RING);
    expect(back.layers.map((l) => l.kind)).toEqual(['fc', 'relu', 'fc']);
    expect(back.layers[0].weight!.values).toEqual(model.layers[0].weight!.values);
  });

  it('canonical json sorts keys recursively', () => {
    expect(canonicalJson({ b: 1, a: { d: [2], c: 3 } })).toBe(
      '{"a":{"c":3,"d":[2]},"b":1}',
    );
  });

  it('is deterministic for a fixed checkpoint and config', () => {
    const ckpt = lenet5(5);
    const a = writePinf(exportCheckpoint(ckpt, DEFAULT_RING).model);
    const b = writePinf(exportCheckpoint(ckpt, DEFAULT_RING).model);
    expect(a.equals(b)).toBe(true);
  });

  it('rejects corrupted bytes', () => {
    const buf = writePinf(exportCheckpoint(identityModel(), DEFAULT_RING).model);
    buf[buf.length - 40] ^= 1;
    expect(() => readPinf(buf)).toThrow(/checksum/);
  });
});

describe('export', () => {
  it('quantization error stays within half a step per layer', () => {
    const { manifest } = exportCheckpoint(toyMlp(3), DEFAULT_RING);
    const halfStep = 2 ** -(DEFAULT_RING.fracBits + 1);
    for (const report of manifest.layers) {
      if (report.maxQuantError !== undefined) {
        expect(report.maxQuantError).toBeLessThanOrEqual(halfStep + 1e-12);
      }
    }
    expect(manifest.layers.every((l) => l.action !== 'skipped')).toBe(true);
  });

  it('names the offending layer for unsupported kinds', () => {
    const ckpt = parseCheckpoint(
      JSON.stringify({
        name: 'bad',
        input_shape: [1, 4, 4],
        layers: [{ kind: 'maxpool', kh: 2, kw: 2 }],
      }),
    );
    expect(() => exportCheckpoint(ckpt, DEFAULT_RING)).toThrow(UnsupportedLayerError);
    expect(() => exportCheckpoint(ckpt, DEFAULT_RING)).toThrow(
      /layer 0: unsupported kind 'maxpool'/,
    );
  });

  it('folds the expected number of batchnorm layers in lenet5', () => {
    const { manifest } = exportCheckpoint(lenet5(), DEFAULT_RING);
    const folded = manifest.layers.filter((l) => l.action === 'folded');
    expect(folded.length).toBe(2);
    expect(manifest.layers.length).toBe(13);
  });

  it('rejects non-positive sigma', () => {
    expect(() =>
      foldBatchnorm({ kind: 'batchnorm', gamma: [1], beta: [0], mean: [0], sigma: [0] }),
    ).toThrow(/sigma/);
  });

  it('fold-then-quantize matches quantized direct affine within one step', () => {
    // per-channel: round(q(gamma/sigma)) applied vs the real affine, on
    // random parameters; both agree to one quantization step
    const rand = mulberry32(9);
    const step = 2 ** -DEFAULT_RING.fracBits;
    for (let trial = 0; trial < 200; trial++) {
      const gamma = 0.2 + rand() * 2;
      const beta = rand() - 0.5;
      const mean = rand() - 0.5;
      const sigma = 0.3 + rand() * 2;
      const { w, b } = foldBatchnorm({
        kind: 'batchnorm',
        gamma: [gamma],
        beta: [beta],
        mean: [mean],
        sigma: [sigma],
      });
      const wq = dequantize(quantize(w[0], DEFAULT_RING), DEFAULT_RING);
      const bq = dequantize(quantize(b[0], DEFAULT_RING), DEFAULT_RING);
      const x = rand() * 2 - 1;
      const direct = (gamma * (x - mean)) / sigma + beta;
      expect(Math.abs(wq * x + bq - direct)).toBeLessThanOrEqual(step);
    }
  });
});
