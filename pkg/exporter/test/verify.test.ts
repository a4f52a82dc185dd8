/** Agreement between the exported model (via the engine CLI) and float inference. */

import { execFileSync } from 'node:child_process';
import { mkdtempSync, rmSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { afterAll, describe, expect, it } from 'vitest';

import { exportCheckpoint } from '../src/export.js';
import { writePinf } from '../src/pinf.js';
import { DEFAULT_RING } from '../src/quantize.js';
import { verifyExport } from '../src/verify.js';
import { identityModel, toyMlp } from './fixtures.js';

const dir = mkdtempSync(join(tmpdir(), 'exporter-verify-'));
afterAll(() => rmSync(dir, { recursive: true, force: true }));

function exportToFile(ckpt: ReturnType<typeof toyMlp>, name: string, ring = DEFAULT_RING) {
  const path = join(dir, name);
  writeFileSync(path, writePinf(exportCheckpoint(ckpt, ring).model));
  return path;
}

function engineValidationReport(path: string): string[] {
  // validate_graph is not CLI-exposed; the thinnest possible bridge
  const out = execFileSync(
    'python3',
    [
      '-c',
      'import sys,json\n' +
        'from privinfer.model import load_model, validate_graph\n' +
        'm = load_model(open(sys.argv[1], "rb").read())\n' +
        'print(json.dumps(validate_graph(m)))',
      path,
    ],
    { encoding: 'utf8' },
  );
  return JSON.parse(out.trim());
}

describe('verify_export', () => {
  it('toy MLP: loads cleanly and top-1 agreement >= 99% on 500 inputs', () => {
    const ckpt = toyMlp(1);
    const path = exportToFile(ckpt, 'mlp.pinf');
    expect(engineValidationReport(path)).toEqual([]);
    const report = verifyExport(path, ckpt, 500, 7);
    expect(report.samples).toBe(500);
    expect(report.top1Agreement).toBeGreaterThanOrEqual(0.99);
    expect(report.maxLogitDeviation).toBeLessThan(0.01);
  }, 120_000);

  it('identity model agrees exactly on top-1', () => {
    const ckpt = identityModel(8);
    const report = verifyExport(exportToFile(ckpt, 'id.pinf'), ckpt, 100, 3);
    expect(report.top1Agreement).toBe(1);
  }, 60_000);

  it('coarse phi degrades the metric instead of hiding it', () => {
    const ckpt = toyMlp(4, [32, 16, 4]);
    const fine = verifyExport(
      exportToFile(ckpt, 'fine.pinf'),
      ckpt,
      200,
      5,
    );
    const coarse = verifyExport(
      exportToFile(ckpt, 'coarse.pinf', { bitWidth: 41, fracBits: 2 }),
      ckpt,
      200,
      5,
    );
    expect(coarse.maxLogitDeviation).toBeGreaterThan(fine.maxLogitDeviation * 10);
    expect(coarse.top1Agreement).toBeLessThanOrEqual(fine.top1Agreement);
  }, 120_000);
});
