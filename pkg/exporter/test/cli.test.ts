import { execFileSync } from 'node:child_process';
import { existsSync, mkdtempSync, readFileSync, rmSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { afterAll, describe, expect, it } from 'vitest';

import { toyMlp } from './fixtures.js';

const dir = mkdtempSync(join(tmpdir(), 'exporter-cli-'));
afterAll(() => rmSync(dir, { recursive: true, force: true }));

// npm test builds dist/ before vitest runs
function cli(args: string[]): string {
  return execFileSync('node', ['dist/cli.js', ...args], {
    encoding: 'utf8',
    cwd: join(import.meta.dirname, '..'),
  });
}

describe('cli', () => {
  it('export then verify', () => {
    const ckptPath = join(dir, 'mlp.json');
    writeFileSync(ckptPath, JSON.stringify(toyMlp(6, [16, 8, 4])));
    const out = join(dir, 'mlp.pinf');

    const msg = cli(['export', ckptPath, '--out', out, '--phi', '12', '--bits', '41']);
    expect(msg).toMatch(/wrote .*mlp\.pinf/);
    expect(existsSync(out)).toBe(true);
    const manifest = JSON.parse(readFileSync(out + '.manifest.json', 'utf8'));
    expect(manifest.ring).toEqual({ bitWidth: 41, fracBits: 12 });
    expect(manifest.layers.length).toBe(3);

    const report = JSON.parse(cli(['verify', out, ckptPath, '--n', '50']));
    expect(report.samples).toBe(50);
    expect(report.top1Agreement).toBeGreaterThanOrEqual(0.98);
  }, 120_000);
});
