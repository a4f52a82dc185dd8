#!/usr/bin/env node
import { writeFileSync } from 'node:fs';
import { parseArgs } from 'node:util';

import { loadCheckpoint } from './checkpoint.js';
import { exportCheckpoint } from './export.js';
import { writePinf } from './pinf.js';
import { verifyExport } from './verify.js';

const USAGE = `usage:
  model-exporter export <ckpt.json> --out <model.pinf> [--phi 12] [--bits 41] [--manifest <path>]
  model-exporter verify <model.pinf> <ckpt.json> [--n 500] [--seed 0]`;

function fail(msg: string): never {
  console.error(msg);
  console.error(USAGE);
  process.exit(2);
}

function main(argv: string[]) {
  const [command, ...rest] = argv;
  if (command === 'export') {
    const { values, positionals } = parseArgs({
      args: rest,
      allowPositionals: true,
      options: {
        phi: { type: 'string', default: '12' },
        bits: { type: 'string', default: '41' },
        out: { type: 'string' },
        manifest: { type: 'string' },
      },
    });
    if (positionals.length !== 1 || !values.out) {
      fail('export needs a checkpoint path and --out');
    }
    const ckpt = loadCheckpoint(positionals[0]);
    const ring = { bitWidth: Number(values.bits), fracBits: Number(values.phi) };
    const { model, manifest } = exportCheckpoint(ckpt, ring, positionals[0]);
    writeFileSync(values.out, writePinf(model));
    const manifestPath = values.manifest ?? values.out + '.manifest.json';
    writeFileSync(manifestPath, JSON.stringify(manifest, null, 2) + '\n');
    console.log(`wrote ${values.out} (${manifest.layers.length} layers)`);
    return;
  }
  if (command === 'verify') {
    const { values, positionals } = parseArgs({
      args: rest,
      allowPositionals: true,
      options: {
        n: { type: 'string', default: '500' },
        seed: { type: 'string', default: '0' },
      },
    });
    if (positionals.length !== 2) fail('verify needs model and checkpoint paths');
    const report = verifyExport(
      positionals[0],
      loadCheckpoint(positionals[1]),
      Number(values.n),
      Number(values.seed),
    );
    console.log(JSON.stringify(report, null, 2));
    return;
  }
  fail(`unknown command '${command ?? ''}'`);
}

main(process.argv.slice(2));
