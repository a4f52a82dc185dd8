/** Checkpoint generators for the test suite. */

import { Checkpoint, FloatTensor } from '../src/checkpoint.js';
import { mulberry32 } from '../src/verify.js';

export function randomTensor(
  shape: number[],
  rand: () => number,
  spread: number,
): FloatTensor {
  const n = shape.reduce((a, b) => a * b, 1);
  const data: number[] = [];
  for (let i = 0; i < n; i++) data.push((rand() * 2 - 1) * spread);
  return { shape, data };
}

export function toyMlp(seed = 1, dims = [784, 64, 10]): Checkpoint {
  const rand = mulberry32(seed);
  const layers: Checkpoint['layers'] = [];
  for (let i = 0; i + 1 < dims.length; i++) {
    const spread = 1 / Math.sqrt(dims[i]);
    layers.push({
      kind: 'fc',
      weight: randomTensor([dims[i + 1], dims[i]], rand, spread),
      bias: randomTensor([dims[i + 1]], rand, spread),
    });
    if (i + 2 < dims.length) layers.push({ kind: 'relu' });
  }
  return { name: `toy-mlp-${dims.join('-')}`, input_shape: [dims[0]], layers };
}

export function lenet5(seed = 2): Checkpoint {
  const rand = mulberry32(seed);
  const conv = (ic: number, oc: number, k: number) => ({
    kind: 'conv2d',
    stride: 1,
    padding: 0,
    weight: randomTensor([oc, ic, k, k], rand, 1 / Math.sqrt(ic * k * k)),
    bias: randomTensor([oc], rand, 1 / Math.sqrt(ic * k * k)),
  });
  const bn = (c: number) => {
    const gamma = [],
      beta = [],
      mean = [],
      sigma = [];
    for (let i = 0; i < c; i++) {
      gamma.push(0.5 + rand());
      beta.push(rand() - 0.5);
      mean.push(rand() - 0.5);
      sigma.push(0.5 + rand());
    }
    return { kind: 'batchnorm', gamma, beta, mean, sigma };
  };
  return {
    name: 'lenet5',
    input_shape: [1, 32, 32],
    layers: [
      conv(1, 6, 5),
      bn(6),
      { kind: 'relu' },
      { kind: 'avgpool', kh: 2, kw: 2 },
      conv(6, 16, 5),
      bn(16),
      { kind: 'relu' },
      { kind: 'avgpool', kh: 2, kw: 2 },
      conv(16, 120, 5),
      { kind: 'relu' },
      {
        kind: 'fc',
        weight: randomTensor([84, 120], rand, 1 / Math.sqrt(120)),
        bias: randomTensor([84], rand, 1 / Math.sqrt(120)),
      },
      { kind: 'relu' },
      {
        kind: 'fc',
        weight: randomTensor([10, 84], rand, 1 / Math.sqrt(84)),
        bias: randomTensor([10], rand, 1 / Math.sqrt(84)),
      },
    ],
  };
}

export function identityModel(dim = 8): Checkpoint {
  const data: number[] = [];
  for (let o = 0; o < dim; o++) {
    for (let i = 0; i < dim; i++) data.push(o === i ? 1 : 0);
  }
  return {
    name: 'identity',
    input_shape: [dim],
    layers: [{ kind: 'fc', weight: { shape: [dim, dim], data } }],
  };
}
