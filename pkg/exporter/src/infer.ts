/** Float reference inference over a checkpoint graph. */

import { Checkpoint, CheckpointLayer, numel } from './checkpoint.js';

type Shaped = { shape: number[]; data: Float64Array };

function fc(layer: CheckpointLayer, x: Shaped): Shaped {
  const [outDim, inDim] = layer.weight!.shape;
  if (numel(x.shape) !== inDim) {
    throw new Error(`fc expects ${inDim} inputs, got shape ${x.shape}`);
  }
  const w = layer.weight!.data;
  const b = layer.bias?.data;
  const out = new Float64Array(outDim);
  for (let o = 0; o < outDim; o++) {
    let acc = b ? b[o] : 0;
    for (let i = 0; i < inDim; i++) acc += w[o * inDim + i] * x.data[i];
    out[o] = acc;
  }
  return { shape: [outDim], data: out };
}

function conv2d(layer: CheckpointLayer, x: Shaped): Shaped {
  const [oc, ic, kh, kw] = layer.weight!.shape;
  const [c, h, w] = x.shape;
  if (c !== ic) throw new Error(`conv2d expects ${ic} channels, got ${c}`);
  const stride = layer.stride ?? 1;
  const pad = layer.padding ?? 0;
  const oh = Math.floor((h + 2 * pad - kh) / stride) + 1;
  const ow = Math.floor((w + 2 * pad - kw) / stride) + 1;
  const wt = layer.weight!.data;
  const b = layer.bias?.data;
  const out = new Float64Array(oc * oh * ow);
  for (let o = 0; o < oc; o++) {
    for (let i = 0; i < oh; i++) {
      for (let j = 0; j < ow; j++) {
        let acc = b ? b[o] : 0;
        for (let ci = 0; ci < ic; ci++) {
          for (let di = 0; di < kh; di++) {
            const si = i * stride + di - pad;
            if (si < 0 || si >= h) continue;
            for (let dj = 0; dj < kw; dj++) {
              const sj = j * stride + dj - pad;
              if (sj < 0 || sj >= w) continue;
              acc +=
                wt[((o * ic + ci) * kh + di) * kw + dj] *
                x.data[(ci * h + si) * w + sj];
            }
          }
        }
        out[(o * oh + i) * ow + j] = acc;
      }
    }
  }
  return { shape: [oc, oh, ow], data: out };
}

function batchnorm(layer: CheckpointLayer, x: Shaped): Shaped {
  const [c] = x.shape;
  const per = numel(x.shape) / c;
  const out = new Float64Array(x.data.length);
  for (let ci = 0; ci < c; ci++) {
    const g = layer.gamma![ci];
    const m = layer.mean![ci];
    const s = layer.sigma![ci];
    const bt = layer.beta![ci];
    for (let k = 0; k < per; k++) {
      out[ci * per + k] = (g * (x.data[ci * per + k] - m)) / s + bt;
    }
  }
  return { shape: x.shape, data: out };
}

function avgpool(layer: CheckpointLayer, x: Shaped): Shaped {
  const [c, h, w] = x.shape;
  const kh = layer.kh!;
  const kw = layer.kw!;
  if (h % kh || w % kw) throw new Error(`pool ${kh}x${kw} does not tile ${h}x${w}`);
  const oh = h / kh;
  const ow = w / kw;
  const out = new Float64Array(c * oh * ow);
  for (let ci = 0; ci < c; ci++) {
    for (let i = 0; i < oh; i++) {
      for (let j = 0; j < ow; j++) {
        let acc = 0;
        for (let di = 0; di < kh; di++) {
          for (let dj = 0; dj < kw; dj++) {
            acc += x.data[(ci * h + i * kh + di) * w + j * kw + dj];
          }
        }
        out[(ci * oh + i) * ow + j] = acc / (kh * kw);
      }
    }
  }
  return { shape: [c, oh, ow], data: out };
}

export function floatInfer(ckpt: Checkpoint, input: Float64Array): Float64Array {
  if (input.length !== numel(ckpt.input_shape)) {
    throw new Error('input size does not match checkpoint input_shape');
  }
  const outputs: Shaped[] = [{ shape: ckpt.input_shape, data: input }];
  for (const layer of ckpt.layers) {
    const x = outputs[outputs.length - 1];
    let y: Shaped;
    switch (layer.kind) {
      case 'fc':
        y = fc(layer, x);
        break;
      case 'conv2d':
        y = conv2d(layer, x);
        break;
      case 'batchnorm':
        y = batchnorm(layer, x);
        break;
      case 'relu':
        y = { shape: x.shape, data: x.data.map((v) => Math.max(v, 0)) };
        break;
      case 'avgpool':
        y = avgpool(layer, x);
        break;
      case 'add_skip': {
        const src = outputs[layer.source! + 1];
        y = { shape: x.shape, data: x.data.map((v, i) => v + src.data[i]) };
        break;
      }
      default:
        throw new Error(`unsupported layer kind '${layer.kind}'`);
    }
    outputs.push(y);
  }
  return outputs[outputs.length - 1].data;
}

export function argmax(v: Float64Array | number[]): number {
  let best = 0;
  for (let i = 1; i < v.length; i++) if (v[i] > v[best]) best = i;
  return best;
}
