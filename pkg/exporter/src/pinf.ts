/**
 * PINF model container writer.
 *
 * Layout: "PINF" | u16 version | u32 header length | canonical JSON
 * header | little-endian uint64 weight blobs | sha256 of everything
 * before it.  The header JSON is serialized with sorted keys and no
 * whitespace so a given model always produces identical bytes.
 */

import { createHash } from 'node:crypto';

import type { RingConfig } from './quantize.js';

const MAGIC = Buffer.from('PINF');
const VERSION = 1;

export interface PinfLayer {
  kind: string;
  params: Record<string, unknown>;
  weight?: { shape: number[]; values: BigUint64Array };
  bias?: { shape: number[]; values: BigUint64Array };
}

export interface PinfModel {
  name: string;
  inputShape: number[];
  ring: RingConfig;
  layers: PinfLayer[];
}

/** JSON with recursively sorted object keys, no whitespace. */
export function canonicalJson(value: unknown): string {
  if (Array.isArray(value)) {
    return '[' + value.map(canonicalJson).join(',') + ']';
  }
  if (value !== null && typeof value === 'object') {
    const keys = Object.keys(value as object).sort();
    const parts = keys.map(
      (k) => JSON.stringify(k) + ':' + canonicalJson((value as any)[k]),
    );
    return '{' + parts.join(',') + '}';
  }
  return JSON.stringify(value);
}

function blobBytes(values: BigUint64Array): Buffer {
  const buf = Buffer.alloc(values.length * 8);
  for (let i = 0; i < values.length; i++) {
    buf.writeBigUInt64LE(values[i], i * 8);
  }
  return buf;
}

export function writePinf(model: PinfModel): Buffer {
  const blobs: Buffer[] = [];
  let offset = 0;
  const layersHdr = model.layers.map((layer) => {
    const entry = (t?: { shape: number[]; values: BigUint64Array }) => {
      if (!t) return null;
      const raw = blobBytes(t.values);
      blobs.push(raw);
      const e = { shape: t.shape, offset, nbytes: raw.length };
      offset += raw.length;
      return e;
    };
    return {
      kind: layer.kind,
      params: layer.params,
      weight: entry(layer.weight),
      bias: entry(layer.bias),
    };
  });
  const header = {
    name: model.name,
    input_shape: model.inputShape,
    ring: { bit_width: model.ring.bitWidth, frac_bits: model.ring.fracBits },
    layers: layersHdr,
  };
  const hdrBytes = Buffer.from(canonicalJson(header));
  const head = Buffer.alloc(10);
  MAGIC.copy(head);
  head.writeUInt16LE(VERSION, 4);
  head.writeUInt32LE(hdrBytes.length, 6);
  const body = Buffer.concat([head, hdrBytes, ...blobs]);
  return Buffer.concat([body, createHash('sha256').update(body).digest()]);
}

/** Parse + checksum-verify; used by the round-trip tests. */
export function readPinf(data: Buffer): PinfModel {
  if (data.length < 48 || !data.subarray(0, 4).equals(MAGIC)) {
    throw new Error('not a model container');
  }
  const body = data.subarray(0, data.length - 32);
  const digest = data.subarray(data.length - 32);
  if (!createHash('sha256').update(body).digest().equals(digest)) {
    throw new Error('checksum mismatch');
  }
  const version = body.readUInt16LE(4);
  if (version !== VERSION) throw new Error(`unsupported version ${version}`);
  const hdrLen = body.readUInt32LE(6);
  const header = JSON.parse(body.subarray(10, 10 + hdrLen).toString());
  const blobBase = 10 + hdrLen;
  const readBlob = (e: { shape: number[]; offset: number; nbytes: number } | null) => {
    if (!e) return undefined;
    const raw = body.subarray(blobBase + e.offset, blobBase + e.offset + e.nbytes);
    const values = new BigUint64Array(e.nbytes / 8);
    for (let i = 0; i < values.length; i++) values[i] = raw.readBigUInt64LE(i * 8);
    return { shape: e.shape, values };
  };
  return {
    name: header.name,
    inputShape: header.input_shape,
    ring: { bitWidth: header.ring.bit_width, fracBits: header.ring.frac_bits },
    layers: header.layers.map((lh: any) => ({
      kind: lh.kind,
      params: lh.params,
      weight: readBlob(lh.weight),
      bias: readBlob(lh.bias),
    })),
  };
}
