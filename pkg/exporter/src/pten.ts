/** PTEN tensor container: "PTEN" | u8 rank | u32 dims | f64 LE values. */

const MAGIC = Buffer.from('PTEN');

export function writePten(shape: number[], data: Float64Array | number[]): Buffer {
  const head = Buffer.alloc(5 + 4 * shape.length);
  MAGIC.copy(head);
  head.writeUInt8(shape.length, 4);
  shape.forEach((d, i) => head.writeUInt32LE(d, 5 + 4 * i));
  const body = Buffer.alloc(data.length * 8);
  for (let i = 0; i < data.length; i++) body.writeDoubleLE(data[i], i * 8);
  return Buffer.concat([head, body]);
}

export function readPten(buf: Buffer): { shape: number[]; data: Float64Array } {
  if (!buf.subarray(0, 4).equals(MAGIC)) throw new Error('not a tensor file');
  const rank = buf.readUInt8(4);
  const shape: number[] = [];
  for (let i = 0; i < rank; i++) shape.push(buf.readUInt32LE(5 + 4 * i));
  const off = 5 + 4 * rank;
  const n = (buf.length - off) / 8;
  const data = new Float64Array(n);
  for (let i = 0; i < n; i++) data[i] = buf.readDoubleLE(off + i * 8);
  return { shape, data };
}
