/** Fixed-point encoding into the engine's ring (two's complement mod 2^l). */

export interface RingConfig {
  bitWidth: number; // l
  fracBits: number; // phi
}

export const DEFAULT_RING: RingConfig = { bitWidth: 41, fracBits: 12 };

export function ringModulus(cfg: RingConfig): bigint {
  return 1n << BigInt(cfg.bitWidth);
}

/** Round half away from zero, matching the engine's quantizer. */
export function roundHalfAway(x: number): number {
  return x >= 0 ? Math.floor(x + 0.5) : Math.ceil(x - 0.5);
}

/** Real value -> ring element at scale 2^fracBits. */
export function quantize(v: number, cfg: RingConfig): bigint {
  const scale = 2 ** cfg.fracBits;
  const q = BigInt(roundHalfAway(v * scale));
  const mod = ringModulus(cfg);
  return ((q % mod) + mod) % mod;
}

/** Ring element back to a real number (signed interpretation). */
export function dequantize(u: bigint, cfg: RingConfig): number {
  const mod = ringModulus(cfg);
  const signed = u >= mod >> 1n ? u - mod : u;
  return Number(signed) / 2 ** cfg.fracBits;
}

export function quantizeArray(vals: number[], cfg: RingConfig): BigUint64Array {
  const out = new BigUint64Array(vals.length);
  for (let i = 0; i < vals.length; i++) out[i] = quantize(vals[i], cfg);
  return out;
}

/** Largest |original - dequantized| over an array, in real units. */
export function maxQuantError(vals: number[], cfg: RingConfig): number {
  let worst = 0;
  for (const v of vals) {
    const err = Math.abs(v - dequantize(quantize(v, cfg), cfg));
    if (err > worst) worst = err;
  }
  return worst;
}
