/**
 * Client-local deterministic RNG (splitmix32). Crop offsets and batch draws
 * only need reproducibility under a seed, not agreement with the server's
 * generator, so a small fast mixer is enough.
 */

export type Rng = () => number;

/** Returns a function yielding floats in [0, 1). */
export function splitmix32(seed: number): Rng {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x9e3779b9) >>> 0;
    let z = state;
    z ^= z >>> 16;
    z = Math.imul(z, 0x21f0aaad);
    z ^= z >>> 15;
    z = Math.imul(z, 0x735a2d97);
    z ^= z >>> 15;
    return (z >>> 0) / 4294967296;
  };
}

/** Uniform integer in [0, maxInclusive]. */
export function randInt(rng: Rng, maxInclusive: number): number {
  return Math.floor(rng() * (maxInclusive + 1));
}
