/**
 * Random sub-cropping from transport crops to the training size. The server
 * ships oversized crops (96^3 by default) precisely so each one yields many
 * distinct training crops (64^3) on the consumer side.
 */

import { Rng, randInt } from './rng.js';

export interface SubCrop {
  /** C-order h^3 voxels (h = requested edge). */
  data: Float32Array;
  offsets: [number, number, number];
}

/**
 * Cut an h-cube at a uniformly random corner; each offset is drawn from
 * [0, dim - h] inclusive, per axis.
 */
export function subCrop(
  payload: Float32Array,
  dims: [number, number, number],
  h: number,
  rng: Rng,
): SubCrop {
  const [n0, n1, n2] = dims;
  if (payload.length !== n0 * n1 * n2) {
    throw new RangeError(`payload holds ${payload.length} voxels, dims need ${n0 * n1 * n2}`);
  }
  if (!Number.isInteger(h) || h < 1 || h > n0 || h > n1 || h > n2) {
    throw new RangeError(`crop size ${h} does not fit dims ${dims.join('x')}`);
  }
  const offsets: [number, number, number] = [
    randInt(rng, n0 - h),
    randInt(rng, n1 - h),
    randInt(rng, n2 - h),
  ];
  const data = new Float32Array(h * h * h);
  let out = 0;
  for (let x = 0; x < h; x++) {
    for (let y = 0; y < h; y++) {
      // innermost axis is contiguous: copy whole z-runs
      const src = ((offsets[0] + x) * n1 + offsets[1] + y) * n2 + offsets[2];
      data.set(payload.subarray(src, src + h), out);
      out += h;
    }
  }
  return { data, offsets };
}
