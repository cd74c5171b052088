/**
 * Most-frequently-used-out sample cache, slot-compatible with the server's
 * reference implementation: insert on a full cache evicts the entry with the
 * highest use count (ties broken toward the oldest insertion), draws pick
 * distinct slots and bump their counts. Slot order, sequence numbers, and
 * eviction choices must match the reference exactly; the conformance test
 * replays a recorded trace against both.
 */

export class CacheEmpty extends Error {}

interface Entry<T> {
  sample: T;
  seq: number;
  count: number;
}

export class MfuCache<T> {
  readonly capacity: number;
  private entries: Entry<T>[] = [];
  private seq = 0;

  constructor(capacity: number) {
    if (!Number.isInteger(capacity) || capacity < 1) {
      throw new RangeError(`cache capacity must be >= 1, got ${capacity}`);
    }
    this.capacity = capacity;
  }

  get size(): number {
    return this.entries.length;
  }

  /** Insert one sample; returns the evicted sample, or null if there was room. */
  insert(sample: T): T | null {
    let evicted: T | null = null;
    if (this.entries.length >= this.capacity) {
      let victim = 0;
      for (let i = 1; i < this.entries.length; i++) {
        const a = this.entries[i];
        const b = this.entries[victim];
        if (a.count > b.count || (a.count === b.count && a.seq < b.seq)) victim = i;
      }
      evicted = this.entries.splice(victim, 1)[0].sample;
    }
    this.entries.push({ sample, seq: this.seq++, count: 0 });
    return evicted;
  }

  /** Draw by explicit slot indices (distinct, in range); bumps use counts. */
  draw(indices: number[]): T[] {
    const size = this.entries.length;
    if (size === 0) throw new CacheEmpty('cache holds no samples');
    if (indices.length < 1 || indices.length > size || new Set(indices).size !== indices.length) {
      throw new RangeError('indices must be distinct and within the cache size');
    }
    const out: T[] = [];
    for (const i of indices) {
      if (!Number.isInteger(i) || i < 0 || i >= size) throw new RangeError(`index ${i} out of range`);
      const entry = this.entries[i];
      entry.count += 1;
      out.push(entry.sample);
    }
    return out;
  }

  /** Uniform batch without replacement, driven by a [0,1) rng. */
  drawRandom(batchSize: number, rng: () => number): T[] {
    const size = this.entries.length;
    if (size === 0) throw new CacheEmpty('cache holds no samples');
    if (batchSize < 1 || batchSize > size) {
      throw new RangeError(`batch size ${batchSize} not in [1, ${size}]`);
    }
    const idx = Array.from({ length: size }, (_, i) => i);
    for (let i = 0; i < batchSize; i++) {
      const j = i + Math.floor(rng() * (size - i));
      [idx[i], idx[j]] = [idx[j], idx[i]];
    }
    return this.draw(idx.slice(0, batchSize));
  }

  /** (insertion seq, use count) per slot, in slot order; for inspection. */
  snapshot(): Array<[number, number]> {
    return this.entries.map((e) => [e.seq, e.count]);
  }
}

/** Counts drawn samples; every epochLength of them is one epoch. */
export class EpochCounter {
  readonly epochLength: number;
  count = 0;
  epochs = 0;
  private onEpoch?: (epoch: number) => void;

  constructor(epochLength: number, onEpoch?: (epoch: number) => void) {
    if (!Number.isInteger(epochLength) || epochLength < 1) {
      throw new RangeError(`epoch length must be >= 1, got ${epochLength}`);
    }
    this.epochLength = epochLength;
    this.onEpoch = onEpoch;
  }

  /** Record n drawn samples; returns how many epoch boundaries were crossed. */
  add(n = 1): number {
    if (n < 0) throw new RangeError('cannot add a negative sample count');
    const before = Math.floor(this.count / this.epochLength);
    this.count += n;
    const after = Math.floor(this.count / this.epochLength);
    const crossed = after - before;
    for (let e = this.epochs + 1; e <= this.epochs + crossed; e++) {
      this.onEpoch?.(e);
    }
    this.epochs += crossed;
    return crossed;
  }
}

export const DEFAULT_CACHE_CAPACITY = 8192;
export const DEFAULT_STAGING_CAPACITY = 256;
export const DEFAULT_EPOCH_LENGTH = 13_200;
