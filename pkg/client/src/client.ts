/**
 * Streaming consumer: socket -> decode -> bounded staging -> MFU cache ->
 * random batches. Reception runs on the socket's event loop; when staging
 * fills (the training loop is not draining fast enough) the socket is
 * paused, so backpressure propagates to the server through TCP. Batches are
 * drawn uniformly without replacement from the cache, optionally
 * sub-cropped, and returned as one packed array plus parallel metadata.
 */

import * as net from 'node:net';

import { subCrop } from './crop.js';
import {
  DEFAULT_CACHE_CAPACITY,
  DEFAULT_EPOCH_LENGTH,
  DEFAULT_STAGING_CAPACITY,
  EpochCounter,
  MfuCache,
} from './mfu.js';
import { EQUATION_NAMES, FormatError, FrameParser, FrameSample, ProtocolError, Truncated } from './protocol.js';
import { Rng, splitmix32 } from './rng.js';

/** The peer vanished or the stream ended before the request could be met. */
export class StreamClosed extends ProtocolError {}

export interface ClientOptions {
  stagingCapacity?: number;
  cacheCapacity?: number;
  epochLength?: number;
  /** Training crop edge; omit to pass transport crops through unchanged. */
  cropSize?: number;
  seed?: number;
  onEpoch?: (epoch: number) => void;
}

export interface BatchMeta {
  equationId: number;
  equationName: string;
  initializerId: number;
  resolution: number;
  runIdx: number;
  frameIdx: number;
  channelIdx: number;
  canonical: boolean;
  normalized: boolean;
  pdeParams: number[];
  icParams: number[];
  /** Sub-crop corner within the transport crop; null when passed through. */
  cropOffsets: [number, number, number] | null;
}

export interface ClientBatch {
  /** C-order, shape[0]*shape[2]^3 voxels. */
  data: Float32Array;
  shape: [number, number, number, number, number]; // B x 1 x h x h x h
  meta: BatchMeta[];
}

interface Waiter {
  batchSize: number;
  resolve: (batch: ClientBatch) => void;
  reject: (err: Error) => void;
}

export class StreamClient {
  received = 0;

  private socket: net.Socket;
  private parser = new FrameParser();
  private staging: FrameSample[] = [];
  private cache: MfuCache<FrameSample>;
  private epochCounter: EpochCounter;
  private rng: Rng;
  private stagingCapacity: number;
  private cropSize?: number;
  private waiters: Waiter[] = [];
  private failure: Error | null = null;
  private ended = false;
  private pumpScheduled = false;

  static connect(host: string, port: number, opts: ClientOptions = {}): Promise<StreamClient> {
    return new Promise((resolve, reject) => {
      const socket = net.createConnection({ host, port, noDelay: true });
      const onError = (err: Error) => reject(new StreamClosed(`cannot connect to ${host}:${port}: ${err.message}`));
      socket.once('error', onError);
      socket.once('connect', () => {
        socket.removeListener('error', onError);
        resolve(new StreamClient(socket, opts));
      });
    });
  }

  constructor(socket: net.Socket, opts: ClientOptions = {}) {
    this.socket = socket;
    this.stagingCapacity = opts.stagingCapacity ?? DEFAULT_STAGING_CAPACITY;
    this.cache = new MfuCache(opts.cacheCapacity ?? DEFAULT_CACHE_CAPACITY);
    this.epochCounter = new EpochCounter(opts.epochLength ?? DEFAULT_EPOCH_LENGTH, opts.onEpoch);
    this.rng = splitmix32(opts.seed ?? 0);
    this.cropSize = opts.cropSize;

    socket.on('data', (chunk: Buffer) => {
      let frames: FrameSample[];
      try {
        frames = this.parser.push(chunk);
      } catch (err) {
        this.fail(err as Error);
        return;
      }
      this.staging.push(...frames);
      if (this.staging.length >= this.stagingCapacity) this.socket.pause();
      this.schedulePump();
    });
    socket.on('error', (err: Error) => this.fail(new StreamClosed(`connection lost: ${err.message}`)));
    socket.on('close', () => {
      if (this.failure) return;
      if (this.parser.pending > 0) {
        this.fail(new Truncated('connection closed mid-message'));
        return;
      }
      this.ended = true;
      this.schedulePump();
    });
  }

  get cached(): number {
    return this.cache.size;
  }

  get drawn(): number {
    return this.epochCounter.count;
  }

  get epochs(): number {
    return this.epochCounter.epochs;
  }

  /**
   * Resolve once the cache can fill the batch. Requests are served in
   * arrival order; rejects if the stream dies first.
   */
  nextBatch(batchSize: number): Promise<ClientBatch> {
    return new Promise((resolve, reject) => {
      if (!Number.isInteger(batchSize) || batchSize < 1) {
        reject(new RangeError(`batch size must be >= 1, got ${batchSize}`));
        return;
      }
      if (this.failure) {
        reject(this.failure);
        return;
      }
      this.waiters.push({ batchSize, resolve, reject });
      this.schedulePump();
    });
  }

  close(): void {
    this.fail(new StreamClosed('client closed'));
    this.socket.destroy();
  }

  private fail(err: Error): void {
    if (this.failure) return;
    this.failure = err;
    this.socket.destroy();
    for (const w of this.waiters.splice(0)) w.reject(err);
  }

  private schedulePump(): void {
    if (this.pumpScheduled) return;
    this.pumpScheduled = true;
    setImmediate(() => {
      this.pumpScheduled = false;
      this.pump();
    });
  }

  private pump(): void {
    if (this.failure) return;
    while (this.staging.length > 0) {
      this.cache.insert(this.staging.shift()!); // evicted samples are gone for good
      this.received += 1;
    }
    if (this.socket.isPaused() && this.staging.length < this.stagingCapacity) this.socket.resume();

    while (this.waiters.length > 0 && this.cache.size >= this.waiters[0].batchSize) {
      const waiter = this.waiters.shift()!;
      try {
        waiter.resolve(this.assemble(this.cache.drawRandom(waiter.batchSize, this.rng)));
      } catch (err) {
        waiter.reject(err as Error);
      }
    }
    if (this.ended) {
      for (const w of this.waiters.splice(0)) {
        w.reject(new StreamClosed(`stream ended with ${this.cache.size} samples cached, needed ${w.batchSize}`));
      }
    }
  }

  private assemble(samples: FrameSample[]): ClientBatch {
    const h = this.cropSize ?? samples[0].dims[0];
    const meta: BatchMeta[] = [];
    const data = new Float32Array(samples.length * h * h * h);
    samples.forEach((sample, i) => {
      let voxels: Float32Array;
      let offsets: [number, number, number] | null = null;
      if (this.cropSize !== undefined) {
        const cut = subCrop(sample.payload, sample.dims, this.cropSize, this.rng);
        voxels = cut.data;
        offsets = cut.offsets;
      } else {
        if (sample.dims[0] !== h || sample.dims[1] !== h || sample.dims[2] !== h) {
          throw new FormatError(`batch mixes crop sizes: ${sample.dims.join('x')} vs ${h}^3`);
        }
        voxels = sample.payload;
      }
      data.set(voxels, i * h * h * h);
      meta.push({
        equationId: sample.equationId,
        equationName: EQUATION_NAMES[sample.equationId] ?? `equation-${sample.equationId}`,
        initializerId: sample.initializerId,
        resolution: sample.resolution,
        runIdx: sample.runIdx,
        frameIdx: sample.frameIdx,
        channelIdx: sample.channelIdx,
        canonical: sample.canonical,
        normalized: sample.normalized,
        pdeParams: sample.pdeParams,
        icParams: sample.icParams,
        cropOffsets: offsets,
      });
    });
    this.epochCounter.add(samples.length);
    return { data, shape: [samples.length, 1, h, h, h], meta };
  }
}
