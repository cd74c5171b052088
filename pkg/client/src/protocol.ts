/**
 * Wire codec for the pdeforge crop stream.
 *
 * One message per single-channel crop, little-endian throughout:
 *
 *   offset  size  field
 *   0       4     magic "TDPL"
 *   4       2     format version (1)
 *   6       2     flags (bit 0: payload rescaled to [-1, 1])
 *   8       1     equation id
 *   9       1     initializer id
 *   10      2     simulation resolution n
 *   12      2     run index within the parameter setup
 *   14      2     recorded frame index within the run
 *   16      1     channel index
 *   17      1     canonical flag
 *   18      1     param count P
 *   19      4*P   params, f32: equation coefficients then initializer values
 *   ..      6     crop dims (3 x u16)
 *   ..      1     payload dtype code (0 = f32)
 *   ..      4     payload length in bytes (u32)
 *   ..      4     CRC-32 of the payload (u32)
 *   ..      *     payload, C-order f32
 *
 * P is fixed by the id pair and is validated against it; params are f32 on
 * the wire, so a decode -> encode round trip is byte-exact.
 */

export const MAGIC = new Uint8Array([0x54, 0x44, 0x50, 0x4c]); // "TDPL"
export const VERSION = 1;
export const DTYPE_F32 = 0;
export const FLAG_NORMALIZED = 0x0001;

export const HEAD_SIZE = 19;
export const TAIL_SIZE = 15;

export class ProtocolError extends Error {}
export class BadMagic extends ProtocolError {}
export class VersionMismatch extends ProtocolError {}
export class Truncated extends ProtocolError {}
export class ChecksumMismatch extends ProtocolError {}
export class FormatError extends ProtocolError {}

export const EQUATION_NAMES = [
  'diffusion',
  'hyper-diffusion',
  'burgers',
  'kdv',
  'ks',
  'fisher-kpp',
  'swift-hohenberg',
] as const;

/** Equation coefficients on the wire, by equation id. */
export const PDE_PARAM_COUNTS = [1, 1, 1, 1, 0, 2, 1] as const;

export const INITIALIZER_COUNT = 14;

/** Initializer hyperparameters on the wire: none for white Gaussian (id 0). */
export function icParamCount(initializerId: number): number {
  if (initializerId === 0) return 0;
  if (initializerId >= 1 && initializerId < INITIALIZER_COUNT) return 3;
  throw new FormatError(`unknown initializer id ${initializerId}`);
}

export function pdeParamCount(equationId: number): number {
  const count = PDE_PARAM_COUNTS[equationId];
  if (count === undefined) throw new FormatError(`unknown equation id ${equationId}`);
  return count;
}

export interface FrameSample {
  /** C-order voxels, length dims[0]*dims[1]*dims[2]. */
  payload: Float32Array;
  dims: [number, number, number];
  equationId: number;
  initializerId: number;
  resolution: number;
  runIdx: number;
  frameIdx: number;
  channelIdx: number;
  canonical: boolean;
  normalized: boolean;
  pdeParams: number[];
  icParams: number[];
}

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    table[n] = c >>> 0;
  }
  return table;
})();

export function crc32(bytes: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < bytes.length; i++) {
    c = CRC_TABLE[(c ^ bytes[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

const PLATFORM_LE = new Uint8Array(new Uint16Array([1]).buffer)[0] === 1;

function swap32InPlace(bytes: Uint8Array): void {
  for (let i = 0; i + 3 < bytes.length; i += 4) {
    let t = bytes[i];
    bytes[i] = bytes[i + 3];
    bytes[i + 3] = t;
    t = bytes[i + 1];
    bytes[i + 1] = bytes[i + 2];
    bytes[i + 2] = t;
  }
}

/** Copy little-endian payload bytes into an aligned Float32Array. */
function payloadToF32(bytes: Uint8Array): Float32Array {
  // Explicit copy: Buffer#slice is a view, and socket buffers are pooled.
  const copy = new Uint8Array(bytes.length);
  copy.set(bytes);
  if (!PLATFORM_LE) swap32InPlace(copy);
  return new Float32Array(copy.buffer, 0, copy.length / 4);
}

function f32ToPayload(values: Float32Array): Uint8Array {
  const bytes = new Uint8Array(values.buffer.slice(values.byteOffset, values.byteOffset + values.byteLength));
  if (!PLATFORM_LE) swap32InPlace(bytes);
  return bytes;
}

export interface DecodeResult {
  sample: FrameSample;
  bytesRead: number;
}

/**
 * Decode one message starting at `offset`. Throws Truncated when the buffer
 * ends inside the message; a stream reader can retry after more bytes land.
 */
export function decodeFrame(buf: Uint8Array, offset = 0): DecodeResult {
  if (buf.length - offset < HEAD_SIZE) {
    throw new Truncated(`message shorter than fixed header (${buf.length - offset} bytes)`);
  }
  for (let i = 0; i < 4; i++) {
    if (buf[offset + i] !== MAGIC[i]) throw new BadMagic(`bad magic at offset ${offset}`);
  }
  const view = new DataView(buf.buffer, buf.byteOffset + offset);
  const version = view.getUint16(4, true);
  if (version !== VERSION) throw new VersionMismatch(`unsupported format version ${version}`);
  const flags = view.getUint16(6, true);
  const equationId = view.getUint8(8);
  const initializerId = view.getUint8(9);
  const resolution = view.getUint16(10, true);
  const runIdx = view.getUint16(12, true);
  const frameIdx = view.getUint16(14, true);
  const channelIdx = view.getUint8(16);
  const canonical = view.getUint8(17) !== 0;
  const nParams = view.getUint8(18);

  if (buf.length - offset < HEAD_SIZE + 4 * nParams + TAIL_SIZE) {
    throw new Truncated('message truncated inside params or dims');
  }
  const params: number[] = [];
  for (let i = 0; i < nParams; i++) {
    params.push(view.getFloat32(HEAD_SIZE + 4 * i, true));
  }
  let pos = HEAD_SIZE + 4 * nParams;
  const dims: [number, number, number] = [
    view.getUint16(pos, true),
    view.getUint16(pos + 2, true),
    view.getUint16(pos + 4, true),
  ];
  const dtypeCode = view.getUint8(pos + 6);
  const payloadLen = view.getUint32(pos + 7, true);
  const crc = view.getUint32(pos + 11, true);
  pos += TAIL_SIZE;

  if (dtypeCode !== DTYPE_F32) throw new FormatError(`unsupported payload dtype code ${dtypeCode}`);
  if (payloadLen !== 4 * dims[0] * dims[1] * dims[2]) {
    throw new FormatError(`payload length ${payloadLen} does not match dims ${dims.join('x')}`);
  }
  if (buf.length - offset < pos + payloadLen) {
    throw new Truncated(`payload truncated: expected ${payloadLen} bytes, have ${buf.length - offset - pos}`);
  }
  const payloadBytes = buf.subarray(offset + pos, offset + pos + payloadLen);
  if (crc32(payloadBytes) !== crc) throw new ChecksumMismatch('payload CRC-32 mismatch');

  const nPde = pdeParamCount(equationId);
  const nIc = icParamCount(initializerId);
  if (nParams !== nPde + nIc) {
    throw new FormatError(`param count ${nParams} does not match ids (${nPde}+${nIc})`);
  }
  return {
    sample: {
      payload: payloadToF32(payloadBytes),
      dims,
      equationId,
      initializerId,
      resolution,
      runIdx,
      frameIdx,
      channelIdx,
      canonical,
      normalized: (flags & FLAG_NORMALIZED) !== 0,
      pdeParams: params.slice(0, nPde),
      icParams: params.slice(nPde),
    },
    bytesRead: pos + payloadLen,
  };
}

/** Strict single-message decode: the buffer must hold exactly one message. */
export function decodeMessage(buf: Uint8Array): FrameSample {
  const { sample, bytesRead } = decodeFrame(buf);
  if (bytesRead !== buf.length) {
    throw new FormatError(`${buf.length - bytesRead} trailing bytes after payload`);
  }
  return sample;
}

function checkRange(name: string, value: number, limit: number): void {
  if (!Number.isInteger(value) || value < 0 || value > limit) {
    throw new FormatError(`${name} ${value} out of range`);
  }
}

export function encodeFrame(sample: FrameSample): Uint8Array {
  const nPde = pdeParamCount(sample.equationId);
  const nIc = icParamCount(sample.initializerId);
  if (sample.pdeParams.length !== nPde) {
    throw new FormatError(`expected ${nPde} equation coefficients, got ${sample.pdeParams.length}`);
  }
  if (sample.icParams.length !== nIc) {
    throw new FormatError(`expected ${nIc} initializer values, got ${sample.icParams.length}`);
  }
  for (const d of sample.dims) {
    if (!Number.isInteger(d) || d < 1 || d > 0xffff) {
      throw new FormatError(`crop dims out of range: ${sample.dims.join('x')}`);
    }
  }
  checkRange('resolution', sample.resolution, 0xffff);
  checkRange('run index', sample.runIdx, 0xffff);
  checkRange('frame index', sample.frameIdx, 0xffff);
  checkRange('channel index', sample.channelIdx, 0xff);
  const voxels = sample.dims[0] * sample.dims[1] * sample.dims[2];
  if (sample.payload.length !== voxels) {
    throw new FormatError(`payload holds ${sample.payload.length} voxels, dims need ${voxels}`);
  }

  const params = [...sample.pdeParams, ...sample.icParams];
  const payload = f32ToPayload(sample.payload);
  const total = HEAD_SIZE + 4 * params.length + TAIL_SIZE + payload.length;
  const out = new Uint8Array(total);
  out.set(MAGIC, 0);
  const view = new DataView(out.buffer);
  view.setUint16(4, VERSION, true);
  view.setUint16(6, sample.normalized ? FLAG_NORMALIZED : 0, true);
  view.setUint8(8, sample.equationId);
  view.setUint8(9, sample.initializerId);
  view.setUint16(10, sample.resolution, true);
  view.setUint16(12, sample.runIdx, true);
  view.setUint16(14, sample.frameIdx, true);
  view.setUint8(16, sample.channelIdx);
  view.setUint8(17, sample.canonical ? 1 : 0);
  view.setUint8(18, params.length);
  params.forEach((p, i) => view.setFloat32(HEAD_SIZE + 4 * i, p, true));
  let pos = HEAD_SIZE + 4 * params.length;
  view.setUint16(pos, sample.dims[0], true);
  view.setUint16(pos + 2, sample.dims[1], true);
  view.setUint16(pos + 4, sample.dims[2], true);
  view.setUint8(pos + 6, DTYPE_F32);
  view.setUint32(pos + 7, payload.length, true);
  view.setUint32(pos + 11, crc32(payload), true);
  out.set(payload, pos + TAIL_SIZE);
  return out;
}

/**
 * Incremental stream parser: feed it socket chunks, collect whole frames.
 * Malformed input throws on the push that exposes it.
 */
export class FrameParser {
  private buf: Uint8Array = new Uint8Array(0);

  /** Bytes buffered but not yet consumed; 0 means a clean message boundary. */
  get pending(): number {
    return this.buf.length;
  }

  push(chunk: Uint8Array): FrameSample[] {
    if (this.buf.length === 0) {
      this.buf = chunk;
    } else {
      const merged = new Uint8Array(this.buf.length + chunk.length);
      merged.set(this.buf, 0);
      merged.set(chunk, this.buf.length);
      this.buf = merged;
    }
    const frames: FrameSample[] = [];
    let offset = 0;
    for (;;) {
      try {
        const { sample, bytesRead } = decodeFrame(this.buf, offset);
        frames.push(sample);
        offset += bytesRead;
      } catch (err) {
        if (err instanceof Truncated) break; // wait for the next chunk
        throw err;
      }
    }
    if (offset > 0) this.buf = this.buf.subarray(offset);
    return frames;
  }
}
