export {
  BadMagic,
  ChecksumMismatch,
  EQUATION_NAMES,
  FLAG_NORMALIZED,
  FormatError,
  FrameParser,
  HEAD_SIZE,
  INITIALIZER_COUNT,
  MAGIC,
  PDE_PARAM_COUNTS,
  ProtocolError,
  TAIL_SIZE,
  Truncated,
  VERSION,
  VersionMismatch,
  crc32,
  decodeFrame,
  decodeMessage,
  encodeFrame,
  icParamCount,
  pdeParamCount,
} from './protocol.js';
export type { DecodeResult, FrameSample } from './protocol.js';
export {
  CacheEmpty,
  DEFAULT_CACHE_CAPACITY,
  DEFAULT_EPOCH_LENGTH,
  DEFAULT_STAGING_CAPACITY,
  EpochCounter,
  MfuCache,
} from './mfu.js';
export { randInt, splitmix32 } from './rng.js';
export type { Rng } from './rng.js';
export { subCrop } from './crop.js';
export type { SubCrop } from './crop.js';
export { StreamClient, StreamClosed } from './client.js';
export type { BatchMeta, ClientBatch, ClientOptions } from './client.js';
