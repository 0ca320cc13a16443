/**
 * Embedding file format shared with the Python toolkit.
 *
 * Layout (little-endian): magic "NEGSPC01" (8 bytes), version u16, dtype u8
 * (0 = float32), rows u64, dim u32, float32 row-major payload, CRC32 of the
 * payload as a trailing u32.
 */

import { renameSync, writeFileSync, readFileSync } from 'node:fs'

export const MAGIC = 'NEGSPC01'
export const VERSION = 1
export const DTYPE_FLOAT32 = 0
const HEADER_SIZE = 8 + 2 + 1 + 8 + 4

const CRC_TABLE = new Uint32Array(256)
for (let n = 0; n < 256; n++) {
  let c = n
  for (let k = 0; k < 8; k++) {
    c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1
  }
  CRC_TABLE[n] = c >>> 0
}

export function crc32(data: Uint8Array): number {
  let c = 0xffffffff
  for (let i = 0; i < data.length; i++) {
    c = CRC_TABLE[(c ^ data[i]) & 0xff] ^ (c >>> 8)
  }
  return (c ^ 0xffffffff) >>> 0
}

export interface EmbeddingData {
  rows: number
  dim: number
  /** row-major, rows * dim values */
  data: Float32Array
}

export function encodeEmbeddingFile(emb: EmbeddingData): Buffer {
  const { rows, dim, data } = emb
  if (data.length !== rows * dim) {
    throw new Error(`payload has ${data.length} values, expected ${rows * dim}`)
  }
  for (let i = 0; i < data.length; i++) {
    if (!Number.isFinite(data[i])) {
      throw new Error(`non-finite value at flat index ${i}`)
    }
  }
  const payload = Buffer.alloc(rows * dim * 4)
  for (let i = 0; i < data.length; i++) {
    payload.writeFloatLE(data[i], i * 4)
  }
  const header = Buffer.alloc(HEADER_SIZE)
  header.write(MAGIC, 0, 'ascii')
  header.writeUInt16LE(VERSION, 8)
  header.writeUInt8(DTYPE_FLOAT32, 10)
  header.writeBigUInt64LE(BigInt(rows), 11)
  header.writeUInt32LE(dim, 19)
  const crc = Buffer.alloc(4)
  crc.writeUInt32LE(crc32(payload), 0)
  return Buffer.concat([header, payload, crc])
}

export function decodeEmbeddingFile(blob: Buffer): EmbeddingData {
  if (blob.length < HEADER_SIZE + 4) {
    throw new Error('file too short for header')
  }
  if (blob.toString('ascii', 0, 8) !== MAGIC) {
    throw new Error(`bad magic ${blob.toString('ascii', 0, 8)}`)
  }
  const version = blob.readUInt16LE(8)
  if (version !== VERSION) {
    throw new Error(`unsupported version ${version}`)
  }
  if (blob.readUInt8(10) !== DTYPE_FLOAT32) {
    throw new Error(`unknown dtype code ${blob.readUInt8(10)}`)
  }
  const rows = Number(blob.readBigUInt64LE(11))
  const dim = blob.readUInt32LE(19)
  const payloadLen = rows * dim * 4
  if (blob.length !== HEADER_SIZE + payloadLen + 4) {
    throw new Error(`expected ${HEADER_SIZE + payloadLen + 4} bytes, found ${blob.length}`)
  }
  const payload = blob.subarray(HEADER_SIZE, HEADER_SIZE + payloadLen)
  const stored = blob.readUInt32LE(HEADER_SIZE + payloadLen)
  if (crc32(payload) !== stored) {
    throw new Error('payload checksum mismatch')
  }
  const data = new Float32Array(rows * dim)
  for (let i = 0; i < data.length; i++) {
    data[i] = payload.readFloatLE(i * 4)
  }
  return { rows, dim, data }
}

/** Write atomically: temp file in place, then rename. */
export function writeEmbeddingFile(path: string, emb: EmbeddingData): void {
  const tmp = `${path}.tmp.${process.pid}`
  writeFileSync(tmp, encodeEmbeddingFile(emb))
  renameSync(tmp, path)
}

export function readEmbeddingFile(path: string): EmbeddingData {
  return decodeEmbeddingFile(readFileSync(path))
}

/** Stack unit-normalized rows into an EmbeddingData, rejecting zero rows. */
export function stackNormalized(rows: Float32Array[] | Float64Array[]): EmbeddingData {
  if (rows.length === 0) {
    throw new Error('no rows to write')
  }
  const dim = rows[0].length
  const data = new Float32Array(rows.length * dim)
  for (let r = 0; r < rows.length; r++) {
    const row = rows[r]
    if (row.length !== dim) {
      throw new Error(`row ${r} has dim ${row.length}, expected ${dim}`)
    }
    let norm = 0
    for (let j = 0; j < dim; j++) norm += row[j] * row[j]
    norm = Math.sqrt(norm)
    if (norm === 0) {
      throw new Error(`zero row at index ${r}`)
    }
    for (let j = 0; j < dim; j++) data[r * dim + j] = row[j] / norm
  }
  return { rows: rows.length, dim, data }
}
