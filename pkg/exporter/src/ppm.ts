/**
 * Minimal raster support: binary PPM (P6, maxval 255) in, RGB crops out.
 * PPM keeps the exporter free of native image-decoding dependencies; most
 * tools can produce it (e.g. ImageMagick `convert photo.jpg photo.ppm`).
 */

import { readFileSync } from 'node:fs'

import { Rng } from './rng.js'

export interface RgbImage {
  width: number
  height: number
  /** RGB interleaved, 3 bytes per pixel */
  data: Uint8Array
}

export function decodePpm(blob: Buffer): RgbImage {
  if (blob.length < 2 || blob.toString('ascii', 0, 2) !== 'P6') {
    throw new Error('not a binary PPM (P6) file')
  }
  // header tokens: "P6", width, height, maxval, then one whitespace byte
  let pos = 2
  const tokens: string[] = []
  while (tokens.length < 3) {
    while (pos < blob.length && /\s/.test(String.fromCharCode(blob[pos]))) pos++
    if (blob[pos] === 0x23) { // '#' comment
      while (pos < blob.length && blob[pos] !== 0x0a) pos++
      continue
    }
    let start = pos
    while (pos < blob.length && !/\s/.test(String.fromCharCode(blob[pos]))) pos++
    tokens.push(blob.toString('ascii', start, pos))
  }
  pos++ // single whitespace after maxval
  const [width, height, maxval] = tokens.map(Number)
  if (!(width > 0 && height > 0)) throw new Error('bad PPM dimensions')
  if (maxval !== 255) throw new Error(`unsupported PPM maxval ${maxval}`)
  const expected = width * height * 3
  const data = blob.subarray(pos, pos + expected)
  if (data.length !== expected) throw new Error('truncated PPM payload')
  return { width, height, data: new Uint8Array(data) }
}

export function readPpm(path: string): RgbImage {
  return decodePpm(readFileSync(path))
}

export function encodePpm(img: RgbImage): Buffer {
  const header = Buffer.from(`P6\n${img.width} ${img.height}\n255\n`, 'ascii')
  return Buffer.concat([header, Buffer.from(img.data)])
}

export function cropRegion(img: RgbImage, x: number, y: number, w: number, h: number): RgbImage {
  const out = new Uint8Array(w * h * 3)
  for (let row = 0; row < h; row++) {
    const src = ((y + row) * img.width + x) * 3
    out.set(img.data.subarray(src, src + w * 3), row * w * 3)
  }
  return { width: w, height: h, data: out }
}

/** Random crop covering 30-90% of each side, like few-shot augmentation. */
export function randomCrop(img: RgbImage, rng: Rng): RgbImage {
  const w = Math.max(1, Math.floor(img.width * (0.3 + 0.6 * rng.next())))
  const h = Math.max(1, Math.floor(img.height * (0.3 + 0.6 * rng.next())))
  const x = rng.int(img.width - w + 1)
  const y = rng.int(img.height - h + 1)
  return cropRegion(img, x, y, w, h)
}
