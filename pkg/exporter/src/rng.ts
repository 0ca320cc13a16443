/** Deterministic RNG: identical sequences on every platform and run. */

export class Rng {
  private state: number
  private spare: number | null = null

  constructor(seed: number) {
    this.state = seed >>> 0
  }

  /** mulberry32 */
  next(): number {
    this.state = (this.state + 0x6d2b79f5) >>> 0
    let t = this.state
    t = Math.imul(t ^ (t >>> 15), t | 1)
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61)
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }

  int(maxExclusive: number): number {
    return Math.floor(this.next() * maxExclusive)
  }

  /** standard normal via Box-Muller, with the spare cached */
  gauss(): number {
    if (this.spare !== null) {
      const v = this.spare
      this.spare = null
      return v
    }
    let u = 0
    while (u === 0) u = this.next()
    const v = this.next()
    const r = Math.sqrt(-2 * Math.log(u))
    this.spare = r * Math.sin(2 * Math.PI * v)
    return r * Math.cos(2 * Math.PI * v)
  }

  gaussRow(dim: number): Float64Array {
    const row = new Float64Array(dim)
    for (let i = 0; i < dim; i++) row[i] = this.gauss()
    return row
  }
}

/** FNV-1a over UTF-8 bytes, for content-derived seeds. */
export function seedFromString(text: string): number {
  const bytes = Buffer.from(text, 'utf-8')
  let h = 0x811c9dc5
  for (let i = 0; i < bytes.length; i++) {
    h ^= bytes[i]
    h = Math.imul(h, 0x01000193)
  }
  return h >>> 0
}

export function seedFromBytes(bytes: Uint8Array, extra = 0): number {
  let h = (0x811c9dc5 ^ extra) >>> 0
  for (let i = 0; i < bytes.length; i++) {
    h ^= bytes[i]
    h = Math.imul(h, 0x01000193)
  }
  return h >>> 0
}
