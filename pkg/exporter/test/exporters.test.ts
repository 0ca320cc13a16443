import { mkdirSync, mkdtempSync, readFileSync, writeFileSync } from 'node:fs'
import { tmpdir } from 'node:os'
import { join } from 'node:path'
import { describe, expect, it } from 'vitest'

import { readEmbeddingFile } from '../src/embfile.js'
import { HashEncoder } from '../src/encoder.js'
import { exportCrops, exportImages, exportText, makeSynthetic } from '../src/exporters.js'
import { applyTemplate } from '../src/labels.js'
import { encodePpm } from '../src/ppm.js'
import { Rng } from '../src/rng.js'

const scratch = () => mkdtempSync(join(tmpdir(), 'exporter-'))

function rowNorms(emb: { rows: number; dim: number; data: Float32Array }): number[] {
  const norms: number[] = []
  for (let r = 0; r < emb.rows; r++) {
    let s = 0
    for (let j = 0; j < emb.dim; j++) s += emb.data[r * emb.dim + j] ** 2
    norms.push(Math.sqrt(s))
  }
  return norms
}

function writeTestPpm(path: string, seed: number, w = 24, h = 18): void {
  const rng = new Rng(seed)
  const data = new Uint8Array(w * h * 3)
  for (let i = 0; i < data.length; i++) data[i] = rng.int(256)
  writeFileSync(path, encodePpm({ width: w, height: h, data }))
}

describe('exportText', () => {
  it('writes one unit row per label in order', () => {
    const dir = scratch()
    const labels = join(dir, 'labels.txt')
    writeFileSync(labels, 'cat\ndog\nowl\n')
    const out = join(dir, 'text.emb')
    const emb = exportText({ labelsPath: labels, encoder: new HashEncoder(32), outPath: out })
    expect(emb.rows).toBe(3)
    expect(emb.dim).toBe(32)
    for (const n of rowNorms(readEmbeddingFile(out))) {
      expect(Math.abs(n - 1)).toBeLessThan(1e-3)
    }
  })

  it('is deterministic across runs', () => {
    const dir = scratch()
    const labels = join(dir, 'labels.txt')
    writeFileSync(labels, 'cat\ndog\n')
    const a = join(dir, 'a.emb')
    const b = join(dir, 'b.emb')
    exportText({ labelsPath: labels, encoder: new HashEncoder(16), outPath: a })
    exportText({ labelsPath: labels, encoder: new HashEncoder(16), outPath: b })
    expect(readFileSync(a).equals(readFileSync(b))).toBe(true)
  })

  it('template must have exactly one placeholder', () => {
    expect(() => applyTemplate('no placeholder', 'x')).toThrow(/placeholder/)
    expect(applyTemplate('a photo of a {}', 'dog')).toBe('a photo of a dog')
  })
})

describe('exportImages', () => {
  it('writes embeddings plus a row-to-source manifest', () => {
    const dir = scratch()
    const images = join(dir, 'imgs')
    mkdirSync(images)
    writeTestPpm(join(images, 'b.ppm'), 2)
    writeTestPpm(join(images, 'a.ppm'), 1)
    const out = join(dir, 'imgs.emb')
    const manifest = join(dir, 'imgs.json')
    const emb = exportImages({
      imageDir: images, encoder: new HashEncoder(24), outPath: out, manifestPath: manifest,
    })
    expect(emb.rows).toBe(2)
    const doc = JSON.parse(readFileSync(manifest, 'utf-8'))
    expect(doc.rows).toBe(2)
    expect(doc.files).toEqual(['a.ppm', 'b.ppm']) // sorted for determinism
  })
})

describe('exportCrops', () => {
  it('writes per-image crop files with class ids from directory names', () => {
    const dir = scratch()
    const images = join(dir, 'imgs')
    mkdirSync(join(images, '0'), { recursive: true })
    mkdirSync(join(images, '1'), { recursive: true })
    writeTestPpm(join(images, '0', 'x.ppm'), 3)
    writeTestPpm(join(images, '1', 'y.ppm'), 4)
    const outDir = join(dir, 'crops')
    const manifest = exportCrops({
      imageDir: images, cropsPerImage: 6, encoder: new HashEncoder(16), outDir, seed: 9,
    })
    expect(manifest).toHaveLength(2)
    expect(manifest[0].class_id).toBe(0)
    expect(manifest[1].class_id).toBe(1)
    for (const entry of manifest) {
      const emb = readEmbeddingFile(join(outDir, entry.file))
      expect(emb.rows).toBe(6)
      for (const n of rowNorms(emb)) expect(Math.abs(n - 1)).toBeLessThan(1e-3)
    }
  })

  it('reproduces identical bytes for the same seed', () => {
    const dir = scratch()
    const images = join(dir, 'imgs')
    mkdirSync(images)
    writeTestPpm(join(images, 'x.ppm'), 5)
    const run = (name: string) => {
      const outDir = join(dir, name)
      exportCrops({ imageDir: images, cropsPerImage: 4, encoder: new HashEncoder(8), outDir, seed: 1 })
      return readFileSync(join(outDir, 'x.crops.emb'))
    }
    expect(run('c1').equals(run('c2'))).toBe(true)
  })
})

describe('makeSynthetic', () => {
  it('produces byte-identical bundles for the same seed', () => {
    const dir = scratch()
    const p1 = makeSynthetic({ classes: 5, dim: 32, seed: 0, outDir: join(dir, 's1') })
    const p2 = makeSynthetic({ classes: 5, dim: 32, seed: 0, outDir: join(dir, 's2') })
    for (const key of Object.keys(p1)) {
      expect(readFileSync(p1[key]).equals(readFileSync(p2[key])), key).toBe(true)
    }
  })

  it('different seeds differ', () => {
    const dir = scratch()
    const p1 = makeSynthetic({ seed: 0, outDir: join(dir, 's1') })
    const p2 = makeSynthetic({ seed: 1, outDir: join(dir, 's2') })
    expect(readFileSync(p1.class_emb).equals(readFileSync(p2.class_emb))).toBe(false)
  })

  it('all embedding rows are unit norm and shapes line up', () => {
    const dir = scratch()
    const paths = makeSynthetic({
      classes: 3, dim: 16, samplesPerClass: 4, oodClusters: 2, seed: 2, outDir: dir,
    })
    const cls = readEmbeddingFile(paths.class_emb)
    expect(cls.rows).toBe(3)
    const ids = readEmbeddingFile(paths.id_emb)
    expect(ids.rows).toBe(12)
    for (const n of rowNorms(ids)) expect(Math.abs(n - 1)).toBeLessThan(1e-3)
    const labels = readFileSync(paths.id_labels, 'utf-8').trim().split('\n')
    expect(labels).toHaveLength(13) // header + one per row
  })
})
