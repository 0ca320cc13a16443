/** The four export operations: text, images, per-image crops, synthetic. */

import { mkdirSync, readdirSync, renameSync, statSync, writeFileSync } from 'node:fs'
import { join, relative } from 'node:path'

import { EmbeddingData, stackNormalized, writeEmbeddingFile } from './embfile.js'
import { Encoder } from './encoder.js'
import { applyTemplate, readLabels } from './labels.js'
import { randomCrop, readPpm } from './ppm.js'
import { Rng, seedFromString } from './rng.js'

export function writeJsonAtomic(path: string, doc: unknown): void {
  const tmp = `${path}.tmp.${process.pid}`
  writeFileSync(tmp, JSON.stringify(doc, null, 2) + '\n')
  renameSync(tmp, path)
}

export interface ExportTextOptions {
  labelsPath: string
  format?: 'lines' | 'jsonl'
  template?: string
  encoder: Encoder
  outPath: string
}

/** One unit-normalized row per label, in label order. */
export function exportText(options: ExportTextOptions): EmbeddingData {
  const { labelsPath, encoder, outPath } = options
  const template = options.template ?? 'a photo of a {}'
  const labels = readLabels(labelsPath, options.format ?? 'lines')
  const rows = labels.map(e => encoder.embedText(applyTemplate(template, e.text)))
  const emb = stackNormalized(rows)
  writeEmbeddingFile(outPath, emb)
  return emb
}

function listPpmFiles(dir: string): string[] {
  const out: string[] = []
  const walk = (d: string) => {
    for (const name of readdirSync(d).sort()) {
      const full = join(d, name)
      if (statSync(full).isDirectory()) walk(full)
      else if (name.toLowerCase().endsWith('.ppm')) out.push(full)
    }
  }
  walk(dir)
  if (out.length === 0) throw new Error(`no .ppm images under ${dir}`)
  return out
}

export interface ExportImagesOptions {
  imageDir: string
  encoder: Encoder
  outPath: string
  manifestPath: string
}

/** Embeds every .ppm under imageDir (sorted, recursive) plus a manifest
 * mapping row index to the source file. */
export function exportImages(options: ExportImagesOptions): EmbeddingData {
  const files = listPpmFiles(options.imageDir)
  const rows = files.map(f => options.encoder.embedImage(readPpm(f)))
  const emb = stackNormalized(rows)
  writeEmbeddingFile(options.outPath, emb)
  writeJsonAtomic(options.manifestPath, {
    rows: emb.rows,
    files: files.map(f => relative(options.imageDir, f)),
  })
  return emb
}

export interface ExportCropsOptions {
  imageDir: string
  cropsPerImage?: number
  encoder: Encoder
  outDir: string
  seed?: number
}

export interface CropManifestEntry {
  file: string
  source: string
  /** numeric when the image's parent directory is a class id */
  class_id?: number
  class?: string
}

/** Per image: cropsPerImage random crops embedded into one embedding file.
 * The crop RNG is seeded from the global seed and the image's relative
 * path, so exports are reproducible file by file. */
export function exportCrops(options: ExportCropsOptions): CropManifestEntry[] {
  const cropsPerImage = options.cropsPerImage ?? 256
  const seed = options.seed ?? 0
  const files = listPpmFiles(options.imageDir)
  mkdirSync(options.outDir, { recursive: true })
  const manifest: CropManifestEntry[] = []
  for (const file of files) {
    const rel = relative(options.imageDir, file)
    const img = readPpm(file)
    const rng = new Rng(seedFromString(`crops:${seed}:${rel}`))
    const rows: Float64Array[] = []
    for (let i = 0; i < cropsPerImage; i++) {
      rows.push(options.encoder.embedImage(randomCrop(img, rng)))
    }
    const outName = rel.replace(/[\\/]/g, '__').replace(/\.ppm$/i, '') + '.crops.emb'
    writeEmbeddingFile(join(options.outDir, outName), stackNormalized(rows))
    const entry: CropManifestEntry = { file: outName, source: rel }
    const parent = rel.split(/[\\/]/).slice(-2, -1)[0]
    if (parent !== undefined) {
      entry.class = parent
      if (/^\d+$/.test(parent)) entry.class_id = Number(parent)
    }
    manifest.push(entry)
  }
  writeJsonAtomic(join(options.outDir, 'manifest.json'), manifest)
  return manifest
}

export interface MakeSyntheticOptions {
  classes?: number
  dim?: number
  samplesPerClass?: number
  oodClusters?: number
  oodSamples?: number
  seed?: number
  outDir: string
}

/** Gaussian-cluster fixture bundle: class/image embedding files plus label
 * sidecars, all derived from one seed. */
export function makeSynthetic(options: MakeSyntheticOptions): Record<string, string> {
  const classes = options.classes ?? 5
  const dim = options.dim ?? 32
  const perClass = options.samplesPerClass ?? 20
  const oodClusters = options.oodClusters ?? 2
  const oodSamples = options.oodSamples ?? 40
  const seed = options.seed ?? 0
  if (dim < classes + oodClusters) {
    throw new Error('dim too small for distinct cluster directions')
  }
  mkdirSync(options.outDir, { recursive: true })
  const rng = new Rng(seedFromString(`synthetic:${seed}`))

  const direction = (): Float64Array => rng.gaussRow(dim)
  const classDirs = Array.from({ length: classes }, direction)
  const oodDirs = Array.from({ length: oodClusters }, direction)

  const jitter = (center: Float64Array, noise: number): Float64Array => {
    const row = new Float64Array(dim)
    for (let j = 0; j < dim; j++) row[j] = center[j] + noise * rng.gauss()
    return row
  }

  const idRows: Float64Array[] = []
  const idLabels: number[] = []
  for (let c = 0; c < classes; c++) {
    for (let s = 0; s < perClass; s++) {
      idRows.push(jitter(classDirs[c], 0.6))
      idLabels.push(c)
    }
  }
  const oodRows: Float64Array[] = []
  for (let k = 0; k < oodClusters; k++) {
    for (let s = 0; s < Math.floor(oodSamples / oodClusters); s++) {
      oodRows.push(jitter(oodDirs[k], 0.6))
    }
  }

  const paths: Record<string, string> = {
    class_emb: join(options.outDir, 'class.emb'),
    class_labels: join(options.outDir, 'class_labels.txt'),
    id_emb: join(options.outDir, 'id_samples.emb'),
    id_labels: join(options.outDir, 'id_labels.csv'),
    ood_emb: join(options.outDir, 'ood_samples.emb'),
  }
  writeEmbeddingFile(paths.class_emb, stackNormalized(classDirs))
  writeFileSync(
    paths.class_labels,
    Array.from({ length: classes }, (_, c) => `synthetic class ${c}`).join('\n') + '\n',
  )
  writeEmbeddingFile(paths.id_emb, stackNormalized(idRows))
  writeFileSync(
    paths.id_labels,
    'sample_id,class_id\n' + idLabels.map((c, i) => `${i},${c}`).join('\n') + '\n',
  )
  writeEmbeddingFile(paths.ood_emb, stackNormalized(oodRows))
  return paths
}
