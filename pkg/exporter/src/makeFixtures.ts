/**
 * Regenerates fixtures/ — small exporter outputs committed for the Python
 * side's round-trip acceptance check.  Run via `npm run make-fixtures`.
 */

import { mkdirSync, writeFileSync } from 'node:fs'
import { dirname, join } from 'node:path'
import { fileURLToPath } from 'node:url'

import { readEmbeddingFile } from './embfile.js'
import { HashEncoder } from './encoder.js'
import { exportText, makeSynthetic, writeJsonAtomic } from './exporters.js'

const here = dirname(fileURLToPath(import.meta.url))
const fixdir = join(here, '..', 'fixtures')
mkdirSync(fixdir, { recursive: true })

const labelsPath = join(fixdir, 'labels.txt')
writeFileSync(labelsPath, ['arctic fox', 'red panda', 'sea otter'].join('\n') + '\n')

const files: object[] = []

const textOut = join(fixdir, 'text.emb')
const textEmb = exportText({
  labelsPath,
  encoder: new HashEncoder(64),
  outPath: textOut,
})
files.push({ file: 'text.emb', rows: textEmb.rows, dim: textEmb.dim, normalized: true })

const synthPaths = makeSynthetic({
  classes: 4,
  dim: 24,
  samplesPerClass: 8,
  oodClusters: 2,
  seed: 7,
  outDir: join(fixdir, 'synthetic'),
})
for (const [key, path] of Object.entries(synthPaths)) {
  if (!path.endsWith('.emb')) continue
  const emb = readEmbeddingFile(path)
  files.push({
    file: join('synthetic', path.split('/').pop()!),
    rows: emb.rows,
    dim: emb.dim,
    normalized: true,
    source: key,
  })
}

writeJsonAtomic(join(fixdir, 'manifest.json'), { files })
console.log(`wrote ${files.length} fixture files under ${fixdir}`)
