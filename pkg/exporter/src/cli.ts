#!/usr/bin/env node
/**
 * negspace-export: produce embedding files for the negspace toolkit.
 *
 * Subcommands:
 *   export-text     --labels FILE [--format lines|jsonl] [--template T]
 *                   --model ID --out FILE
 *   export-images   --image-dir DIR --model ID --out FILE --manifest FILE
 *   export-crops    --image-dir DIR [--crops-per-image N] [--seed N]
 *                   --model ID --out-dir DIR
 *   make-synthetic  [--classes N] [--dim N] [--samples N] [--ood-clusters N]
 *                   [--seed N] --out-dir DIR
 *
 * Model ids: hash:<dim> (deterministic, always available) or
 * tfjs:<path/to/model.json> (real pretrained image model).
 */

import { parseArgs } from 'node:util'

import { makeEncoder } from './encoder.js'
import { exportCrops, exportImages, exportText, makeSynthetic } from './exporters.js'

const USAGE = `usage: negspace-export <command> [options]

commands:
  export-text     --labels FILE [--format lines|jsonl] [--template T]
                  --model ID --out FILE
  export-images   --image-dir DIR --model ID --out FILE --manifest FILE
  export-crops    --image-dir DIR [--crops-per-image N] [--seed N]
                  --model ID --out-dir DIR
  make-synthetic  [--classes N] [--dim N] [--samples N] [--ood-clusters N]
                  [--seed N] --out-dir DIR

model ids: hash:<dim> (deterministic) or tfjs:<path/to/model.json>`

function usage(message?: string): never {
  if (message) console.error(`error: ${message}`)
  console.error(USAGE)
  process.exit(message ? 2 : 0)
}

function need(values: Record<string, unknown>, name: string): string {
  const v = values[name]
  if (typeof v !== 'string' || !v) usage(`missing required option --${name}`)
  return v
}

async function main(): Promise<void> {
  const [command, ...rest] = process.argv.slice(2)
  if (!command || command === '--help' || command === '-h') usage()

  const spec = {
    labels: { type: 'string' as const },
    format: { type: 'string' as const },
    template: { type: 'string' as const },
    model: { type: 'string' as const },
    out: { type: 'string' as const },
    'image-dir': { type: 'string' as const },
    manifest: { type: 'string' as const },
    'out-dir': { type: 'string' as const },
    'crops-per-image': { type: 'string' as const },
    classes: { type: 'string' as const },
    dim: { type: 'string' as const },
    samples: { type: 'string' as const },
    'ood-clusters': { type: 'string' as const },
    seed: { type: 'string' as const },
  }
  let values: Record<string, string | boolean | undefined>
  try {
    values = parseArgs({ args: rest, options: spec, strict: true }).values
  } catch (err) {
    usage(String(err instanceof Error ? err.message : err))
  }
  const num = (name: string, fallback: number): number => {
    const v = values[name]
    if (v === undefined) return fallback
    const n = Number(v)
    if (!Number.isFinite(n)) usage(`--${name} expects a number, got "${v}"`)
    return n
  }

  if (command === 'export-text') {
    const encoder = await makeEncoder(need(values, 'model'))
    const emb = exportText({
      labelsPath: need(values, 'labels'),
      format: (values.format as 'lines' | 'jsonl' | undefined) ?? 'lines',
      ...(values.template !== undefined ? { template: String(values.template) } : {}),
      encoder,
      outPath: need(values, 'out'),
    })
    console.log(`wrote ${values.out} (${emb.rows} rows x ${emb.dim})`)
  } else if (command === 'export-images') {
    const encoder = await makeEncoder(need(values, 'model'))
    const emb = exportImages({
      imageDir: need(values, 'image-dir'),
      encoder,
      outPath: need(values, 'out'),
      manifestPath: need(values, 'manifest'),
    })
    console.log(`wrote ${values.out} (${emb.rows} rows x ${emb.dim})`)
  } else if (command === 'export-crops') {
    const encoder = await makeEncoder(need(values, 'model'))
    const manifest = exportCrops({
      imageDir: need(values, 'image-dir'),
      cropsPerImage: num('crops-per-image', 256),
      encoder,
      outDir: need(values, 'out-dir'),
      seed: num('seed', 0),
    })
    console.log(`wrote ${manifest.length} per-image crop files under ${values['out-dir']}`)
  } else if (command === 'make-synthetic') {
    const paths = makeSynthetic({
      classes: num('classes', 5),
      dim: num('dim', 32),
      samplesPerClass: num('samples', 20),
      oodClusters: num('ood-clusters', 2),
      seed: num('seed', 0),
      outDir: need(values, 'out-dir'),
    })
    console.log(`wrote synthetic fixture: ${Object.values(paths).join(', ')}`)
  } else {
    usage(`unknown command "${command}"`)
  }
}

main().catch(err => {
  console.error(`error: ${err instanceof Error ? err.message : err}`)
  process.exit(1)
})
