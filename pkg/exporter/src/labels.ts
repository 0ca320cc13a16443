/** Label files in the toolkit's two formats: lines and jsonl. */

import { readFileSync } from 'node:fs'

export interface LabelEntry {
  text: string
  category?: string
}

export function readLabels(path: string, format: 'lines' | 'jsonl' = 'lines'): LabelEntry[] {
  const raw = readFileSync(path, 'utf-8')
  const entries: LabelEntry[] = []
  if (format === 'lines') {
    const lines = raw.split('\n')
    if (lines.length && lines[lines.length - 1] === '') lines.pop()
    for (const [i, text] of lines.entries()) {
      if (!text.trim()) throw new Error(`${path}:${i + 1}: blank label line`)
      entries.push({ text })
    }
  } else {
    for (const [i, line] of raw.split('\n').entries()) {
      if (!line.trim()) continue
      let obj: unknown
      try {
        obj = JSON.parse(line)
      } catch (err) {
        throw new Error(`${path}:${i + 1}: invalid JSON (${err})`)
      }
      const rec = obj as { text?: unknown; category?: unknown }
      if (typeof rec.text !== 'string') {
        throw new Error(`${path}:${i + 1}: expected object with a "text" string`)
      }
      entries.push({
        text: rec.text,
        ...(typeof rec.category === 'string' ? { category: rec.category } : {}),
      })
    }
  }
  if (entries.length === 0) throw new Error(`${path}: no labels`)
  const seen = new Map<string, number>()
  for (const [i, e] of entries.entries()) {
    const key = e.text.split(/\s+/).join(' ')
    const prev = seen.get(key)
    if (prev !== undefined) {
      throw new Error(`duplicate label "${e.text}" at lines ${prev + 1} and ${i + 1}`)
    }
    seen.set(key, i)
  }
  return entries
}

/** Substitute a "{}" template; the placeholder must occur exactly once. */
export function applyTemplate(template: string, text: string): string {
  const count = template.split('{}').length - 1
  if (count !== 1) {
    throw new Error(`template must contain exactly one "{}" placeholder: "${template}"`)
  }
  return template.replace('{}', text)
}
