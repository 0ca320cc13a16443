/**
 * Embedding backends behind one interface.
 *
 * Model ids:
 *   hash:<dim>        deterministic content-hash encoder; always available,
 *                     used for CI fixtures and format round-trips
 *   tfjs:<modelPath>  a TensorFlow.js graph model (image side only); use it
 *                     when a real pretrained vision model is available
 */

import { seedFromBytes, seedFromString, Rng } from './rng.js'
import { RgbImage } from './ppm.js'

export interface Encoder {
  readonly dim: number
  embedText(text: string): Float64Array
  embedImage(img: RgbImage): Float64Array
}

/** Deterministic pseudo-embeddings from content hashes. */
export class HashEncoder implements Encoder {
  constructor(readonly dim: number) {
    if (!(dim > 0)) throw new Error(`bad hash encoder dim ${dim}`)
  }

  private row(seed: number): Float64Array {
    return new Rng(seed).gaussRow(this.dim)
  }

  embedText(text: string): Float64Array {
    return this.row(seedFromString(`text:${this.dim}:${text}`))
  }

  embedImage(img: RgbImage): Float64Array {
    const seed = seedFromBytes(img.data, seedFromString(`image:${this.dim}:${img.width}x${img.height}`))
    return this.row(seed)
  }
}

/* Structural view of the tfjs API surface used below; the package itself is
 * an optional install, so its types are not compile-time dependencies. */
interface TfTensor {
  shape: number[]
  dataSync(): Float32Array
  dispose(): void
  toFloat(): TfTensor
  div(x: number): TfTensor
  expandDims(axis: number): TfTensor
}

interface TfModule {
  loadGraphModel(url: string): Promise<{ predict(input: TfTensor): TfTensor }>
  zeros(shape: number[]): TfTensor
  tensor3d(values: number[], shape: number[], dtype: string): TfTensor
  tidy<T>(fn: () => T): T
  image: { resizeBilinear(img: TfTensor, size: [number, number]): TfTensor }
}

/** Image encoder backed by a tfjs graph model; text is not supported. */
export class TfjsImageEncoder implements Encoder {
  private constructor(
    readonly dim: number,
    private tf: TfModule,
    private model: { predict(input: TfTensor): TfTensor },
    private inputSize: number,
  ) {}

  static async load(modelPath: string, inputSize = 224): Promise<TfjsImageEncoder> {
    let tf: TfModule
    try {
      tf = (await import('@tensorflow/tfjs' as string)) as unknown as TfModule
    } catch (err) {
      throw new Error(`@tensorflow/tfjs is not installed; install it to use tfjs models (${err})`)
    }
    const model = await tf.loadGraphModel(`file://${modelPath}`)
    const probe = tf.zeros([1, inputSize, inputSize, 3])
    const out = model.predict(probe)
    const dim = out.shape[out.shape.length - 1]
    out.dispose()
    probe.dispose()
    return new TfjsImageEncoder(dim, tf, model, inputSize)
  }

  embedText(): Float64Array {
    throw new Error('tfjs image models cannot embed text; use a text-capable model id')
  }

  embedImage(img: RgbImage): Float64Array {
    const tf = this.tf
    const out = tf.tidy(() => {
      const pixels = tf
        .tensor3d(Array.from(img.data), [img.height, img.width, 3], 'int32')
        .toFloat()
        .div(255)
      const resized = tf.image.resizeBilinear(pixels, [this.inputSize, this.inputSize])
      return this.model.predict(resized.expandDims(0))
    })
    const values = out.dataSync()
    out.dispose()
    return Float64Array.from(values)
  }
}

export async function makeEncoder(modelId: string): Promise<Encoder> {
  const [kind, ...rest] = modelId.split(':')
  const arg = rest.join(':')
  if (kind === 'hash') {
    const dim = Number(arg || '512')
    return new HashEncoder(dim)
  }
  if (kind === 'tfjs') {
    if (!arg) throw new Error('tfjs model id needs a path: tfjs:/path/to/model.json')
    return TfjsImageEncoder.load(arg)
  }
  throw new Error(`unknown model id "${modelId}" (expected hash:<dim> or tfjs:<path>)`)
}
