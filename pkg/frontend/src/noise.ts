/**
 * Deterministic noise image sets ("unit tests"): synthetic far-OOD folders
 * a detector is expected to reject almost entirely.  Every pixel derives
 * from (seed, kind, image index), so a fixed seed reproduces identical
 * PNG bytes.
 */

import * as fs from 'fs'
import * as path from 'path'
import { PNG } from 'pngjs'
import { CounterRng } from './rng'

export const NOISE_KINDS = [
  'black',
  'white',
  'uniform_color',
  'pixel_uniform',
  'gaussian',
  'blurred_gaussian',
] as const

export type NoiseKind = (typeof NOISE_KINDS)[number]

function clampByte(v: number): number {
  return Math.max(0, Math.min(255, Math.round(v)))
}

/** Separable box blur with the given radius, reflecting at the borders. */
function boxBlur(values: Float64Array, size: number, radius: number): Float64Array {
  const pass = (src: Float64Array, horizontal: boolean): Float64Array => {
    const out = new Float64Array(src.length)
    for (let y = 0; y < size; y++) {
      for (let x = 0; x < size; x++) {
        let acc = 0
        for (let k = -radius; k <= radius; k++) {
          let xx = horizontal ? x + k : x
          let yy = horizontal ? y : y + k
          if (xx < 0) xx = -xx
          if (yy < 0) yy = -yy
          if (xx >= size) xx = 2 * size - 2 - xx
          if (yy >= size) yy = 2 * size - 2 - yy
          acc += src[yy * size + xx]
        }
        out[y * size + x] = acc / (2 * radius + 1)
      }
    }
    return out
  }
  return pass(pass(values, true), false)
}

function kindSeedOffset(kind: NoiseKind): number {
  return NOISE_KINDS.indexOf(kind) * 1_000_003
}

/** RGB pixel buffer for one noise image (length 3 * resolution^2). */
export function noisePixels(
  kind: NoiseKind,
  index: number,
  resolution: number,
  seed: number,
): Uint8Array {
  const rng = new CounterRng(seed + kindSeedOffset(kind) + 7919 * index)
  const n = resolution * resolution
  const out = new Uint8Array(3 * n)
  switch (kind) {
    case 'black':
      break
    case 'white':
      out.fill(255)
      break
    case 'uniform_color': {
      const rgb = [rng.integer(256), rng.integer(256), rng.integer(256)]
      for (let i = 0; i < n; i++) {
        out[3 * i] = rgb[0]
        out[3 * i + 1] = rgb[1]
        out[3 * i + 2] = rgb[2]
      }
      break
    }
    case 'pixel_uniform':
      for (let i = 0; i < 3 * n; i++) out[i] = rng.integer(256)
      break
    case 'gaussian':
      for (let i = 0; i < 3 * n; i += 2) {
        const [z0, z1] = rng.normalPair()
        out[i] = clampByte(128 + 40 * z0)
        if (i + 1 < 3 * n) out[i + 1] = clampByte(128 + 40 * z1)
      }
      break
    case 'blurred_gaussian': {
      // low-variance noise, blurred per channel
      for (let c = 0; c < 3; c++) {
        const field = new Float64Array(n)
        for (let i = 0; i < n; i += 2) {
          const [z0, z1] = rng.normalPair()
          field[i] = z0
          if (i + 1 < n) field[i + 1] = z1
        }
        const blurred = boxBlur(field, resolution, Math.max(1, Math.floor(resolution / 8)))
        for (let i = 0; i < n; i++) out[3 * i + c] = clampByte(128 + 24 * blurred[i])
      }
      break
    }
  }
  return out
}

export function encodePng(pixels: Uint8Array, resolution: number): Buffer {
  const png = new PNG({ width: resolution, height: resolution })
  for (let i = 0; i < resolution * resolution; i++) {
    png.data[4 * i] = pixels[3 * i]
    png.data[4 * i + 1] = pixels[3 * i + 1]
    png.data[4 * i + 2] = pixels[3 * i + 2]
    png.data[4 * i + 3] = 255
  }
  return PNG.sync.write(png)
}

export interface NoiseConfig {
  outDir: string
  kinds: NoiseKind[]
  nPerKind: number
  resolution: number
  seed: number
}

/** Writes outDir/<kind>/<kind>_00000.png ... and returns the folder list. */
export function generateUnitTestImages(config: NoiseConfig): string[] {
  const folders: string[] = []
  for (const kind of config.kinds) {
    if (!NOISE_KINDS.includes(kind)) {
      throw new Error(`unknown noise kind '${kind}' (known: ${NOISE_KINDS.join(', ')})`)
    }
    const dir = path.join(config.outDir, kind)
    fs.mkdirSync(dir, { recursive: true })
    for (let i = 0; i < config.nPerKind; i++) {
      const pixels = noisePixels(kind, i, config.resolution, config.seed)
      const name = `${kind}_${String(i).padStart(5, '0')}.png`
      fs.writeFileSync(path.join(dir, name), encodePng(pixels, config.resolution))
    }
    folders.push(dir)
  }
  return folders
}
