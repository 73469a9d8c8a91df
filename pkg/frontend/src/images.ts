/** PNG dataset loading: decode, resize (nearest neighbor), scale to [0, 1]. */

import * as fs from 'fs'
import * as path from 'path'
import { PNG } from 'pngjs'

export function listPngs(dir: string): string[] {
  return fs
    .readdirSync(dir)
    .filter((f) => f.toLowerCase().endsWith('.png'))
    .sort()
    .map((f) => path.join(dir, f))
}

export function listClassFolders(root: string): string[] {
  return fs
    .readdirSync(root, { withFileTypes: true })
    .filter((e) => e.isDirectory())
    .map((e) => e.name)
    .sort()
}

/** Float32 CHW-free [H*W*3] pixel tensor data in [0, 1] at the target size. */
export function loadImage(file: string, resolution: number): Float32Array {
  const png = PNG.sync.read(fs.readFileSync(file))
  const out = new Float32Array(resolution * resolution * 3)
  for (let y = 0; y < resolution; y++) {
    const sy = Math.min(png.height - 1, Math.floor((y * png.height) / resolution))
    for (let x = 0; x < resolution; x++) {
      const sx = Math.min(png.width - 1, Math.floor((x * png.width) / resolution))
      const src = 4 * (sy * png.width + sx)
      const dst = 3 * (y * resolution + x)
      out[dst] = png.data[src] / 255
      out[dst + 1] = png.data[src + 1] / 255
      out[dst + 2] = png.data[src + 2] / 255
    }
  }
  return out
}
