#!/usr/bin/env node
/**
 * mahakit-export CLI
 *
 *   export    --model <model.json> --data-root <dir> --out <dir>
 *             [--resolution 32] [--batch 16]
 *   gen-noise --out <dir> [--kinds black,white,...] [--n 100] [--seed 0]
 *             [--resolution 32]
 */

import { exportBundle } from './export'
import { NOISE_KINDS, NoiseKind, generateUnitTestImages } from './noise'

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>()
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i]
    if (!key.startsWith('--') || i + 1 >= argv.length) {
      throw new Error(`malformed arguments near '${key}'`)
    }
    flags.set(key.slice(2), argv[i + 1])
  }
  return flags
}

function required(flags: Map<string, string>, name: string): string {
  const v = flags.get(name)
  if (v === undefined) throw new Error(`missing required flag --${name}`)
  return v
}

async function main(): Promise<number> {
  const [command, ...rest] = process.argv.slice(2)
  try {
    if (command === 'export') {
      const flags = parseFlags(rest)
      const summary = await exportBundle({
        model: required(flags, 'model'),
        dataRoot: required(flags, 'data-root'),
        outDir: required(flags, 'out'),
        resolution: parseInt(flags.get('resolution') ?? '32', 10),
        batchSize: parseInt(flags.get('batch') ?? '16', 10),
      })
      console.log(
        `exported ${summary.trainRows} train rows (d=${summary.featureDim}), ` +
          `ood sets [${summary.oodSets.join(', ')}] -> ${summary.manifestPath}`,
      )
      return 0
    }
    if (command === 'gen-noise') {
      const flags = parseFlags(rest)
      const kinds = (flags.get('kinds') ?? NOISE_KINDS.join(','))
        .split(',')
        .map((k) => k.trim())
        .filter((k) => k.length > 0) as NoiseKind[]
      const folders = generateUnitTestImages({
        outDir: required(flags, 'out'),
        kinds,
        nPerKind: parseInt(flags.get('n') ?? '100', 10),
        resolution: parseInt(flags.get('resolution') ?? '32', 10),
        seed: parseInt(flags.get('seed') ?? '0', 10),
      })
      console.log(`wrote ${folders.length} noise folders under ${required(flags, 'out')}`)
      return 0
    }
    console.error('usage: mahakit-export <export|gen-noise> [flags]')
    return 2
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`)
    return 1
  }
}

main().then((code) => process.exit(code))
