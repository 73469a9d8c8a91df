/**
 * Counter-mode splitmix64 generator: the same stream the mahakit Python
 * toolkit uses, so seeds mean the same thing on both sides:
 *
 *   raw(i) = mix64(mix64(seed) + (i + 1) * GOLDEN)
 *
 * Uniforms take the top 53 bits; normals are Box-Muller on adjacent raws.
 */

const MASK = (1n << 64n) - 1n
const GOLDEN = 0x9e3779b97f4a7c15n
const MIX1 = 0xbf58476d1ce4e5b9n
const MIX2 = 0x94d049bb133111ebn
const INV53 = Math.pow(2, -53)

function mix64(x: bigint): bigint {
  x &= MASK
  x ^= x >> 30n
  x = (x * MIX1) & MASK
  x ^= x >> 27n
  x = (x * MIX2) & MASK
  x ^= x >> 31n
  return x
}

export class CounterRng {
  private base: bigint
  private counter: bigint

  constructor(seed: number | bigint) {
    this.base = mix64(BigInt(seed) & MASK)
    this.counter = 0n
  }

  private raw(): bigint {
    this.counter += 1n
    return mix64((this.base + this.counter * GOLDEN) & MASK)
  }

  /** Uniform double in [0, 1). */
  uniform(): number {
    return Number(this.raw() >> 11n) * INV53
  }

  /** Standard normal pair via Box-Muller on two adjacent raws. */
  normalPair(): [number, number] {
    const u1 = (Number(this.raw() >> 11n) + 1) * INV53
    const u2 = Number(this.raw() >> 11n) * INV53
    const r = Math.sqrt(-2 * Math.log(u1))
    const theta = 2 * Math.PI * u2
    return [r * Math.cos(theta), r * Math.sin(theta)]
  }

  /** Uniform integer in [0, n). */
  integer(n: number): number {
    return Math.min(n - 1, Math.floor(this.uniform() * n))
  }
}
