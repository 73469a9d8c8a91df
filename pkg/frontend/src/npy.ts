/**
 * Minimal NPY v1.0 writer/reader for the dtypes mahakit bundles use:
 * little-endian `<f4`, `<f8`, `<i8`, C order, 1-D or 2-D shapes.
 */

import * as fs from 'fs'

export type NpyDescr = '<f4' | '<f8' | '<i8'

const MAGIC = Buffer.from([0x93, 0x4e, 0x55, 0x4d, 0x50, 0x59]) // \x93NUMPY

export interface NpyArray {
  descr: NpyDescr
  shape: number[]
  data: Float32Array | Float64Array | BigInt64Array
}

function headerFor(descr: NpyDescr, shape: number[]): Buffer {
  const shapeRepr = shape.length === 1 ? `(${shape[0]},)` : `(${shape.join(', ')})`
  let header = `{'descr': '${descr}', 'fortran_order': False, 'shape': ${shapeRepr}, }`
  const unpadded = 10 + header.length + 1
  header += ' '.repeat((64 - (unpadded % 64)) % 64) + '\n'
  const len = Buffer.alloc(2)
  len.writeUInt16LE(header.length)
  return Buffer.concat([MAGIC, Buffer.from([1, 0]), len, Buffer.from(header, 'latin1')])
}

function payloadOf(arr: NpyArray): Buffer {
  const view =
    arr.data instanceof BigInt64Array
      ? Buffer.from(arr.data.buffer, arr.data.byteOffset, arr.data.byteLength)
      : Buffer.from(arr.data.buffer, arr.data.byteOffset, arr.data.byteLength)
  return view
}

export function writeNpy(path: string, arr: NpyArray): void {
  const count = arr.shape.reduce((a, b) => a * b, 1)
  if (count !== arr.data.length) {
    throw new Error(`shape ${JSON.stringify(arr.shape)} does not match length ${arr.data.length}`)
  }
  const tmp = `${path}.tmp.${process.pid}`
  fs.writeFileSync(tmp, Buffer.concat([headerFor(arr.descr, arr.shape), payloadOf(arr)]))
  fs.renameSync(tmp, path)
}

export function writeMatrixF4(path: string, rows: Float32Array[], dim: number): void {
  const out = new Float32Array(rows.length * dim)
  rows.forEach((row, i) => {
    if (row.length !== dim) throw new Error(`row ${i} has length ${row.length}, expected ${dim}`)
    out.set(row, i * dim)
  })
  writeNpy(path, { descr: '<f4', shape: [rows.length, dim], data: out })
}

export function writeLabelsI8(path: string, labels: number[]): void {
  writeNpy(path, {
    descr: '<i8',
    shape: [labels.length],
    data: BigInt64Array.from(labels.map((v) => BigInt(v))),
  })
}

export function readNpy(path: string): NpyArray {
  const blob = fs.readFileSync(path)
  if (blob.length < 10 || !blob.subarray(0, 6).equals(MAGIC)) {
    throw new Error(`${path}: not an NPY file`)
  }
  if (blob[6] !== 1 || blob[7] !== 0) {
    throw new Error(`${path}: unsupported NPY version ${blob[6]}.${blob[7]}`)
  }
  const hlen = blob.readUInt16LE(8)
  const header = blob.subarray(10, 10 + hlen).toString('latin1')
  const descrMatch = header.match(/'descr':\s*'([^']+)'/)
  const shapeMatch = header.match(/'shape':\s*\(([^)]*)\)/)
  const fortranMatch = header.match(/'fortran_order':\s*(True|False)/)
  if (!descrMatch || !shapeMatch || !fortranMatch) throw new Error(`${path}: malformed header`)
  if (fortranMatch[1] !== 'False') throw new Error(`${path}: fortran_order unsupported`)
  const descr = descrMatch[1] as NpyDescr
  const shape = shapeMatch[1]
    .split(',')
    .map((s) => s.trim())
    .filter((s) => s.length > 0)
    .map((s) => parseInt(s, 10))
  const count = shape.reduce((a, b) => a * b, 1)
  const start = 10 + hlen
  const body = blob.subarray(start)
  const copy = Buffer.from(body) // align for typed-array views
  let data: NpyArray['data']
  if (descr === '<f4') data = new Float32Array(copy.buffer, copy.byteOffset, count)
  else if (descr === '<f8') data = new Float64Array(copy.buffer, copy.byteOffset, count)
  else if (descr === '<i8') data = new BigInt64Array(copy.buffer, copy.byteOffset, count)
  else throw new Error(`${path}: unsupported dtype ${descr}`)
  return { descr, shape, data }
}
