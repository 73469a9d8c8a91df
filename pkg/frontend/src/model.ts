/**
 * Checkpoint I/O and feature/head extraction for TensorFlow.js layers
 * models.  Files use the standard tfjs layout (model.json + binary weight
 * shards), so checkpoints produced by tfjs-node or the converter load
 * as-is; resolution failures surface the underlying loader error.
 */

import * as fs from 'fs'
import * as path from 'path'
import * as tf from '@tensorflow/tfjs'

export interface LoadedModel {
  model: tf.LayersModel
  /** feature extractor: everything up to the classifier input */
  features: tf.LayersModel
  featureDim: number
  /** classifier weights, row-major (C, d) */
  headW: Float32Array
  headB: Float32Array
  nClasses: number
  missingBias: boolean
}

export async function saveModelToDir(model: tf.LayersModel, dir: string): Promise<void> {
  fs.mkdirSync(dir, { recursive: true })
  await model.save(
    tf.io.withSaveHandler(async (artifacts) => {
      const weightData = tf.io.CompositeArrayBuffer.join(artifacts.weightData!)
      fs.writeFileSync(path.join(dir, 'weights.bin'), Buffer.from(weightData))
      const manifest = {
        format: 'layers-model',
        generatedBy: 'mahakit-exporter',
        convertedBy: null,
        modelTopology: artifacts.modelTopology,
        weightsManifest: [{ paths: ['weights.bin'], weights: artifacts.weightSpecs }],
      }
      fs.writeFileSync(path.join(dir, 'model.json'), JSON.stringify(manifest))
      return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: 'JSON' } }
    }),
  )
}

async function loadLayersModel(modelJsonPath: string): Promise<tf.LayersModel> {
  const dir = path.dirname(modelJsonPath)
  const manifest = JSON.parse(fs.readFileSync(modelJsonPath, 'utf-8'))
  const weightSpecs: tf.io.WeightsManifestEntry[] = []
  const shards: Buffer[] = []
  for (const group of manifest.weightsManifest ?? []) {
    weightSpecs.push(...group.weights)
    for (const p of group.paths) shards.push(fs.readFileSync(path.join(dir, p)))
  }
  const weightData = Buffer.concat(shards)
  return tf.loadLayersModel(
    tf.io.fromMemory({
      modelTopology: manifest.modelTopology,
      weightSpecs,
      weightData: weightData.buffer.slice(
        weightData.byteOffset,
        weightData.byteOffset + weightData.byteLength,
      ),
    }),
  )
}

/**
 * Loads a checkpoint and splits it at the final Dense layer: its input is
 * the pre-logit feature activation, its kernel/bias the classifier head.
 */
export async function loadCheckpoint(modelJsonPath: string): Promise<LoadedModel> {
  const model = await loadLayersModel(modelJsonPath)
  const denseLayers = model.layers.filter((l) => l.getClassName() === 'Dense')
  if (denseLayers.length === 0) {
    throw new Error(`${modelJsonPath}: no Dense layer found to treat as the classifier`)
  }
  const classifier = denseLayers[denseLayers.length - 1]
  const features = tf.model({
    inputs: model.inputs,
    outputs: classifier.input as tf.SymbolicTensor,
  })

  const weights = classifier.getWeights()
  const kernel = weights[0] // (d, C)
  const [featureDim, nClasses] = kernel.shape as [number, number]
  const headW = (tf.transpose(kernel).dataSync() as Float32Array).slice()
  const missingBias = weights.length < 2
  const headB = missingBias
    ? new Float32Array(nClasses)
    : (weights[1].dataSync() as Float32Array).slice()
  return { model, features, featureDim, headW, headB, nClasses, missingBias }
}

export interface InferenceResult {
  features: Float32Array[]
  logits: Float32Array[]
}

/** Batched inference over [H*W*3] pixel rows; deterministic on the CPU backend. */
export function extractFeatures(
  loaded: LoadedModel,
  pixels: Float32Array[],
  resolution: number,
  batchSize: number,
): InferenceResult {
  const features: Float32Array[] = []
  const logits: Float32Array[] = []
  for (let start = 0; start < pixels.length; start += batchSize) {
    const batch = pixels.slice(start, start + batchSize)
    tf.tidy(() => {
      const flat = new Float32Array(batch.length * resolution * resolution * 3)
      batch.forEach((p, i) => flat.set(p, i * resolution * resolution * 3))
      const input = tf.tensor4d(flat, [batch.length, resolution, resolution, 3])
      const feats = loaded.features.predict(input) as tf.Tensor
      const outs = loaded.model.predict(input) as tf.Tensor
      const featData = feats.dataSync() as Float32Array
      const outData = outs.dataSync() as Float32Array
      const d = loaded.featureDim
      const c = loaded.nClasses
      for (let i = 0; i < batch.length; i++) {
        features.push(featData.slice(i * d, (i + 1) * d))
        logits.push(outData.slice(i * c, (i + 1) * c))
      }
    })
  }
  return { features, logits }
}
