/**
 * Bundle export: run a checkpoint over PNG dataset folders and write the
 * feature/label/logit arrays plus a manifest the mahakit evaluator
 * consumes directly.
 *
 * Dataset layout under the data root (class folders sorted by name define
 * the label ids; file order inside a folder is sorted path order):
 *
 *   <root>/train/<class>/*.png
 *   <root>/id_test/<class>/*.png      (optional)
 *   <root>/ood/<set-name>/*.png       (zero or more named sets)
 */

import * as fs from 'fs'
import * as path from 'path'
import { listClassFolders, listPngs, loadImage } from './images'
import { LoadedModel, extractFeatures, loadCheckpoint } from './model'
import * as npy from './npy'

export interface ExportConfig {
  /** path to the checkpoint's model.json */
  model: string
  dataRoot: string
  outDir: string
  resolution: number
  batchSize: number
}

export interface ExportSummary {
  manifestPath: string
  trainRows: number
  featureDim: number
  oodSets: string[]
}

interface LabeledSplit {
  features: Float32Array[]
  logits: Float32Array[]
  labels: number[]
}

function runLabeledSplit(
  loaded: LoadedModel,
  root: string,
  config: ExportConfig,
): LabeledSplit {
  const classes = listClassFolders(root)
  if (classes.length === 0) throw new Error(`${root}: no class folders`)
  const features: Float32Array[] = []
  const logits: Float32Array[] = []
  const labels: number[] = []
  classes.forEach((cls, classId) => {
    const files = listPngs(path.join(root, cls))
    if (files.length === 0) throw new Error(`${root}/${cls}: no PNG images`)
    const pixels = files.map((f) => loadImage(f, config.resolution))
    const out = extractFeatures(loaded, pixels, config.resolution, config.batchSize)
    features.push(...out.features)
    logits.push(...out.logits)
    labels.push(...files.map(() => classId))
  })
  return { features, logits, labels }
}

export async function exportBundle(config: ExportConfig): Promise<ExportSummary> {
  const loaded = await loadCheckpoint(config.model)
  fs.mkdirSync(config.outDir, { recursive: true })
  const d = loaded.featureDim
  const write = (name: string, rows: Float32Array[], dim: number) =>
    npy.writeMatrixF4(path.join(config.outDir, name), rows, dim)

  const train = runLabeledSplit(loaded, path.join(config.dataRoot, 'train'), config)
  write('train_features.npy', train.features, d)
  write('train_logits.npy', train.logits, loaded.nClasses)
  npy.writeLabelsI8(path.join(config.outDir, 'train_labels.npy'), train.labels)

  const manifest: Record<string, unknown> = {
    format_version: 1,
    train_features: 'train_features.npy',
    train_labels: 'train_labels.npy',
    train_logits: 'train_logits.npy',
    head_w: 'head_w.npy',
    head_b: 'head_b.npy',
    dtypes: { features: '<f4', labels: '<i8' },
    ood_sets: {} as Record<string, { features: string; logits: string }>,
  }

  const idTestRoot = path.join(config.dataRoot, 'id_test')
  if (fs.existsSync(idTestRoot)) {
    const idTest = runLabeledSplit(loaded, idTestRoot, config)
    write('id_test_features.npy', idTest.features, d)
    write('id_test_logits.npy', idTest.logits, loaded.nClasses)
    npy.writeLabelsI8(path.join(config.outDir, 'id_test_labels.npy'), idTest.labels)
    manifest.id_test_features = 'id_test_features.npy'
    manifest.id_test_labels = 'id_test_labels.npy'
    manifest.id_test_logits = 'id_test_logits.npy'
  } else {
    // the evaluator requires an ID test split; fall back to the train rows
    manifest.id_test_features = 'train_features.npy'
    manifest.id_test_labels = 'train_labels.npy'
    manifest.id_test_logits = 'train_logits.npy'
  }

  const oodRoot = path.join(config.dataRoot, 'ood')
  const oodSets: string[] = []
  if (fs.existsSync(oodRoot)) {
    for (const setName of listClassFolders(oodRoot)) {
      const files = listPngs(path.join(oodRoot, setName))
      if (files.length === 0) continue
      const pixels = files.map((f) => loadImage(f, config.resolution))
      const out = extractFeatures(loaded, pixels, config.resolution, config.batchSize)
      const featName = `ood_${setName}_features.npy`
      const logitName = `ood_${setName}_logits.npy`
      write(featName, out.features, d)
      write(logitName, out.logits, loaded.nClasses)
      ;(manifest.ood_sets as Record<string, unknown>)[setName] = {
        features: featName,
        logits: logitName,
      }
      oodSets.push(setName)
    }
  }

  const headWRows: Float32Array[] = []
  for (let c = 0; c < loaded.nClasses; c++) {
    headWRows.push(loaded.headW.slice(c * d, (c + 1) * d))
  }
  write('head_w.npy', headWRows, d)
  npy.writeNpy(path.join(config.outDir, 'head_b.npy'), {
    descr: '<f4',
    shape: [loaded.nClasses],
    data: loaded.headB,
  })

  manifest.provenance = {
    exporter: 'mahakit-exporter',
    model: config.model,
    resolution: config.resolution,
    feature_dim: d,
    n_classes: loaded.nClasses,
    feature_hook: 'input of the final Dense layer (post-pooling, pre-classifier)',
    ...(loaded.missingBias ? { note: 'checkpoint has no classifier bias; b written as zeros' } : {}),
  }

  const manifestPath = path.join(config.outDir, 'manifest.json')
  fs.writeFileSync(manifestPath, JSON.stringify(sortKeysDeep(manifest), null, 2) + '\n')
  return { manifestPath, trainRows: train.features.length, featureDim: d, oodSets }
}

function sortKeysDeep(value: unknown): unknown {
  if (Array.isArray(value)) return value.map(sortKeysDeep)
  if (value !== null && typeof value === 'object') {
    const out: Record<string, unknown> = {}
    for (const key of Object.keys(value as Record<string, unknown>).sort()) {
      out[key] = sortKeysDeep((value as Record<string, unknown>)[key])
    }
    return out
  }
  return value
}
