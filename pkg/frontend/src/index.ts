export { CounterRng } from './rng'
export { writeNpy, readNpy, writeMatrixF4, writeLabelsI8 } from './npy'
export { NOISE_KINDS, generateUnitTestImages, noisePixels, encodePng } from './noise'
export { loadImage, listPngs, listClassFolders } from './images'
export { loadCheckpoint, saveModelToDir, extractFeatures } from './model'
export { exportBundle } from './export'
export type { ExportConfig, ExportSummary } from './export'
export type { NoiseKind, NoiseConfig } from './noise'
