/**
 * Array-buffer bindings for the edgealign core.
 *
 * The two operations marshal contiguous typed arrays into the core's
 * binary container format, drive its command-line interface, and read the
 * results back, so external training loops can use label alignment and
 * the cross-entropy loss without touching files themselves. The bindings
 * hold no global state; every call passes its own configuration.
 */

import { spawnSync } from 'node:child_process';
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';

import { decodeContainer, encodeContainer } from './container.js';

export { decodeContainer, encodeContainer } from './container.js';
export type { DType, GridContainer } from './container.js';

export const version = '0.1.0';

export interface BatchShape {
  batch: number;
  classes: number;
  height: number;
  width: number;
}

export interface AlignOptions {
  mode?: 'iso' | 'bg-mrf';
  sigma?: number;
  sigmaX?: number;
  sigmaY?: number;
  lambda?: number;
  window?: number;
  assignSteps?: number;
  geodesicRadius?: number;
  fitRadius?: number;
  epsilon?: number;
}

export interface LossOptions {
  beta?: number;
  epsilon?: number;
}

export interface LossAndGrad {
  loss: number;
  perClass: number[];
  pixelCount: number;
  /** d(loss)/d(logit), shaped like the probability input. */
  grad: Float32Array;
}

function cliCommand(): string[] {
  const fromEnv = process.env.EDGEALIGN_CLI;
  if (fromEnv && fromEnv.trim().length > 0) {
    return fromEnv.trim().split(/\s+/);
  }
  return ['python3', '-m', 'edgealign.cli'];
}

function runCli(args: string[]): string {
  const [head, ...rest] = cliCommand();
  const proc = spawnSync(head as string, [...rest, ...args], {
    encoding: 'utf8',
    maxBuffer: 1 << 26,
  });
  if (proc.error) {
    throw new Error(`failed to launch the edgealign CLI: ${proc.error.message}`);
  }
  if (proc.status !== 0) {
    throw new Error(
      `edgealign CLI exited with ${proc.status}: ${proc.stderr.trim() || proc.stdout.trim()}`,
    );
  }
  return proc.stdout;
}

export function coreVersion(): string {
  return runCli(['--version']).trim();
}

function checkShape(shape: BatchShape): void {
  for (const key of ['batch', 'classes', 'height', 'width'] as const) {
    const value = shape[key];
    if (!Number.isInteger(value) || value < 1) {
      throw new Error(`shape.${key} must be a positive integer, got ${value}`);
    }
  }
}

function checkLengths(probs: Float32Array, labels: Uint32Array, shape: BatchShape): void {
  checkShape(shape);
  const probLen = shape.batch * shape.classes * shape.height * shape.width;
  const labelLen = shape.batch * shape.height * shape.width;
  if (probs.length !== probLen) {
    throw new Error(`probs has length ${probs.length}, expected batch*classes*height*width = ${probLen}`);
  }
  if (labels.length !== labelLen) {
    throw new Error(`labels has length ${labels.length}, expected batch*height*width = ${labelLen}`);
  }
}

function alignFlags(options: AlignOptions): string[] {
  const flags: string[] = [];
  const push = (flag: string, value: number | string | undefined) => {
    if (value !== undefined) flags.push(flag, String(value));
  };
  push('--mode', options.mode);
  push('--sigma', options.sigma);
  push('--sigma-x', options.sigmaX);
  push('--sigma-y', options.sigmaY);
  push('--lambda', options.lambda);
  push('--window', options.window);
  push('--assign-steps', options.assignSteps);
  push('--geodesic', options.geodesicRadius);
  push('--fit-radius', options.fitRadius);
  push('--epsilon', options.epsilon);
  return flags;
}

function withTempDir<T>(fn: (dir: string) => T): T {
  const dir = mkdtempSync(join(tmpdir(), 'edgealign-'));
  try {
    return fn(dir);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}

/**
 * Realign a batch of noisy label bitfields against per-class probabilities.
 *
 * `probs` is (batch, classes, height, width) row-major in [0, 1]; `labels`
 * is (batch, height, width) uint32 bitfields. Images are independent; the
 * result is bit-identical to running the CLI `align` on each image.
 */
export function alignBatch(
  probs: Float32Array,
  labels: Uint32Array,
  shape: BatchShape,
  options: AlignOptions = {},
): Uint32Array {
  checkLengths(probs, labels, shape);
  const { batch, classes, height, width } = shape;
  const probStride = classes * height * width;
  const labelStride = height * width;
  const out = new Uint32Array(labels.length);
  withTempDir((dir) => {
    for (let i = 0; i < batch; i += 1) {
      const probPath = join(dir, `p${i}.sebg`);
      const labelPath = join(dir, `l${i}.sebg`);
      const outPath = join(dir, `o${i}.sebg`);
      writeFileSync(probPath, encodeContainer({
        dtype: 'f32', height, width, planes: classes,
        data: probs.subarray(i * probStride, (i + 1) * probStride),
      }));
      writeFileSync(labelPath, encodeContainer({
        dtype: 'u32', height, width, planes: 1,
        data: labels.subarray(i * labelStride, (i + 1) * labelStride),
      }));
      runCli(['align', '--prob', probPath, '--labels', labelPath,
              '--out-labels', outPath, ...alignFlags(options)]);
      const refined = decodeContainer(readFileSync(outPath));
      if (refined.dtype !== 'u32' || refined.planes !== 1
          || refined.height !== height || refined.width !== width) {
        throw new Error(`unexpected refined label container for image ${i}`);
      }
      out.set(refined.data as Uint32Array, i * labelStride);
    }
  });
  return out;
}

/**
 * Summed sigmoid cross-entropy and its logit gradient for one image.
 *
 * `probs` is (classes, height, width) in [0, 1]; `labels` is a
 * (height, width) uint32 bitfield.
 */
export function lossAndGrad(
  probs: Float32Array,
  labels: Uint32Array,
  shape: Omit<BatchShape, 'batch'>,
  options: LossOptions = {},
): LossAndGrad {
  const full: BatchShape = { batch: 1, ...shape };
  checkLengths(probs, labels, full);
  return withTempDir((dir) => {
    const probPath = join(dir, 'p.sebg');
    const labelPath = join(dir, 'l.sebg');
    const gradPath = join(dir, 'g.sebg');
    writeFileSync(probPath, encodeContainer({
      dtype: 'f32', height: shape.height, width: shape.width,
      planes: shape.classes, data: probs,
    }));
    writeFileSync(labelPath, encodeContainer({
      dtype: 'u32', height: shape.height, width: shape.width, planes: 1, data: labels,
    }));
    const args = ['loss', '--prob', probPath, '--labels', labelPath,
                  '--out-grad', gradPath];
    if (options.beta !== undefined) args.push('--beta', String(options.beta));
    if (options.epsilon !== undefined) args.push('--epsilon', String(options.epsilon));
    const stdout = runCli(args);
    const doc = JSON.parse(stdout) as {
      total: number; per_class: number[]; pixel_count: number;
    };
    const grad = decodeContainer(readFileSync(gradPath));
    if (grad.dtype !== 'f32') {
      throw new Error('gradient container is not float32');
    }
    return {
      loss: doc.total,
      perClass: doc.per_class,
      pixelCount: doc.pixel_count,
      grad: grad.data as Float32Array,
    };
  });
}
