/**
 * Client for the phasekit stdio compute service.
 *
 * The service is the published boundary of the Python package: one JSON
 * request per line on stdin, one JSON response per line on stdout, with
 * waveforms and gradients as base64 little-endian float64. This wrapper
 * exposes array-in/array-out calls for external training loops: register an
 * analysis configuration once, then request loss values with gradients, or
 * evaluation metrics, per utterance.
 *
 * Numerical contract: every value returned here is bit-identical to what the
 * Python library computes in-process. Reports travel as shortest round-trip
 * decimal (unambiguous for IEEE-754 doubles) and arrays as raw bytes.
 */

import { spawn, type ChildProcessByStdio } from 'node:child_process';
import type { Readable, Writable } from 'node:stream';
import { createInterface, type Interface } from 'node:readline';

import { decodeFloat64, encodeFloat64 } from './codec.js';

export interface StftSettings {
  fftSizes: number[];
  hops: number[];
  winLengths: number[];
  window?: 'hann' | 'rectangular';
}

export interface LossWeights {
  lambda0?: number;
  lambda1?: number;
  lambda2?: number;
  lambda_p?: number;
  lambda_pc?: number;
}

/** Flat loss record: l1, per-resolution sc_i / log_mag_i / pl_i / pcl_i,
 * their means, and the weighted total. */
export type LossRecord = Record<string, number>;

export interface LossResult {
  report: LossRecord;
  gradient: Float64Array;
}

/** Metric record; undefined metrics (no voiced frames, silent reference)
 * arrive as null. sdri is present only when a noisy reference was sent. */
export type MetricRecord = Record<string, number | null>;

export interface ClientOptions {
  /** Python interpreter to spawn (default: $PHASEKIT_PYTHON or "python3"). */
  python?: string;
  /** Extra environment entries for the child process. */
  env?: Record<string, string>;
}

export class PhasekitServiceError extends Error {
  constructor(
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = 'PhasekitServiceError';
  }
}

interface RawResponse {
  ok: boolean;
  code?: string;
  message?: string;
  [key: string]: unknown;
}

export class PhasekitClient {
  private child: ChildProcessByStdio<Writable, Readable, null>;
  private lines: Interface;
  private queue: Array<{
    resolve: (value: RawResponse) => void;
    reject: (err: Error) => void;
  }> = [];
  private closed = false;

  private constructor(child: ChildProcessByStdio<Writable, Readable, null>) {
    this.child = child;
    this.lines = createInterface({ input: child.stdout });
    this.lines.on('line', (line) => {
      const waiter = this.queue.shift();
      if (!waiter) return;
      try {
        waiter.resolve(JSON.parse(line) as RawResponse);
      } catch (err) {
        waiter.reject(err as Error);
      }
    });
    child.on('exit', () => {
      this.closed = true;
      for (const waiter of this.queue.splice(0)) {
        waiter.reject(new Error('phasekit service exited'));
      }
    });
  }

  /** Spawn the service and wait until it answers a ping. */
  static async start(options: ClientOptions = {}): Promise<PhasekitClient> {
    const python = options.python ?? process.env.PHASEKIT_PYTHON ?? 'python3';
    const child = spawn(python, ['-m', 'phasekit', 'serve'], {
      stdio: ['pipe', 'pipe', 'inherit'],
      env: { ...process.env, ...options.env },
    });
    const client = new PhasekitClient(child);
    const hello = await client.request({ op: 'ping' });
    if (hello.protocol !== 1) {
      await client.close();
      throw new Error(`unsupported service protocol: ${String(hello.protocol)}`);
    }
    return client;
  }

  private request(body: Record<string, unknown>): Promise<RawResponse> {
    if (this.closed) {
      return Promise.reject(new Error('client is closed'));
    }
    return new Promise((resolve, reject) => {
      this.queue.push({
        resolve: (resp) => {
          if (resp.ok) {
            resolve(resp);
          } else {
            reject(
              new PhasekitServiceError(
                (resp.code as string) ?? 'E_INTERNAL',
                (resp.message as string) ?? 'unknown service error',
              ),
            );
          }
        },
        reject,
      });
      this.child.stdin.write(JSON.stringify(body) + '\n');
    });
  }

  /** Register a multi-resolution analysis configuration; returns its id.
   * Ids are content-addressed, so repeated registration is idempotent. */
  async registerConfig(stft: StftSettings): Promise<string> {
    const resp = await this.request({
      op: 'register_config',
      stft: {
        fft_sizes: stft.fftSizes,
        hops: stft.hops,
        win_lengths: stft.winLengths,
        window: stft.window ?? 'hann',
      },
    });
    return resp.config_id as string;
  }

  /** Combined training criterion: itemized report plus the gradient with
   * respect to the enhanced waveform. */
  async totalLoss(
    target: Float64Array,
    enhanced: Float64Array,
    weights: LossWeights,
    configId: string,
    sampleRate: number,
    noisy?: Float64Array,
    plMode: 'wrapped' | 'noisy-diff' = 'wrapped',
  ): Promise<LossResult> {
    const body: Record<string, unknown> = {
      op: 'total_loss',
      config_id: configId,
      weights,
      sample_rate: sampleRate,
      target: encodeFloat64(target),
      enhanced: encodeFloat64(enhanced),
      pl_mode: plMode,
    };
    if (noisy) body.noisy = encodeFloat64(noisy);
    const resp = await this.request(body);
    return {
      report: resp.report as LossRecord,
      gradient: decodeFloat64(resp.gradient as string),
    };
  }

  /** Evaluation metrics for one utterance; include a noisy reference to get
   * the SDR-improvement column. */
  async metrics(
    clean: Float64Array,
    enhanced: Float64Array,
    sampleRate: number,
    noisy?: Float64Array,
  ): Promise<MetricRecord> {
    const body: Record<string, unknown> = {
      op: 'metrics',
      sample_rate: sampleRate,
      clean: encodeFloat64(clean),
      enhanced: encodeFloat64(enhanced),
    };
    if (noisy) body.noisy = encodeFloat64(noisy);
    const resp = await this.request(body);
    return resp.report as MetricRecord;
  }

  async close(): Promise<void> {
    if (this.closed) return;
    this.closed = true;
    const done = new Promise<void>((resolve) => {
      this.child.once('exit', () => resolve());
    });
    this.child.stdin.write(JSON.stringify({ op: 'shutdown' }) + '\n');
    this.child.stdin.end();
    await done;
  }
}

export { encodeFloat64, decodeFloat64 };
