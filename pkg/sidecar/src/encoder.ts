/**
 * Deterministic contextual token encoder.
 *
 * Per-token base embeddings are derived from a hash of the token surface
 * mixed with the model seed, so any token string encodes identically across
 * processes and platforms (integer hashing + mulberry32, float64 math).
 * A causal normalize-mix recurrence produces contextual states; two seeded
 * affine projections map each state to start/end halves of dimension d/2.
 * The prefix vector q is the final contextual state (recorded in the model
 * fingerprint as layer=final). All outputs are rounded to float32 before
 * they leave the process.
 */

export interface ModelConfig {
  name: string;
  d: number;
  seed: number;
  alpha: number;
}

export function parseModelName(name: string): ModelConfig {
  // names look like "ctx-mean-64"; the trailing number is the dimension
  const match = /^ctx-mean-(\d+)$/.exec(name);
  if (!match) {
    throw new Error(`unknown model name: ${name} (expected ctx-mean-<d>)`);
  }
  const d = parseInt(match[1], 10);
  if (d <= 0 || d % 2 !== 0) {
    throw new Error(`model dimension must be positive and even, got ${d}`);
  }
  return { name, d, seed: 0x5eed + d, alpha: 0.5 };
}

export function fnv1a32(text: string): number {
  let hash = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193);
  }
  return hash >>> 0;
}

export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function uniformArray(rng: () => number, n: number): Float64Array {
  const out = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    out[i] = rng() * 0.2 - 0.1;
  }
  return out;
}

export class ContextEncoder {
  readonly config: ModelConfig;
  readonly d: number;
  readonly dt: number;
  readonly fingerprint: string;
  private readonly half: number;
  private readonly wStart: Float64Array; // d x d/2, row-major
  private readonly bStart: Float64Array;
  private readonly wEnd: Float64Array;
  private readonly bEnd: Float64Array;
  private readonly embeddings = new Map<string, Float64Array>();

  constructor(config: ModelConfig) {
    this.config = config;
    this.d = config.d;
    this.dt = config.d;
    this.half = config.d / 2;
    const rng = mulberry32((config.seed ^ 0xabcdef01) >>> 0);
    this.wStart = uniformArray(rng, this.d * this.half);
    this.bStart = uniformArray(rng, this.half);
    this.wEnd = uniformArray(rng, this.d * this.half);
    this.bEnd = uniformArray(rng, this.half);
    this.fingerprint = `${config.name}:d=${config.d}:seed=${config.seed}:layer=final`;
  }

  private embedding(surface: string): Float64Array {
    let vec = this.embeddings.get(surface);
    if (!vec) {
      const rng = mulberry32((fnv1a32(surface) ^ this.config.seed) >>> 0);
      vec = uniformArray(rng, this.d);
      this.embeddings.set(surface, vec);
    }
    return vec;
  }

  /** Contextual state after each token: c_t = normalize(a*e + (1-a)*c). */
  contextSeries(tokens: string[]): Float64Array[] {
    const alpha = this.config.alpha;
    let c = new Float64Array(this.d);
    const out: Float64Array[] = [];
    for (const token of tokens) {
      const e = this.embedding(token);
      const u = new Float64Array(this.d);
      let sq = 0;
      for (let j = 0; j < this.d; j++) {
        u[j] = alpha * e[j] + (1 - alpha) * c[j];
        sq += u[j] * u[j];
      }
      const norm = Math.sqrt(sq);
      if (norm > 0) {
        for (let j = 0; j < this.d; j++) {
          u[j] /= norm;
        }
      }
      c = u;
      out.push(c);
    }
    return out;
  }

  private project(ctx: Float64Array, w: Float64Array, b: Float64Array): number[] {
    const out = new Array<number>(this.half);
    for (let j = 0; j < this.half; j++) {
      let acc = b[j];
      for (let i = 0; i < this.d; i++) {
        acc += ctx[i] * w[i * this.half + j];
      }
      out[j] = Math.fround(acc);
    }
    return out;
  }

  encodeDocument(tokens: string[]): { start: number[][]; end: number[][] } {
    const series = this.contextSeries(tokens);
    return {
      start: series.map((c) => this.project(c, this.wStart, this.bStart)),
      end: series.map((c) => this.project(c, this.wEnd, this.bEnd)),
    };
  }

  encodePrefix(tokens: string[]): number[] {
    const series = this.contextSeries(tokens);
    const last = series[series.length - 1];
    return Array.from(last, (x) => Math.fround(x));
  }
}
