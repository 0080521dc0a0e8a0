/**
 * Just enough reverse-mode autograd for the toy network: flat typed-array
 * storage, float64 accumulation, and a tape of backward closures.  Shapes
 * follow the engine's conventions (NCHW activations on an 8x8 board).
 *
 * Storage is float32 by default to match the engine's inference; the
 * gradient checker flips to float64 so finite differences are not drowned
 * by rounding noise.
 */

export type Vec = Float32Array | Float64Array;

let useF64 = false;

/** Storage precision for tensors created after the call. */
export function setPrecision(mode: "f32" | "f64"): void {
  useF64 = mode === "f64";
}

function alloc(size: number): Vec {
  return useF64 ? new Float64Array(size) : new Float32Array(size);
}

function scalar(value: number): Vec {
  const v = alloc(1);
  v[0] = value;
  return v;
}

export class Tensor {
  data: Vec;
  shape: number[];
  grad: Vec | null = null;

  constructor(shape: number[], data?: Vec, requiresGrad = false) {
    this.shape = shape;
    const size = shape.reduce((a, b) => a * b, 1);
    this.data = data ?? alloc(size);
    if (this.data.length !== size) {
      throw new Error(`shape ${shape} wants ${size} values, got ${this.data.length}`);
    }
    if (requiresGrad) this.grad = alloc(size);
  }

  get size(): number {
    return this.data.length;
  }

  zeroGrad(): void {
    if (this.grad) this.grad.fill(0);
  }
}

export function param(shape: number[], data?: Vec): Tensor {
  return new Tensor(shape, data, true);
}

/** Records backward closures in forward order; backward() runs them reversed. */
export class Tape {
  private ops: Array<() => void> = [];

  record(backward: () => void): void {
    this.ops.push(backward);
  }

  backward(): void {
    for (let i = this.ops.length - 1; i >= 0; i--) this.ops[i]();
    this.ops.length = 0;
  }
}

function needGrad(t: Tensor): boolean {
  return t.grad !== null;
}

function ensureGrad(t: Tensor): Vec {
  if (!t.grad) t.grad = alloc(t.size);
  return t.grad;
}

/**
 * 3x3 same-padding cross-correlation: x [N,C,8,8] * w [O,C,3,3] + b [O]
 * -> [N,O,8,8].  The forward loop walks nonzero input cells and scatters,
 * which makes the sparse synopsis planes cheap; sums accumulate in float64
 * scratch before a single rounding store.
 */
export function conv3x3(tape: Tape, x: Tensor, w: Tensor, b: Tensor): Tensor {
  const [n, c] = [x.shape[0], x.shape[1]];
  const o = w.shape[0];
  const out = new Tensor([n, o, 8, 8], undefined, true);
  const xd = x.data, wd = w.data, od = out.data;
  const scratch = new Float64Array(o * 64);
  for (let ni = 0; ni < n; ni++) {
    scratch.fill(0);
    for (let ci = 0; ci < c; ci++) {
      const xBase = (ni * c + ci) * 64;
      for (let cell = 0; cell < 64; cell++) {
        const xv = xd[xBase + cell];
        if (xv === 0) continue;
        const rr = cell >> 3, ff = cell & 7;
        for (let i = 0; i < 3; i++) {
          const r = rr - i + 1;
          if (r < 0 || r > 7) continue;
          for (let j = 0; j < 3; j++) {
            const f = ff - j + 1;
            if (f < 0 || f > 7) continue;
            const pos = r * 8 + f;
            const tap = ci * 9 + i * 3 + j;
            for (let oi = 0; oi < o; oi++) {
              scratch[oi * 64 + pos] += wd[oi * c * 9 + tap] * xv;
            }
          }
        }
      }
    }
    for (let oi = 0; oi < o; oi++) {
      const bias = b.data[oi];
      for (let pos = 0; pos < 64; pos++) {
        od[(ni * o + oi) * 64 + pos] = scratch[oi * 64 + pos] + bias;
      }
    }
  }
  tape.record(() => {
    const go = out.grad!;
    const gw = needGrad(w) ? ensureGrad(w) : null;
    const gb = needGrad(b) ? ensureGrad(b) : null;
    const gx = needGrad(x) ? ensureGrad(x) : null;
    if (gb) {
      for (let ni = 0; ni < n; ni++) {
        for (let oi = 0; oi < o; oi++) {
          let acc = 0;
          for (let pos = 0; pos < 64; pos++) acc += go[(ni * o + oi) * 64 + pos];
          gb[oi] += acc;
        }
      }
    }
    if (gw) {
      // dW[o,c,i,j] = sum over x[.,c,rr,ff] * dy[.,o,rr-i+1,ff-j+1].
      for (let ni = 0; ni < n; ni++) {
        for (let ci = 0; ci < c; ci++) {
          const xBase = (ni * c + ci) * 64;
          for (let cell = 0; cell < 64; cell++) {
            const xv = xd[xBase + cell];
            if (xv === 0) continue;
            const rr = cell >> 3, ff = cell & 7;
            for (let i = 0; i < 3; i++) {
              const r = rr - i + 1;
              if (r < 0 || r > 7) continue;
              for (let j = 0; j < 3; j++) {
                const f = ff - j + 1;
                if (f < 0 || f > 7) continue;
                const pos = r * 8 + f;
                const tap = ci * 9 + i * 3 + j;
                for (let oi = 0; oi < o; oi++) {
                  gw[oi * c * 9 + tap] += xv * go[(ni * o + oi) * 64 + pos];
                }
              }
            }
          }
        }
      }
    }
    if (gx) {
      // dX[n,c,r+i-1,f+j-1] accumulates w[o,c,i,j] * dy[n,o,r,f].
      for (let ni = 0; ni < n; ni++) {
        for (let oi = 0; oi < o; oi++) {
          for (let pos = 0; pos < 64; pos++) {
            const g = go[(ni * o + oi) * 64 + pos];
            if (g === 0) continue;
            const r = pos >> 3, f = pos & 7;
            for (let i = 0; i < 3; i++) {
              const rr = r + i - 1;
              if (rr < 0 || rr > 7) continue;
              for (let j = 0; j < 3; j++) {
                const ff = f + j - 1;
                if (ff < 0 || ff > 7) continue;
                for (let ci = 0; ci < c; ci++) {
                  gx[(ni * c + ci) * 64 + rr * 8 + ff] +=
                    g * wd[(oi * c + ci) * 9 + i * 3 + j];
                }
              }
            }
          }
        }
      }
    }
  });
  return out;
}

/** 1x1 convolution: x [N,C,8,8] * w [O,C,...] + b [O] -> [N,O,8,8]. */
export function conv1x1(tape: Tape, x: Tensor, w: Tensor, b: Tensor): Tensor {
  const [n, c] = [x.shape[0], x.shape[1]];
  const o = w.shape[0];
  const out = new Tensor([n, o, 8, 8], undefined, true);
  const xd = x.data, wd = w.data, od = out.data;
  for (let ni = 0; ni < n; ni++) {
    for (let oi = 0; oi < o; oi++) {
      const bias = b.data[oi];
      for (let sq = 0; sq < 64; sq++) {
        let acc = bias;
        for (let ci = 0; ci < c; ci++) {
          acc += wd[oi * c + ci] * xd[(ni * c + ci) * 64 + sq];
        }
        od[(ni * o + oi) * 64 + sq] = acc;
      }
    }
  }
  tape.record(() => {
    const go = out.grad!;
    const gw = needGrad(w) ? ensureGrad(w) : null;
    const gb = needGrad(b) ? ensureGrad(b) : null;
    const gx = needGrad(x) ? ensureGrad(x) : null;
    for (let ni = 0; ni < n; ni++) {
      for (let oi = 0; oi < o; oi++) {
        for (let sq = 0; sq < 64; sq++) {
          const g = go[(ni * o + oi) * 64 + sq];
          if (g === 0) continue;
          if (gb) gb[oi] += g;
          for (let ci = 0; ci < c; ci++) {
            if (gw) gw[oi * c + ci] += g * xd[(ni * c + ci) * 64 + sq];
            if (gx) gx[(ni * c + ci) * 64 + sq] += g * wd[oi * c + ci];
          }
        }
      }
    }
  });
  return out;
}

export function relu(tape: Tape, x: Tensor): Tensor {
  const out = new Tensor(x.shape, undefined, true);
  for (let i = 0; i < x.size; i++) out.data[i] = Math.max(x.data[i], 0);
  tape.record(() => {
    if (!needGrad(x)) return;
    const gx = ensureGrad(x);
    for (let i = 0; i < x.size; i++) {
      if (x.data[i] > 0) gx[i] += out.grad![i];
    }
  });
  return out;
}

export function add(tape: Tape, a: Tensor, b: Tensor): Tensor {
  const out = new Tensor(a.shape, undefined, true);
  for (let i = 0; i < a.size; i++) out.data[i] = a.data[i] + b.data[i];
  tape.record(() => {
    for (const t of [a, b]) {
      if (!needGrad(t)) continue;
      const g = ensureGrad(t);
      for (let i = 0; i < t.size; i++) g[i] += out.grad![i];
    }
  });
  return out;
}

/** Spatial mean: [N,C,8,8] -> [N,C]. */
export function meanSpatial(tape: Tape, x: Tensor): Tensor {
  const [n, c] = [x.shape[0], x.shape[1]];
  const out = new Tensor([n, c], undefined, true);
  for (let i = 0; i < n * c; i++) {
    let acc = 0;
    for (let sq = 0; sq < 64; sq++) acc += x.data[i * 64 + sq];
    out.data[i] = acc / 64;
  }
  tape.record(() => {
    if (!needGrad(x)) return;
    const gx = ensureGrad(x);
    for (let i = 0; i < n * c; i++) {
      const g = out.grad![i] / 64;
      for (let sq = 0; sq < 64; sq++) gx[i * 64 + sq] += g;
    }
  });
  return out;
}

/** x [N,I] times w [O,I] rows, plus b [O] -> [N,O]. */
export function dense(tape: Tape, x: Tensor, w: Tensor, b: Tensor): Tensor {
  const [n, inDim] = [x.shape[0], x.shape[1]];
  const o = w.shape[0];
  const out = new Tensor([n, o], undefined, true);
  for (let ni = 0; ni < n; ni++) {
    for (let oi = 0; oi < o; oi++) {
      let acc = b.data[oi];
      for (let i = 0; i < inDim; i++) acc += w.data[oi * inDim + i] * x.data[ni * inDim + i];
      out.data[ni * o + oi] = acc;
    }
  }
  tape.record(() => {
    const go = out.grad!;
    const gw = needGrad(w) ? ensureGrad(w) : null;
    const gb = needGrad(b) ? ensureGrad(b) : null;
    const gx = needGrad(x) ? ensureGrad(x) : null;
    for (let ni = 0; ni < n; ni++) {
      for (let oi = 0; oi < o; oi++) {
        const g = go[ni * o + oi];
        if (g === 0) continue;
        if (gb) gb[oi] += g;
        for (let i = 0; i < inDim; i++) {
          if (gw) gw[oi * inDim + i] += g * x.data[ni * inDim + i];
          if (gx) gx[ni * inDim + i] += g * w.data[oi * inDim + i];
        }
      }
    }
  });
  return out;
}

export function tanh(tape: Tape, x: Tensor): Tensor {
  const out = new Tensor(x.shape, undefined, true);
  for (let i = 0; i < x.size; i++) out.data[i] = Math.tanh(x.data[i]);
  tape.record(() => {
    if (!needGrad(x)) return;
    const gx = ensureGrad(x);
    for (let i = 0; i < x.size; i++) {
      const y = out.data[i];
      gx[i] += out.grad![i] * (1 - y * y);
    }
  });
  return out;
}

/** Reshape that shares storage and gradient with its input. */
export function view(t: Tensor, shape: number[]): Tensor {
  const out = new Tensor(shape, t.data);
  out.grad = ensureGrad(t);
  return out;
}

/** Copy with no backward link: gradients stop here. */
export function detach(t: Tensor): Tensor {
  return new Tensor(t.shape, t.data.slice(), false);
}

/**
 * Softmax cross-entropy over a per-example subset of logits.  Offsets are
 * flat indices into squareLogits.data, with -1 standing for the example's
 * pass logit; labels index into the offset list.  Returns the mean loss,
 * the per-example softmax over the subset, and the top-1 hit count.
 */
export function gatherSoftmaxCE(
  tape: Tape,
  squareLogits: Tensor,
  passLogits: Tensor,
  offsets: Int32Array[],
  labels: Int32Array,
): { loss: Tensor; probs: Float64Array[]; correct: number } {
  const n = offsets.length;
  const probs: Float64Array[] = [];
  let total = 0;
  let correct = 0;
  for (let ni = 0; ni < n; ni++) {
    const offs = offsets[ni];
    const logits = new Float64Array(offs.length);
    let max = -Infinity;
    for (let k = 0; k < offs.length; k++) {
      logits[k] = offs[k] < 0 ? passLogits.data[ni] : squareLogits.data[offs[k]];
      max = Math.max(max, logits[k]);
    }
    let sum = 0;
    const p = new Float64Array(offs.length);
    for (let k = 0; k < offs.length; k++) {
      p[k] = Math.exp(logits[k] - max);
      sum += p[k];
    }
    let best = 0;
    for (let k = 0; k < offs.length; k++) {
      p[k] /= sum;
      if (p[k] > p[best]) best = k;
    }
    if (best === labels[ni]) correct++;
    total += -Math.log(Math.max(p[labels[ni]], 1e-300));
    probs.push(p);
  }
  const loss = new Tensor([1], scalar(total / Math.max(n, 1)), true);
  tape.record(() => {
    const g = loss.grad![0] / Math.max(n, 1);
    const gs = needGrad(squareLogits) ? ensureGrad(squareLogits) : null;
    const gp = needGrad(passLogits) ? ensureGrad(passLogits) : null;
    for (let ni = 0; ni < n; ni++) {
      const offs = offsets[ni];
      const p = probs[ni];
      for (let k = 0; k < offs.length; k++) {
        const d = g * (p[k] - (k === labels[ni] ? 1 : 0));
        if (offs[k] < 0) {
          if (gp) gp[ni] += d;
        } else if (gs) {
          gs[offs[k]] += d;
        }
      }
    }
  });
  return { loss, probs, correct };
}

/** Sum of one selected logit per example; used for saliency probes. */
export function gatherLogitSum(
  tape: Tape,
  squareLogits: Tensor,
  passLogits: Tensor,
  chosen: Int32Array,
): Tensor {
  let total = 0;
  for (let ni = 0; ni < chosen.length; ni++) {
    total += chosen[ni] < 0 ? passLogits.data[ni] : squareLogits.data[chosen[ni]];
  }
  const out = new Tensor([1], scalar(total), true);
  tape.record(() => {
    const g = out.grad![0];
    const gs = needGrad(squareLogits) ? ensureGrad(squareLogits) : null;
    const gp = needGrad(passLogits) ? ensureGrad(passLogits) : null;
    for (let ni = 0; ni < chosen.length; ni++) {
      if (chosen[ni] < 0) {
        if (gp) gp[ni] += g;
      } else if (gs) {
        gs[chosen[ni]] += g;
      }
    }
  });
  return out;
}

/** Mean binary cross-entropy between sigmoid(logits) and 0/1 targets. */
export function sigmoidBCE(tape: Tape, logits: Tensor, targets: ArrayLike<number>): Tensor {
  const n = logits.size;
  let total = 0;
  const probs = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    const z = logits.data[i];
    probs[i] = 1 / (1 + Math.exp(-z));
    // Stable form: log(1 + e^-|z|) + max(z, 0) - z * target.
    total += Math.log(1 + Math.exp(-Math.abs(z))) + Math.max(z, 0) - z * targets[i];
  }
  const loss = new Tensor([1], scalar(total / n), true);
  tape.record(() => {
    if (!needGrad(logits)) return;
    const g = loss.grad![0] / n;
    const gl = ensureGrad(logits);
    for (let i = 0; i < n; i++) gl[i] += g * (probs[i] - targets[i]);
  });
  return loss;
}

/** Mean squared error against a plain target array. */
export function mseLoss(tape: Tape, pred: Tensor, targets: ArrayLike<number>): Tensor {
  const n = pred.size;
  let total = 0;
  for (let i = 0; i < n; i++) {
    const d = pred.data[i] - targets[i];
    total += d * d;
  }
  const loss = new Tensor([1], scalar(total / n), true);
  tape.record(() => {
    if (!needGrad(pred)) return;
    const g = (2 * loss.grad![0]) / n;
    const gp = ensureGrad(pred);
    for (let i = 0; i < n; i++) gp[i] += g * (pred.data[i] - targets[i]);
  });
  return loss;
}

/** Weighted sum of scalar losses. */
export function combine(tape: Tape, terms: Array<{ loss: Tensor; weight: number }>): Tensor {
  let total = 0;
  for (const { loss, weight } of terms) total += weight * loss.data[0];
  const out = new Tensor([1], scalar(total), true);
  tape.record(() => {
    const g = out.grad![0];
    for (const { loss, weight } of terms) ensureGrad(loss)[0] += g * weight;
  });
  return out;
}
