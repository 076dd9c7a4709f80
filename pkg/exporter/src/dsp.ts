/**
 * Preprocessing used before export, matching the engine's parameters:
 * a zero-phase second-order Butterworth high-pass (mirror padding spanning
 * three filter time constants) and windowed-sinc rational resampling with
 * 64 taps per phase and a 0.45 * fs_out cutoff.
 */

export interface Biquad {
  b: [number, number, number];
  a: [number, number, number]; // a[0] === 1
}

/** Second-order Butterworth high-pass via the bilinear transform. */
export function butterHighpass(cutoffHz: number, fs: number): Biquad {
  if (!(cutoffHz > 0 && cutoffHz < fs / 2)) {
    throw new RangeError(`cutoff must lie in (0, fs/2), got ${cutoffHz} at fs=${fs}`);
  }
  const q = Math.SQRT1_2;
  const k = Math.tan((Math.PI * cutoffHz) / fs);
  const norm = k * k + k / q + 1;
  return {
    b: [1 / norm, -2 / norm, 1 / norm],
    a: [1, (2 * (k * k - 1)) / norm, (k * k - k / q + 1) / norm],
  };
}

function filterInPlace(coef: Biquad, x: Float64Array): void {
  const [b0, b1, b2] = coef.b;
  const [, a1, a2] = coef.a;
  // direct form II transposed, started in the steady state of a step of
  // x[0]: a constant input then produces the filter's DC response exactly,
  // with no startup transient
  const dc = (b0 + b1 + b2) / (1 + a1 + a2);
  const x0 = x.length > 0 ? x[0] : 0;
  let z1 = (dc - b0) * x0;
  let z2 = (b2 - a2 * dc) * x0;
  for (let i = 0; i < x.length; i++) {
    const xi = x[i];
    const yi = b0 * xi + z1;
    z1 = b1 * xi - a1 * yi + z2;
    z2 = b2 * xi - a2 * yi;
    x[i] = yi;
  }
}

/** Forward-backward filtering with even-reflection padding. */
export function filtfilt(coef: Biquad, signal: Float64Array, padlen: number): Float64Array {
  const t = signal.length;
  const pad = Math.max(0, Math.min(padlen, t - 1));
  const work = new Float64Array(t + 2 * pad);
  for (let i = 0; i < pad; i++) work[i] = signal[pad - i];
  work.set(signal, pad);
  for (let i = 0; i < pad; i++) work[pad + t + i] = signal[t - 2 - i];

  filterInPlace(coef, work);
  work.reverse();
  filterInPlace(coef, work);
  work.reverse();
  return work.slice(pad, pad + t);
}

export function highpass(signal: Float64Array, cutoffHz: number, fs: number): Float64Array {
  const coef = butterHighpass(cutoffHz, fs);
  const padlen = Math.floor((3 * fs) / (2 * Math.PI * cutoffHz));
  return filtfilt(coef, signal, padlen);
}

function gcd(a: number, b: number): number {
  while (b !== 0) [a, b] = [b, a % b];
  return a;
}

const TAPS_PER_PHASE = 64;
const MAX_INTERPOLATION = 64;

export interface Resampler {
  up: number;
  down: number;
  taps: Float64Array;
  delay: number;
}

/** Hamming-windowed sinc low-pass for the polyphase resampler. */
export function designResampler(fsIn: number, fsOut: number): Resampler {
  if (!(fsIn > 0 && fsOut > 0)) throw new RangeError("sampling rates must be positive");
  if (fsOut > fsIn) throw new RangeError(`only downsampling is supported (${fsIn} -> ${fsOut})`);
  // rates in these datasets are integral or simple decimals; scale to integers
  const scale = 1000;
  const a = Math.round(fsIn * scale);
  const b = Math.round(fsOut * scale);
  const g = gcd(a, b);
  const down = a / g;
  const up = b / g;
  if (up > MAX_INTERPOLATION) {
    throw new RangeError(
      `rate ratio ${fsIn}/${fsOut} needs interpolation factor ${up} > ${MAX_INTERPOLATION}`,
    );
  }
  const numtaps = TAPS_PER_PHASE * up + 1; // odd length, integer group delay
  const fsUp = fsIn * up;
  const fc = 0.45 * fsOut;
  const mid = (numtaps - 1) / 2;
  const taps = new Float64Array(numtaps);
  let sum = 0;
  for (let i = 0; i < numtaps; i++) {
    const n = i - mid;
    const sinc = n === 0 ? 2 * fc / fsUp : Math.sin((2 * Math.PI * fc * n) / fsUp) / (Math.PI * n);
    const window = 0.54 - 0.46 * Math.cos((2 * Math.PI * i) / (numtaps - 1));
    taps[i] = sinc * window;
    sum += taps[i];
  }
  // unity DC gain after zero-stuffing compensation
  for (let i = 0; i < numtaps; i++) taps[i] = (taps[i] / sum) * up;
  return { up, down, taps, delay: mid };
}

export function resampleLength(t: number, r: Resampler): number {
  return Math.floor((t * r.up) / r.down);
}

/** Apply the polyphase resampler to one channel. */
export function resample(signal: Float64Array, r: Resampler): Float64Array {
  if (r.up === r.down) return signal.slice();
  const tOut = resampleLength(signal.length, r);
  const out = new Float64Array(tOut);
  const numtaps = r.taps.length;
  for (let j = 0; j < tOut; j++) {
    const p = r.delay + j * r.down; // position on the zero-stuffed grid
    let acc = 0;
    let iLow = Math.ceil((p - numtaps + 1) / r.up);
    if (iLow < 0) iLow = 0;
    let iHigh = Math.floor(p / r.up);
    if (iHigh > signal.length - 1) iHigh = signal.length - 1;
    for (let i = iLow; i <= iHigh; i++) {
      acc += r.taps[p - i * r.up] * signal[i];
    }
    out[j] = acc;
  }
  return out;
}
