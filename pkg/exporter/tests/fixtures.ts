/**
 * Test fixtures: a small MAT 5 *writer* (independent of the reader under
 * test) plus a generator of BNCI-shaped motor-imagery recordings.
 */

import { deflateSync } from "node:zlib";

const MI_INT8 = 1;
const MI_INT32 = 5;
const MI_UINT32 = 6;
const MI_SINGLE = 7;
const MI_DOUBLE = 9;
const MI_MATRIX = 14;
const MI_COMPRESSED = 15;

const MX_CELL = 1;
const MX_STRUCT = 2;
const MX_DOUBLE = 6;
const MX_SINGLE = 7;

function element(type: number, payload: Buffer): Buffer {
  const pad = (8 - (payload.length % 8)) % 8;
  const out = Buffer.alloc(8 + payload.length + pad);
  out.writeUInt32LE(type, 0);
  out.writeUInt32LE(payload.length, 4);
  payload.copy(out, 8);
  return out;
}

function flagsElement(classId: number): Buffer {
  const payload = Buffer.alloc(8);
  payload.writeUInt32LE(classId, 0);
  return element(MI_UINT32, payload);
}

function dimsElement(dims: number[]): Buffer {
  const payload = Buffer.alloc(4 * dims.length);
  dims.forEach((d, i) => payload.writeInt32LE(d, 4 * i));
  return element(MI_INT32, payload);
}

function nameElement(name: string): Buffer {
  return element(MI_INT8, Buffer.from(name, "utf-8"));
}

/** Column-major numeric matrix as an miMATRIX element. */
export function numericMatrix(
  name: string,
  dims: number[],
  values: ArrayLike<number>,
  single = false,
): Buffer {
  const width = single ? 4 : 8;
  const payload = Buffer.alloc(width * values.length);
  for (let i = 0; i < values.length; i++) {
    if (single) payload.writeFloatLE(values[i], 4 * i);
    else payload.writeDoubleLE(values[i], 8 * i);
  }
  const body = Buffer.concat([
    flagsElement(single ? MX_SINGLE : MX_DOUBLE),
    dimsElement(dims),
    nameElement(name),
    element(single ? MI_SINGLE : MI_DOUBLE, payload),
  ]);
  return element(MI_MATRIX, body);
}

export function structMatrix(name: string, fields: Record<string, Buffer>): Buffer {
  const names = Object.keys(fields);
  const fieldLen = 32;
  const nameBytes = Buffer.alloc(fieldLen * names.length);
  names.forEach((n, i) => nameBytes.write(n, i * fieldLen, "utf-8"));
  const lenPayload = Buffer.alloc(4);
  lenPayload.writeInt32LE(fieldLen, 0);
  const body = Buffer.concat([
    flagsElement(MX_STRUCT),
    dimsElement([1, 1]),
    nameElement(name),
    element(MI_INT32, lenPayload),
    element(MI_INT8, nameBytes),
    ...names.map((n) => fields[n]),
  ]);
  return element(MI_MATRIX, body);
}

export function cellMatrix(name: string, items: Buffer[]): Buffer {
  const body = Buffer.concat([
    flagsElement(MX_CELL),
    dimsElement([1, items.length]),
    nameElement(name),
    ...items,
  ]);
  return element(MI_MATRIX, body);
}

export function matFile(variables: Buffer[], compress = false): Buffer {
  const header = Buffer.alloc(128);
  header.write("MATLAB 5.0 MAT-file, generated for exporter tests", 0, "latin1");
  header.writeUInt16LE(0x0100, 124);
  header.write("IM", 126, "latin1");
  const body = variables.map((v) =>
    compress ? element(MI_COMPRESSED, deflateSync(v)) : v,
  );
  return Buffer.concat([header, ...body]);
}

// ---------------------------------------------------------------------------
// BNCI-shaped recordings
// ---------------------------------------------------------------------------

export interface RecordingOptions {
  runs?: number;
  trialsPerRun?: number;
  channels?: number;
  fs?: number;
  windowSeconds?: number;
  numClasses?: number;
  /** leading runs without any cue (baseline recordings) */
  baselineRuns?: number;
  seed?: number;
  compress?: boolean;
}

/** Deterministic xorshift so fixtures are reproducible. */
function rng(seed: number): () => number {
  let state = seed >>> 0 || 1;
  return () => {
    state ^= state << 13; state >>>= 0;
    state ^= state >> 17;
    state ^= state << 5; state >>>= 0;
    return state / 0xffffffff;
  };
}

/**
 * One subject-session recording: a 'data' cell of runs, each a struct with
 * X (samples x channels, single), trial (cue onsets, 1-based), y (labels
 * 1..K), fs. Trials are evenly spaced with a margin after the last one.
 */
export function makeRecording(options: RecordingOptions = {}): Buffer {
  const {
    runs = 6,
    trialsPerRun = 48,
    channels = 25,
    fs = 32,
    windowSeconds = 4,
    numClasses = 4,
    baselineRuns = 0,
    seed = 1,
    compress = true,
  } = options;
  const random = rng(seed);
  const window = Math.round(windowSeconds * fs);
  const spacing = window + Math.round(0.5 * fs);

  const runBuffers: Buffer[] = [];
  for (let b = 0; b < baselineRuns; b++) {
    const samples = 4 * fs;
    const x = new Float64Array(samples * channels);
    for (let i = 0; i < x.length; i++) x[i] = random() - 0.5;
    runBuffers.push(
      structMatrix("", {
        X: numericMatrix("", [samples, channels], x, true),
        trial: numericMatrix("", [0, 0], []),
        y: numericMatrix("", [0, 0], []),
        fs: numericMatrix("", [1, 1], [fs]),
      }),
    );
  }
  for (let r = 0; r < runs; r++) {
    const samples = trialsPerRun * spacing + window;
    const x = new Float64Array(samples * channels);
    for (let i = 0; i < x.length; i++) x[i] = random() - 0.5;
    const onsets: number[] = [];
    const labels: number[] = [];
    for (let k = 0; k < trialsPerRun; k++) {
      onsets.push(k * spacing + 1); // 1-based
      labels.push((k % numClasses) + 1);
    }
    runBuffers.push(
      structMatrix("", {
        X: numericMatrix("", [samples, channels], x, true),
        trial: numericMatrix("", [onsets.length, 1], onsets),
        y: numericMatrix("", [labels.length, 1], labels),
        fs: numericMatrix("", [1, 1], [fs]),
      }),
    );
  }
  return matFile([cellMatrix("data", runBuffers)], compress);
}
