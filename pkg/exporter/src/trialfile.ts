/**
 * The .eegt trial container: magic "EEGT", u32 version, u32 header length,
 * UTF-8 JSON header, i32 labels (-1 = unlabeled), f32 data in
 * [trial][channel][time] order. Everything little-endian; the byte length
 * is exactly determined by the header.
 */

export const TRIAL_MAGIC = "EEGT";
export const TRIAL_VERSION = 1;

export interface TrialFileHeader {
  subject_id: number;
  session_id: number;
  channels: number;
  samples: number;
  fs: number;
  num_classes: number;
  n_trials: number;
  preprocessing: Record<string, unknown>;
}

export interface TrialFile {
  header: TrialFileHeader;
  labels: Int32Array;
  /** data[trial][channel] is a Float32Array of length header.samples */
  data: Float32Array[][];
}

export class TrialFormatError extends Error {
  constructor(message: string, public field?: string, public offset?: number) {
    super(message);
  }
}

export function encodeTrialFile(file: TrialFile): Buffer {
  const { header, labels, data } = file;
  if (header.n_trials !== labels.length || header.n_trials !== data.length) {
    throw new TrialFormatError("trial count disagrees between header, labels and data");
  }
  for (const label of labels) {
    if (label < -1 || label >= header.num_classes) {
      throw new TrialFormatError(`label ${label} outside {-1} u [0, num_classes)`, "labels");
    }
  }
  const headerJson = Buffer.from(
    JSON.stringify(sortKeys(header as unknown as Record<string, unknown>)),
    "utf-8",
  );
  const dataBytes = 4 * header.n_trials * header.channels * header.samples;
  const out = Buffer.alloc(12 + headerJson.length + 4 * labels.length + dataBytes);
  let offset = 0;
  out.write(TRIAL_MAGIC, offset, "latin1"); offset += 4;
  out.writeUInt32LE(TRIAL_VERSION, offset); offset += 4;
  out.writeUInt32LE(headerJson.length, offset); offset += 4;
  headerJson.copy(out, offset); offset += headerJson.length;
  for (const label of labels) {
    out.writeInt32LE(label, offset); offset += 4;
  }
  for (const trial of data) {
    if (trial.length !== header.channels) {
      throw new TrialFormatError("trial channel count disagrees with header");
    }
    for (const channel of trial) {
      if (channel.length !== header.samples) {
        throw new TrialFormatError("trial sample count disagrees with header");
      }
      for (const v of channel) {
        out.writeFloatLE(v, offset); offset += 4;
      }
    }
  }
  return out;
}

function sortKeys(obj: Record<string, unknown>): Record<string, unknown> {
  const sorted: Record<string, unknown> = {};
  for (const key of Object.keys(obj).sort()) {
    const value = obj[key];
    sorted[key] =
      value && typeof value === "object" && !Array.isArray(value)
        ? sortKeys(value as Record<string, unknown>)
        : value;
  }
  return sorted;
}

export function decodeTrialFile(buf: Buffer): TrialFile {
  if (buf.length < 12) throw new TrialFormatError("file too short for the fixed header", "magic", 0);
  const magic = buf.toString("latin1", 0, 4);
  if (magic !== TRIAL_MAGIC) {
    throw new TrialFormatError(`bad magic ${JSON.stringify(magic)}`, "magic", 0);
  }
  const version = buf.readUInt32LE(4);
  if (version !== TRIAL_VERSION) {
    throw new TrialFormatError(`unsupported version ${version}`, "version", 4);
  }
  const headerLen = buf.readUInt32LE(8);
  if (12 + headerLen > buf.length) {
    throw new TrialFormatError("truncated while reading header", "header", 12);
  }
  let header: TrialFileHeader;
  try {
    header = JSON.parse(buf.toString("utf-8", 12, 12 + headerLen));
  } catch (err) {
    throw new TrialFormatError(`header is not valid JSON: ${err}`, "header", 12);
  }
  for (const key of [
    "subject_id", "session_id", "channels", "samples", "fs", "num_classes", "n_trials",
  ] as const) {
    if (!(key in header)) throw new TrialFormatError(`header is missing ${key}`, key);
  }
  const { n_trials, channels, samples } = header;
  const expected = 12 + headerLen + 4 * n_trials + 4 * n_trials * channels * samples;
  if (buf.length !== expected) {
    throw new TrialFormatError(
      `file is ${buf.length} bytes but the header implies ${expected}`,
      "n_trials",
      Math.min(buf.length, expected),
    );
  }
  let offset = 12 + headerLen;
  const labels = new Int32Array(n_trials);
  for (let i = 0; i < n_trials; i++) {
    labels[i] = buf.readInt32LE(offset); offset += 4;
    if (labels[i] < -1 || labels[i] >= header.num_classes) {
      throw new TrialFormatError(`label ${labels[i]} out of range`, "labels", offset - 4);
    }
  }
  const data: Float32Array[][] = [];
  for (let t = 0; t < n_trials; t++) {
    const trial: Float32Array[] = [];
    for (let c = 0; c < channels; c++) {
      const channel = new Float32Array(samples);
      for (let s = 0; s < samples; s++) {
        channel[s] = buf.readFloatLE(offset); offset += 4;
      }
      trial.push(channel);
    }
    data.push(trial);
  }
  return { header, labels, data };
}
