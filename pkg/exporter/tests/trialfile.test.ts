import { describe, expect, it } from "vitest";

import {
  TrialFormatError,
  decodeTrialFile,
  encodeTrialFile,
  TrialFile,
} from "../src/trialfile.js";

function sampleFile(): TrialFile {
  const trials = 3, channels = 2, samples = 4;
  const data: Float32Array[][] = [];
  for (let t = 0; t < trials; t++) {
    const trial: Float32Array[] = [];
    for (let c = 0; c < channels; c++) {
      trial.push(Float32Array.from([t, c, t + c, 0.5]));
    }
    data.push(trial);
  }
  return {
    header: {
      subject_id: 4,
      session_id: 1,
      channels,
      samples,
      fs: 100,
      num_classes: 2,
      n_trials: trials,
      preprocessing: { highpass_hz: 0.5 },
    },
    labels: Int32Array.from([0, 1, -1]),
    data,
  };
}

describe("trial container", () => {
  it("round-trips bitwise", () => {
    const original = sampleFile();
    const blob = encodeTrialFile(original);
    const decoded = decodeTrialFile(blob);
    expect(decoded.header).toEqual(original.header);
    expect(Array.from(decoded.labels)).toEqual([0, 1, -1]);
    expect(decoded.data[2][1][2]).toBeCloseTo(3, 12);
    expect(encodeTrialFile(decoded).equals(blob)).toBe(true);
  });

  it("starts with the magic and version", () => {
    const blob = encodeTrialFile(sampleFile());
    expect(blob.toString("latin1", 0, 4)).toBe("EEGT");
    expect(blob.readUInt32LE(4)).toBe(1);
  });

  it("rejects a bad magic", () => {
    const blob = encodeTrialFile(sampleFile());
    blob.write("NOPE", 0, "latin1");
    expect(() => decodeTrialFile(blob)).toThrow(TrialFormatError);
  });

  it("rejects truncation and trailing bytes with positions", () => {
    const blob = encodeTrialFile(sampleFile());
    try {
      decodeTrialFile(blob.subarray(0, blob.length - 5));
      expect.unreachable();
    } catch (err) {
      expect(err).toBeInstanceOf(TrialFormatError);
      expect((err as TrialFormatError).offset).toBeTypeOf("number");
    }
    expect(() => decodeTrialFile(Buffer.concat([blob, Buffer.alloc(3)]))).toThrow(
      TrialFormatError,
    );
  });

  it("rejects out-of-range labels on write and read", () => {
    const bad = sampleFile();
    bad.labels = Int32Array.from([0, 5, 0]);
    expect(() => encodeTrialFile(bad)).toThrow(TrialFormatError);

    const blob = encodeTrialFile(sampleFile());
    // labels start right after the JSON header
    const headerLen = blob.readUInt32LE(8);
    blob.writeInt32LE(9, 12 + headerLen);
    expect(() => decodeTrialFile(blob)).toThrow(TrialFormatError);
  });
});
