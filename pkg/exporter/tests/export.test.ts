import { execFileSync } from "node:child_process";
import { mkdtempSync, readFileSync, readdirSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { beforeAll, describe, expect, it } from "vitest";

import { exportAll } from "../src/exporter.js";
import { defaultManifest } from "../src/manifest.js";
import { decodeTrialFile } from "../src/trialfile.js";
import { makeRecording } from "./fixtures.js";

/** A full BNCI-shaped source tree: 9 subjects x (T, E), 288 trials each. */
function writeBnciSources(dir: string, fs = 32): void {
  for (let subject = 1; subject <= 9; subject++) {
    for (const tag of ["T", "E"] as const) {
      const recording = makeRecording({
        runs: 6,
        trialsPerRun: 48,
        channels: 25, // 22 EEG + 3 EOG
        fs,
        numClasses: 4,
        baselineRuns: tag === "T" ? 1 : 0,
        seed: subject * 100 + (tag === "T" ? 1 : 2),
      });
      writeFileSync(join(dir, `A${String(subject).padStart(2, "0")}${tag}.mat`), recording);
    }
  }
}

describe("BNCI export conformance", () => {
  let src: string;
  let out: string;

  beforeAll(() => {
    src = mkdtempSync(join(tmpdir(), "bnci-src-"));
    out = mkdtempSync(join(tmpdir(), "bnci-out-"));
    writeBnciSources(src);
    const manifest = defaultManifest("BNCI", out);
    manifest.targetFs = 16; // fixtures are generated at 32 Hz
    const summary = exportAll(src, manifest);
    expect(summary.skipped).toEqual([]);
  }, 120_000);

  it("yields 9 x 2 trial files with 288 trials, 22 channels, 4 classes", () => {
    const files = readdirSync(out).filter((f) => f.endsWith(".eegt")).sort();
    expect(files).toHaveLength(18);
    for (const name of files) {
      const file = decodeTrialFile(readFileSync(join(out, name)));
      expect(file.header.n_trials).toBe(288);
      expect(file.header.channels).toBe(22);
      expect(file.header.num_classes).toBe(4);
      expect(file.header.fs).toBe(16);
      expect(file.header.samples).toBe(64); // 4 s at 16 Hz
      const counts = [0, 0, 0, 0];
      for (const label of file.labels) counts[label]++;
      expect(counts).toEqual([72, 72, 72, 72]);
    }
  });

  it("names files by subject and session with sessions in chronological order", () => {
    const files = readdirSync(out).filter((f) => f.endsWith(".eegt")).sort();
    expect(files[0]).toBe("s001_sess00.eegt");
    expect(files.at(-1)).toBe("s009_sess01.eegt");
  });

  it("writes a summary manifest", () => {
    const summary = JSON.parse(readFileSync(join(out, "export_summary.json"), "utf-8"));
    expect(summary.exported).toHaveLength(18);
    expect(summary.skipped).toHaveLength(0);
  });

  it("records the preprocessing in the header", () => {
    const file = decodeTrialFile(readFileSync(join(out, "s001_sess00.eegt")));
    expect(file.header.preprocessing).toMatchObject({
      highpass_hz: 0.5,
      butterworth_order: 2,
      zero_phase: true,
      resampled_from: 32,
      dataset: "BNCI",
    });
  });

  it("passes the engine's own loader via its inspect command", () => {
    const output = execFileSync(
      "python3",
      ["-m", "eegstream.cli", "inspect", join(out, "s005_sess01.eegt")],
      { encoding: "utf-8" },
    );
    const header = JSON.parse(output);
    expect(header.n_trials).toBe(288);
    expect(header.channels).toBe(22);
    expect(header.num_classes).toBe(4);
  });
});

describe("BNCI2 subset export", () => {
  it("keeps only left/right trials: 144 per session, 2 classes", () => {
    const src = mkdtempSync(join(tmpdir(), "bnci2-src-"));
    const out = mkdtempSync(join(tmpdir(), "bnci2-out-"));
    writeFileSync(join(src, "A03T.mat"), makeRecording({ seed: 33 }));
    const manifest = defaultManifest("BNCI2", out);
    manifest.targetFs = 16;
    const summary = exportAll(src, manifest);
    expect(summary.exported).toHaveLength(1);
    const file = decodeTrialFile(readFileSync(join(out, "s003_sess00.eegt")));
    expect(file.header.n_trials).toBe(144);
    expect(file.header.num_classes).toBe(2);
    const counts = [0, 0];
    for (const label of file.labels) counts[label]++;
    expect(counts).toEqual([72, 72]);
  });
});

describe("failure handling", () => {
  it("skips unreadable recordings but keeps exporting the rest", () => {
    const src = mkdtempSync(join(tmpdir(), "skip-src-"));
    const out = mkdtempSync(join(tmpdir(), "skip-out-"));
    writeFileSync(join(src, "A01T.mat"), makeRecording({ seed: 5 }));
    writeFileSync(join(src, "A02T.mat"), Buffer.from("not a mat file at all"));
    const manifest = defaultManifest("BNCI", out);
    manifest.targetFs = 16;
    const summary = exportAll(src, manifest);
    expect(summary.exported).toHaveLength(1);
    expect(summary.skipped).toHaveLength(1);
    expect(summary.skipped[0].source).toContain("A02T.mat");
  });

  it("rejects a window that does not fit the recording", () => {
    const src = mkdtempSync(join(tmpdir(), "win-src-"));
    const out = mkdtempSync(join(tmpdir(), "win-out-"));
    writeFileSync(join(src, "A01T.mat"), makeRecording({ windowSeconds: 2, seed: 6 }));
    const manifest = defaultManifest("BNCI", out);
    manifest.targetFs = 16;
    manifest.windowSeconds = 10; // longer than the inter-trial spacing
    const summary = exportAll(src, manifest);
    expect(summary.exported).toHaveLength(0);
    expect(summary.skipped).toHaveLength(1);
  });

  it("errors when no recordings are found", () => {
    const src = mkdtempSync(join(tmpdir(), "empty-src-"));
    const manifest = defaultManifest("BNCI", mkdtempSync(join(tmpdir(), "empty-out-")));
    expect(() => exportAll(src, manifest)).toThrow(/no recognizable recordings/);
  });
});

describe("generic source naming", () => {
  it("accepts P<subject>_S<session>.mat for Large-style recordings", () => {
    const src = mkdtempSync(join(tmpdir(), "large-src-"));
    const out = mkdtempSync(join(tmpdir(), "large-out-"));
    writeFileSync(
      join(src, "P07_S3.mat"),
      makeRecording({ runs: 1, trialsPerRun: 40, channels: 27, numClasses: 2,
                      windowSeconds: 4.5, seed: 77 }),
    );
    const manifest = defaultManifest("Large", out);
    manifest.targetFs = 16;
    const summary = exportAll(src, manifest);
    expect(summary.exported).toHaveLength(1);
    const file = decodeTrialFile(readFileSync(join(out, "s007_sess03.eegt")));
    expect(file.header.n_trials).toBe(40);
    expect(file.header.channels).toBe(27);
    expect(file.header.samples).toBe(72); // 4.5 s at 16 Hz
  });
});
