/**
 * The export pipeline: discover recordings, cut cue-aligned epochs, apply
 * the engine's preprocessing (high-pass, then anti-aliased resampling), and
 * write one .eegt container per subject-session plus a summary manifest.
 */

import { readFileSync, readdirSync, writeFileSync, mkdirSync } from "node:fs";
import { basename, join } from "node:path";

import { asScalar, asVector, MatValue, readMat } from "./mat5.js";
import { designResampler, highpass, resample, resampleLength, Resampler } from "./dsp.js";
import { ExportManifest, parseSourceName, validateManifest } from "./manifest.js";
import { encodeTrialFile, TrialFileHeader } from "./trialfile.js";

export interface RunData {
  /** column-major samples x channels matrix */
  x: MatValue;
  samples: number;
  channels: number;
  fs: number;
  /** 1-based cue onset sample indices */
  onsets: number[];
  labels: number[];
}

export interface ExportItem {
  file: string;
  subject: number;
  session: number;
}

export interface ExportSummary {
  exported: { source: string; output: string; trials: number }[];
  skipped: { source: string; reason: string }[];
}

/** Pull the runs out of one recording file (a 'data' cell/struct of runs). */
export function collectRuns(vars: Record<string, MatValue | null>, source: string): RunData[] {
  const data = vars["data"];
  if (!data) throw new Error(`${source}: no 'data' variable`);
  const entries: (MatValue | null)[] =
    data.kind === "cell" ? data.items : data.kind === "struct" ? structElements(data) : [data];

  const runs: RunData[] = [];
  for (const entry of entries) {
    if (!entry) continue;
    const fields = entry.kind === "struct" ? singleStructFields(entry) : null;
    if (!fields) continue;
    const x = fields["X"];
    if (!x || x.kind !== "numeric" || x.dims.length !== 2) continue;
    const onsets = asVector(fields["trial"] ?? null);
    if (onsets.length === 0) continue; // baseline run without cues
    runs.push({
      x,
      samples: x.dims[0],
      channels: x.dims[1],
      fs: asScalar(fields["fs"] ?? null, "fs"),
      onsets,
      labels: asVector(fields["y"] ?? null),
    });
  }
  return runs;
}

/** A struct array of runs: rebuild the per-element field records. */
function structElements(value: MatValue & { kind: "struct" }): (MatValue | null)[] {
  const count = value.dims.reduce((a, b) => a * b, 1);
  const out: (MatValue | null)[] = [];
  for (let i = 0; i < count; i++) {
    const fields: Record<string, (MatValue | null)[]> = {};
    for (const [name, values] of Object.entries(value.fields)) {
      fields[name] = [values[i] ?? null];
    }
    out.push({ kind: "struct", dims: [1, 1], fields });
  }
  return out;
}

function singleStructFields(value: MatValue & { kind: "struct" }): Record<string, MatValue | null> {
  const out: Record<string, MatValue | null> = {};
  for (const [name, values] of Object.entries(value.fields)) {
    out[name] = values[0] ?? null;
  }
  return out;
}

export interface SessionTrials {
  fs: number;
  samples: number;
  labels: number[];
  /** trials[t][c] = Float32Array time series */
  trials: Float32Array[][];
}

/** Cut, filter and resample every mapped trial of one subject-session. */
export function epochSession(runs: RunData[], manifest: ExportManifest): SessionTrials {
  if (runs.length === 0) throw new Error("recording contains no runs with cue onsets");
  const fsIn = runs[0].fs;
  for (const run of runs) {
    if (run.fs !== fsIn) throw new Error("runs disagree on the sampling rate");
  }
  const window = Math.round(manifest.windowSeconds * fsIn);
  const resampler: Resampler | null =
    manifest.targetFs === fsIn ? null : designResampler(fsIn, manifest.targetFs);
  const outSamples = resampler ? resampleLength(window, resampler) : window;

  const labels: number[] = [];
  const trials: Float32Array[][] = [];
  for (const run of runs) {
    if (run.labels.length !== run.onsets.length) {
      throw new Error("run has mismatched cue and label counts");
    }
    for (const channel of manifest.channels) {
      if (channel >= run.channels) {
        throw new Error(
          `manifest keeps channel ${channel} but the recording has ${run.channels}`,
        );
      }
    }
    for (let k = 0; k < run.onsets.length; k++) {
      const mapped = manifest.classMap.get(run.labels[k]);
      if (mapped === undefined) continue; // class not exported (BNCI2 subset)
      const start = Math.round(run.onsets[k]) - 1; // MATLAB indices are 1-based
      if (start < 0 || start + window > run.samples) {
        throw new Error(
          `trial at sample ${run.onsets[k]} does not fit a ${manifest.windowSeconds}s window`,
        );
      }
      const trial: Float32Array[] = [];
      for (const channel of manifest.channels) {
        const raw = new Float64Array(window);
        const base = channel * run.samples; // column-major storage
        if (run.x.kind !== "numeric") throw new Error("run data is not numeric");
        for (let s = 0; s < window; s++) raw[s] = run.x.data[base + start + s];
        let processed = highpass(raw, manifest.highpassHz, fsIn);
        if (resampler) processed = resample(processed, resampler);
        trial.push(Float32Array.from(processed));
      }
      labels.push(mapped);
      trials.push(trial);
    }
  }
  return { fs: manifest.targetFs, samples: outSamples, labels, trials };
}

export function discoverSources(srcDir: string): ExportItem[] {
  const items: ExportItem[] = [];
  for (const name of readdirSync(srcDir).sort()) {
    const id = parseSourceName(basename(name));
    if (id) items.push({ file: join(srcDir, name), subject: id.subject, session: id.session });
  }
  return items;
}

export function exportAll(srcDir: string, manifest: ExportManifest): ExportSummary {
  validateManifest(manifest);
  const items = discoverSources(srcDir);
  if (items.length === 0) {
    throw new Error(`no recognizable recordings (A##T.mat / P#_S#.mat) under ${srcDir}`);
  }
  mkdirSync(manifest.outDir, { recursive: true });
  const numClasses = manifest.classMap.size;
  const summary: ExportSummary = { exported: [], skipped: [] };

  for (const item of items) {
    try {
      const vars = readMat(readFileSync(item.file));
      const runs = collectRuns(vars, item.file);
      const session = epochSession(runs, manifest);
      const header: TrialFileHeader = {
        subject_id: item.subject,
        session_id: item.session,
        channels: manifest.channels.length,
        samples: session.samples,
        fs: session.fs,
        num_classes: numClasses,
        n_trials: session.trials.length,
        preprocessing: {
          dataset: manifest.dataset,
          highpass_hz: manifest.highpassHz,
          butterworth_order: 2,
          zero_phase: true,
          resampled_from: runs[0].fs,
          window_seconds: manifest.windowSeconds,
        },
      };
      const outPath = join(
        manifest.outDir,
        `s${String(item.subject).padStart(3, "0")}_sess${String(item.session).padStart(2, "0")}.eegt`,
      );
      writeFileSync(
        outPath,
        encodeTrialFile({
          header,
          labels: Int32Array.from(session.labels),
          data: session.trials,
        }),
      );
      summary.exported.push({ source: item.file, output: outPath, trials: session.trials.length });
    } catch (err) {
      summary.skipped.push({ source: item.file, reason: String(err) });
    }
  }
  writeFileSync(
    join(manifest.outDir, "export_summary.json"),
    JSON.stringify(summary, null, 2),
  );
  return summary;
}
