/**
 * Export manifests: which dataset layout is being read, which channels and
 * classes are kept, how trials are epoched, and where output goes.
 */

export type DatasetName = "BNCI" | "BNCI2" | "Large";

export interface ExportManifest {
  dataset: DatasetName;
  /** EEG channels kept, as indices into the recording's channel axis. */
  channels: number[];
  /** original label value -> exported class index; injective */
  classMap: Map<number, number>;
  /** cue-aligned epoch length in seconds */
  windowSeconds: number;
  /** output sampling rate after anti-aliased resampling */
  targetFs: number;
  highpassHz: number;
  outDir: string;
}

function range(n: number): number[] {
  return Array.from({ length: n }, (_, i) => i);
}

/** Table-style defaults per dataset; 22 EEG channels for BNCI (EOG dropped), 27 for Large. */
export function defaultManifest(dataset: DatasetName, outDir: string): ExportManifest {
  switch (dataset) {
    case "BNCI":
      return {
        dataset,
        channels: range(22),
        classMap: new Map([[1, 0], [2, 1], [3, 2], [4, 3]]),
        windowSeconds: 4.0,
        targetFs: 100,
        highpassHz: 0.5,
        outDir,
      };
    case "BNCI2":
      // left/right subset of the same recordings: two classes, half the trials
      return {
        dataset,
        channels: range(22),
        classMap: new Map([[1, 0], [2, 1]]),
        windowSeconds: 4.0,
        targetFs: 100,
        highpassHz: 0.5,
        outDir,
      };
    case "Large":
      return {
        dataset,
        channels: range(27),
        classMap: new Map([[1, 0], [2, 1]]),
        windowSeconds: 4.5,
        targetFs: 100,
        highpassHz: 0.5,
        outDir,
      };
  }
}

export function validateManifest(manifest: ExportManifest): void {
  if (manifest.channels.length < 1) throw new Error("manifest keeps no channels");
  if (new Set(manifest.channels).size !== manifest.channels.length) {
    throw new Error("manifest channel list has duplicates");
  }
  const targets = [...manifest.classMap.values()];
  if (new Set(targets).size !== targets.length) {
    throw new Error("class mapping is not injective");
  }
  const sorted = [...targets].sort((a, b) => a - b);
  sorted.forEach((v, i) => {
    if (v !== i) throw new Error("class mapping targets must be exactly 0..K-1");
  });
  if (!(manifest.windowSeconds > 0)) throw new Error("epoch window must be positive");
  if (!(manifest.targetFs > 0)) throw new Error("target sampling rate must be positive");
}

export interface SourceId {
  subject: number;
  session: number;
}

/**
 * Recording filenames: BNCI-style "A01T.mat"/"A01E.mat" (T = first session,
 * E = second), or the generic "P<subject>_S<session>.mat" used for
 * MAT-converted recordings of other datasets.
 */
export function parseSourceName(name: string): SourceId | null {
  const bnci = /^A(\d{2})([TE])\.mat$/i.exec(name);
  if (bnci) {
    return { subject: parseInt(bnci[1], 10), session: bnci[2].toUpperCase() === "T" ? 0 : 1 };
  }
  const generic = /^P(\d+)[_-]S(\d+)\.mat$/i.exec(name);
  if (generic) {
    return { subject: parseInt(generic[1], 10), session: parseInt(generic[2], 10) };
  }
  return null;
}
