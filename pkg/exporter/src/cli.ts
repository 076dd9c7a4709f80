#!/usr/bin/env node
/** eegt-exporter: convert public MI recordings into .eegt trial containers. */

import { parseArgs } from "node:util";
import { readFileSync } from "node:fs";

import { exportAll } from "./exporter.js";
import { DatasetName, defaultManifest } from "./manifest.js";
import { decodeTrialFile } from "./trialfile.js";

const USAGE = `usage:
  eegt-exporter export --dataset BNCI|BNCI2|Large --src DIR --out DIR
                       [--fs HZ] [--window SECONDS] [--highpass HZ]
  eegt-exporter inspect FILE.eegt

Recordings are MAT files named A##T.mat / A##E.mat (BNCI sessions) or
P<subject>_S<session>.mat. Each holds a 'data' cell/struct of runs with
fields X (samples x channels), trial (cue onsets), y (labels), fs.`;

function fail(message: string, code = 2): never {
  console.error(message);
  process.exit(code);
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  if (command === "export") {
    let values;
    try {
      ({ values } = parseArgs({
        args: rest,
        options: {
          dataset: { type: "string" },
          src: { type: "string" },
          out: { type: "string" },
          fs: { type: "string" },
          window: { type: "string" },
          highpass: { type: "string" },
        },
      }));
    } catch (err) {
      fail(`${err}\n\n${USAGE}`);
    }
    const dataset = values.dataset as DatasetName | undefined;
    if (!dataset || !values.src || !values.out) fail(USAGE);
    if (!["BNCI", "BNCI2", "Large"].includes(dataset)) {
      fail(`unknown dataset ${dataset}`);
    }
    const manifest = defaultManifest(dataset, values.out);
    if (values.fs) manifest.targetFs = Number(values.fs);
    if (values.window) manifest.windowSeconds = Number(values.window);
    if (values.highpass) manifest.highpassHz = Number(values.highpass);

    try {
      const summary = exportAll(values.src, manifest);
      for (const item of summary.exported) {
        console.log(`${item.source} -> ${item.output} (${item.trials} trials)`);
      }
      for (const item of summary.skipped) {
        console.error(`skipped ${item.source}: ${item.reason}`);
      }
      console.log(
        `exported ${summary.exported.length} session(s), skipped ${summary.skipped.length}`,
      );
      return summary.exported.length === 0 ? 1 : 0;
    } catch (err) {
      console.error(`error: ${err instanceof Error ? err.message : err}`);
      return 1;
    }
  }

  if (command === "inspect") {
    if (rest.length !== 1) fail(USAGE);
    try {
      const file = decodeTrialFile(readFileSync(rest[0]));
      console.log(JSON.stringify(file.header, null, 2));
      return 0;
    } catch (err) {
      console.error(`error: ${err instanceof Error ? err.message : err}`);
      return 1;
    }
  }

  fail(USAGE);
}

const isMain = process.argv[1] && import.meta.url.endsWith(process.argv[1].split("/").pop()!);
if (isMain) {
  process.exit(main(process.argv.slice(2)));
}
