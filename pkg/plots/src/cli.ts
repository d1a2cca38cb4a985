#!/usr/bin/env node
/**
 * Usage:
 *   node dist/cli.js plot_run RUN.csv OUTDIR
 *   node dist/cli.js plot_sine OUTDIR
 */

import { readFileSync } from "fs";

import { SchemaError } from "./csv.js";
import { plotRun, plotSineTaylor } from "./figures.js";

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    if (command === "plot_run") {
      if (rest.length !== 2) {
        console.error("usage: plot_run RUN.csv OUTDIR");
        return 2;
      }
      const written = plotRun(readFileSync(rest[0], "utf-8"), rest[1]);
      for (const file of written) console.log(`wrote ${file}`);
      return 0;
    }
    if (command === "plot_sine") {
      if (rest.length !== 1) {
        console.error("usage: plot_sine OUTDIR");
        return 2;
      }
      console.log(`wrote ${plotSineTaylor(rest[0])}`);
      return 0;
    }
    console.error("usage: plot_run RUN.csv OUTDIR | plot_sine OUTDIR");
    return 2;
  } catch (err) {
    if (err instanceof SchemaError) {
      console.error(`schema mismatch: ${err.message}`);
      const diff = err.columnDiff();
      if (diff) console.error(`column diff: ${diff}`);
      return 1;
    }
    console.error(String(err));
    return 1;
  }
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}
