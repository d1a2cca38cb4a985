/**
 * Figure builders: the three per-run panels (angles, controls, horizons vs
 * time step) and the standalone sine-approximation comparison.
 */

import { mkdirSync, writeFileSync } from "fs";
import path from "path";

import { renderChart } from "./chart.js";
import { parseRunLog, RunLog } from "./csv.js";

export function runLabel(log: RunLog): string {
  const degree = log.config.get("degree") ?? "?";
  const seed = log.config.get("noise_seed") ?? "off";
  const noise = seed === "off" ? "noise-free" : `noise seed ${seed}`;
  return `degree ${degree}, ${noise}`;
}

export function plotRun(csvText: string, outDir: string): string[] {
  const log = parseRunLog(csvText);
  const label = runLabel(log);
  const t = log.rows.map((r) => r.t);
  mkdirSync(outDir, { recursive: true });

  const figures: Array<[string, string]> = [
    [
      "angles.svg",
      renderChart({
        title: `Angles (${label})`,
        xLabel: "time step k (0.1 s each)",
        yLabel: "angle from upright (rad)",
        series: [
          { label: "th1", color: "#4361ee", x: t, y: log.rows.map((r) => r.th1) },
          { label: "th2", color: "#e63946", x: t, y: log.rows.map((r) => r.th2) },
        ],
      }),
    ],
    [
      "controls.svg",
      renderChart({
        title: `Controls (${label})`,
        xLabel: "time step k (0.1 s each)",
        yLabel: "torque (N m)",
        series: [
          { label: "u1 (base)", color: "#4361ee", x: t, y: log.rows.map((r) => r.u1) },
          { label: "u2 (joint)", color: "#e63946", x: t, y: log.rows.map((r) => r.u2) },
        ],
      }),
    ],
    [
      "horizons.svg",
      renderChart({
        title: `Horizons (${label})`,
        xLabel: "time step k (0.1 s each)",
        yLabel: "horizon N (steps)",
        series: [
          { label: "N", color: "#2d6a4f", x: t, y: log.rows.map((r) => r.N) },
        ],
      }),
    ],
  ];

  const written: string[] = [];
  for (const [name, svg] of figures) {
    const file = path.join(outDir, name);
    writeFileSync(file, svg);
    written.push(file);
  }
  return written;
}

export function maclaurinSin(x: number, degree: 1 | 3 | 5): number {
  let y = x;
  if (degree >= 3) y -= x ** 3 / 6;
  if (degree >= 5) y += x ** 5 / 120;
  return y;
}

export function plotSineTaylor(outDir: string): string {
  const n = 241;
  const xs: number[] = [];
  for (let i = 0; i < n; i++) xs.push(-Math.PI + (2 * Math.PI * i) / (n - 1));
  const svg = renderChart({
    title: "Taylor approximations of sin x",
    xLabel: "x (rad)",
    yLabel: "y",
    series: [
      { label: "sin x", color: "#333333", x: xs, y: xs.map(Math.sin) },
      { label: "degree 1", color: "#2d6a4f", x: xs, y: xs.map((x) => maclaurinSin(x, 1)) },
      { label: "degree 3", color: "#4361ee", x: xs, y: xs.map((x) => maclaurinSin(x, 3)) },
      { label: "degree 5", color: "#e8871e", x: xs, y: xs.map((x) => maclaurinSin(x, 5)) },
    ],
  });
  mkdirSync(outDir, { recursive: true });
  const file = path.join(outDir, "sine_taylor.svg");
  writeFileSync(file, svg);
  return file;
}
