/**
 * Canvas renderers. Step (not wall-clock) is the x-axis everywhere so live
 * views line up with offline replays.
 */

import { SeriesPoint, ViewModel } from "./viewmodel.js";

const SERIES_STYLES: Array<[keyof SeriesPoint, string, string]> = [
  ["rho", "#888888", "rho"],
  ["iH", "#1f77b4", "I_h"],
  ["iP", "#d62728", "I_p"],
  ["iS", "#2ca02c", "I_s"],
];

const PATHWAY_SPLIT = 0.6; // SbP above, PbS below (display context only)

function clear(canvas: HTMLCanvasElement): CanvasRenderingContext2D {
  const ctx = canvas.getContext("2d")!;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.fillStyle = "#ffffff";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  return ctx;
}

export function drawSeries(canvas: HTMLCanvasElement, series: SeriesPoint[]): void {
  const ctx = clear(canvas);
  if (series.length === 0) return;
  const w = canvas.width;
  const h = canvas.height;
  const s0 = series[0].step;
  const s1 = Math.max(series[series.length - 1].step, s0 + 1);
  const sx = (step: number) => ((step - s0) / (s1 - s0)) * (w - 40) + 32;
  const sy = (v: number) => h - 18 - Math.min(Math.max(v, 0), 1.6) * ((h - 30) / 1.6);
  ctx.strokeStyle = "#dddddd";
  ctx.strokeRect(32, 12, w - 40, h - 30);
  for (const [key, color] of SERIES_STYLES) {
    ctx.strokeStyle = color;
    ctx.beginPath();
    series.forEach((pt, i) => {
      const x = sx(pt.step);
      const y = sy(pt[key] as number);
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.stroke();
  }
  ctx.font = "10px sans-serif";
  SERIES_STYLES.forEach(([, color, label], i) => {
    ctx.fillStyle = color;
    ctx.fillText(label, 40 + i * 40, 10);
  });
}

export function drawPhasePlane(canvas: HTMLCanvasElement, vm: ViewModel): void {
  const ctx = clear(canvas);
  const w = canvas.width;
  const h = canvas.height;
  const px = (iP: number) => 30 + Math.min(Math.max(iP, 0), 1.05) * (w - 42);
  const py = (iH: number) => h - 22 - Math.min(Math.max(iH, 0), 1.05) * (h - 34);
  ctx.strokeStyle = "#dddddd";
  ctx.strokeRect(30, 12, w - 42, h - 34);
  ctx.font = "10px sans-serif";
  ctx.fillStyle = "#777777";
  ctx.fillText("I_p", w - 24, h - 8);
  ctx.fillText("I_h", 4, 20);
  if (vm.phase.length === 0) return;
  ctx.strokeStyle = "#9467bd";
  ctx.beginPath();
  vm.phase.forEach(([iP, iH], i) => {
    if (i === 0) ctx.moveTo(px(iP), py(iH));
    else ctx.lineTo(px(iP), py(iH));
  });
  if (vm.phase.length > 1) ctx.stroke();
  const [curP, curH] = vm.phase[vm.phase.length - 1];
  ctx.fillStyle = "#d62728";
  ctx.beginPath();
  ctx.arc(px(curP), py(curH), 4, 0, 2 * Math.PI);
  ctx.fill();
  const iw = vm.series.length ? vm.series[vm.series.length - 1].iwRunning : 0;
  ctx.fillStyle = "#333333";
  ctx.fillText(
    `running I_w = ${iw.toFixed(4)} (${iw >= PATHWAY_SPLIT ? "SbP" : "PbS"} side of ${PATHWAY_SPLIT})`,
    36, h - 8,
  );
}

export function drawHistogram(canvas: HTMLCanvasElement, hist: number[]): void {
  const ctx = clear(canvas);
  if (hist.length === 0) return;
  const w = canvas.width;
  const h = canvas.height;
  const peak = Math.max(...hist, 1);
  const barW = (w - 20) / hist.length;
  ctx.fillStyle = "#1f77b4";
  hist.forEach((count, i) => {
    const barH = (count / peak) * (h - 24);
    ctx.fillRect(10 + i * barW, h - 12 - barH, Math.max(barW - 1, 1), barH);
  });
  ctx.fillStyle = "#777777";
  ctx.font = "10px sans-serif";
  ctx.fillText("-1", 8, h - 2);
  ctx.fillText("+1", w - 18, h - 2);
}
