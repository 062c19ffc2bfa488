// SVG chart builders. Pure string output so tests can assert on markup
// without a browser. Charts plot the series_pairs payload verbatim: the
// points are never recomputed or resampled on the client.

import type { SeriesPair, SeriesPoints } from './types.js';

const CHART_W = 460;
const CHART_H = 180;
const PAD = 28;

interface Range {
  min: number;
  max: number;
}

function rangeOf(values: number[]): Range {
  if (values.length === 0) return { min: 0, max: 1 };
  let min = Math.min(...values);
  let max = Math.max(...values);
  if (min === max) {
    min -= 0.5;
    max += 0.5;
  }
  return { min, max };
}

function toPolyline(points: SeriesPoints, xr: Range, yr: Range, w: number, h: number): string {
  const sx = (x: number) => PAD + ((x - xr.min) / (xr.max - xr.min)) * (w - 2 * PAD);
  const sy = (y: number) => h - PAD - ((y - yr.min) / (yr.max - yr.min)) * (h - 2 * PAD);
  return points.map(([x, y]) => `${sx(x).toFixed(1)},${sy(y).toFixed(1)}`).join(' ');
}

/** Two-line chart for one diffed time-series key (side a vs side b). */
export function seriesChart(pair: SeriesPair, w = CHART_W, h = CHART_H): string {
  const xs = [...pair.a, ...pair.b].map((p) => p[0]);
  const ys = [...pair.a, ...pair.b].map((p) => p[1]);
  const xr = rangeOf(xs);
  const yr = rangeOf(ys);
  const lines: string[] = [
    `<svg class="chart" width="${w}" height="${h}" viewBox="0 0 ${w} ${h}" data-key="${esc(pair.key)}">`,
    `<text x="${PAD}" y="14" class="chart-title">${esc(pair.key)}</text>`,
    `<line class="axis" x1="${PAD}" y1="${h - PAD}" x2="${w - PAD}" y2="${h - PAD}"/>`,
    `<line class="axis" x1="${PAD}" y1="${PAD}" x2="${PAD}" y2="${h - PAD}"/>`,
    `<text class="tick" x="${PAD}" y="${h - 8}">${xr.min}</text>`,
    `<text class="tick" x="${w - PAD}" y="${h - 8}" text-anchor="end">${xr.max}</text>`,
    `<text class="tick" x="4" y="${h - PAD}">${fmt(yr.min)}</text>`,
    `<text class="tick" x="4" y="${PAD + 4}">${fmt(yr.max)}</text>`,
  ];
  if (pair.a.length > 0) {
    lines.push(
      `<polyline class="series series-a" data-points="${pair.a.length}" fill="none" points="${toPolyline(pair.a, xr, yr, w, h)}"/>`,
    );
  }
  if (pair.b.length > 0) {
    lines.push(
      `<polyline class="series series-b" data-points="${pair.b.length}" fill="none" points="${toPolyline(pair.b, xr, yr, w, h)}"/>`,
    );
  }
  lines.push('</svg>');
  return lines.join('\n');
}

/** Minimal inline sparkline for the dashboard's monitored properties. */
export function sparkline(points: SeriesPoints, w = 120, h = 28): string {
  if (points.length === 0) {
    return `<svg class="sparkline" width="${w}" height="${h}"></svg>`;
  }
  const xr = rangeOf(points.map((p) => p[0]));
  const yr = rangeOf(points.map((p) => p[1]));
  const sx = (x: number) => ((x - xr.min) / (xr.max - xr.min)) * (w - 4) + 2;
  const sy = (y: number) => h - 2 - ((y - yr.min) / (yr.max - yr.min)) * (h - 4);
  const path = points.map(([x, y]) => `${sx(x).toFixed(1)},${sy(y).toFixed(1)}`).join(' ');
  return (
    `<svg class="sparkline" width="${w}" height="${h}" data-points="${points.length}">` +
    `<polyline fill="none" points="${path}"/></svg>`
  );
}

function fmt(x: number): string {
  return Number.isInteger(x) ? String(x) : x.toFixed(3);
}

export function esc(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}
