/**
 * Renders chart-spec JSON (bar/line) to an SVG string. A spec with no data
 * renders an empty-state message instead of an axis-only chart.
 */

import type { ChartSpec } from './types.js';

export interface ChartOptions {
  width?: number;
  height?: number;
}

const MARGIN = { top: 28, right: 16, bottom: 42, left: 48 };

function esc(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

export function emptyStateMessage(spec: ChartSpec): string {
  return `No data to chart for ${spec.title}`;
}

export function renderChartSvg(spec: ChartSpec, options: ChartOptions = {}): string {
  const width = options.width ?? 480;
  const height = options.height ?? 280;
  if (!spec.data.length) {
    return (
      `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" role="img">` +
      `<text class="empty-state" x="${width / 2}" y="${height / 2}" text-anchor="middle">` +
      `${esc(emptyStateMessage(spec))}</text></svg>`
    );
  }

  const innerW = width - MARGIN.left - MARGIN.right;
  const innerH = height - MARGIN.top - MARGIN.bottom;
  const values = spec.data.map((row) => Number(row[spec.y] ?? 0));
  const labels = spec.data.map((row, i) => (spec.x ? String(row[spec.x]) : String(i)));
  const maxValue = Math.max(...values, 0) || 1;

  const parts: string[] = [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" role="img">`,
    `<title>${esc(spec.title)}</title>`,
    `<text x="${width / 2}" y="18" text-anchor="middle" class="chart-title">${esc(spec.title)}</text>`,
    `<line x1="${MARGIN.left}" y1="${MARGIN.top + innerH}" x2="${MARGIN.left + innerW}" y2="${MARGIN.top + innerH}" class="axis"/>`,
    `<line x1="${MARGIN.left}" y1="${MARGIN.top}" x2="${MARGIN.left}" y2="${MARGIN.top + innerH}" class="axis"/>`,
  ];

  const slot = innerW / values.length;
  if (spec.kind === 'bar') {
    values.forEach((value, i) => {
      const barH = (value / maxValue) * innerH;
      const barW = Math.max(4, slot * 0.6);
      const x = MARGIN.left + slot * i + (slot - barW) / 2;
      const y = MARGIN.top + innerH - barH;
      parts.push(`<rect class="bar" x="${x.toFixed(1)}" y="${y.toFixed(1)}" width="${barW.toFixed(1)}" height="${barH.toFixed(1)}"/>`);
    });
  } else {
    const points = values
      .map((value, i) => {
        const x = MARGIN.left + slot * i + slot / 2;
        const y = MARGIN.top + innerH - (value / maxValue) * innerH;
        return `${x.toFixed(1)},${y.toFixed(1)}`;
      })
      .join(' ');
    parts.push(`<polyline class="line" fill="none" points="${points}"/>`);
  }

  labels.forEach((label, i) => {
    const x = MARGIN.left + slot * i + slot / 2;
    parts.push(
      `<text class="tick" x="${x.toFixed(1)}" y="${MARGIN.top + innerH + 16}" text-anchor="middle">${esc(label)}</text>`,
    );
  });
  parts.push(`<text class="tick" x="${MARGIN.left - 8}" y="${MARGIN.top + 4}" text-anchor="end">${maxValue}</text>`);
  parts.push('</svg>');
  return parts.join('');
}

export function countMarks(svg: string, kind: 'bar' | 'line'): number {
  const pattern = kind === 'bar' ? /<rect class="bar"/g : /<polyline class="line"/g;
  return (svg.match(pattern) ?? []).length;
}
