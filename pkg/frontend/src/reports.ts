/**
 * Report view-models. Values are rendered as the server sent them; the one
 * piece of arithmetic here is a consistency check, not a computation.
 */

import type { EltReportView, VarianceReportView } from './types.js';

export interface ReportRow {
  label: string;
  value: string;
}

export function varianceRows(report: VarianceReportView): ReportRow[] {
  return [
    { label: 'Avg Sim', value: report.avg_sim.toFixed(4) },
    { label: 'Min Sim', value: report.min_sim.toFixed(4) },
    { label: 'Median Sim', value: report.median_sim.toFixed(4) },
    { label: 'Std Sim', value: report.std_sim.toFixed(4) },
    { label: 'Variance', value: report.variance_col.toFixed(4) },
    { label: 'Unique Versions', value: String(report.unique_versions) },
    { label: 'Duplication Gini', value: report.duplication_gini.toFixed(4) },
  ];
}

/** Cross-check that the displayed variance is 1 - avg similarity from the server. */
export function varianceIdentityHolds(report: VarianceReportView): boolean {
  return Math.abs(report.variance_col - (1 - report.avg_sim)) < 1e-9;
}

export function isEmptyVariance(report: VarianceReportView | null): boolean {
  return report === null || report.n_pipelines === 0;
}

export function eltRows(report: EltReportView): ReportRow[] {
  const rows: ReportRow[] = [
    { label: 'SRDEL', value: `${report.srdel.toFixed(1)}%` },
    { label: 'SRDT', value: `${report.srdt.toFixed(1)}%` },
    { label: 'Mode', value: report.mode },
  ];
  for (const task of report.tasks) {
    const transform = task.transform_ok === null ? '-' : task.transform_ok ? 'ok' : 'fail';
    rows.push({
      label: task.task_id,
      value: `${task.extraction_loading_ok ? 'ok' : 'fail'} / ${transform}`,
    });
  }
  return rows;
}
