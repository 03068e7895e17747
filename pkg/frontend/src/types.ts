/**
 * Mirrors of the session-service payloads. The console renders these
 * verbatim; it never derives metrics or verdicts of its own.
 */

export type Phase =
  | 'Distill'
  | 'Reason'
  | 'Question'
  | 'Act'
  | 'Observe'
  | 'Done'
  | 'Failed';

export type SlotStatus = 'unfilled' | 'filled' | 'explicit_none';

export interface SourceRef {
  kind: string;
  locator: string;
}

export interface DestinationRef {
  kind: string;
  locator: string;
  name: string;
}

export interface TransformStep {
  op: string;
  params: Record<string, unknown>;
}

export interface TaskSpecView {
  sources: SourceRef[];
  destination: DestinationRef | null;
  transforms: TransformStep[];
  constraints: Record<string, string>;
  slots: Record<string, SlotStatus>;
}

export interface Turn {
  role: 'user' | 'assistant' | 'system';
  text: string;
  timestamp: number;
}

export interface TranscriptView {
  turns: Turn[];
  distilled_summary: string | null;
}

export interface SessionView {
  id: string;
  phase: Phase;
  question_count: number;
  spec: TaskSpecView;
  transcript: TranscriptView;
  defaults_applied: string[];
  failure: string | null;
  pipeline_id: string | null;
  verdict_status: 'Pass' | 'Sanitized' | 'Rejected' | null;
  message: string;
}

export interface FindingView {
  rule_id: string;
  location: string;
  matched_text: string;
  severity: 'fatal' | 'sanitizable';
}

export interface VerdictView {
  status: 'Pass' | 'Sanitized' | 'Rejected';
  findings: FindingView[];
  sanitized_pipeline: string | null;
}

export interface TaskResultView {
  status: 'succeeded' | 'failed' | 'skipped';
  reason: string | null;
  rows_in: number | null;
  rows_out: number | null;
}

export interface RunRecordView {
  pipeline: string;
  tasks: Record<string, TaskResultView>;
  audit: { rows_extracted: number; rows_loaded: number; passed: boolean } | null;
  succeeded: boolean;
  wall_time_s: number;
}

export interface ChartSpec {
  kind: 'bar' | 'line';
  x: string | null;
  y: string;
  data: Record<string, unknown>[];
  title: string;
}

export interface SummaryView {
  table: string;
  chart: ChartSpec;
}

export interface VarianceReportView {
  avg_sim: number;
  min_sim: number;
  median_sim: number;
  std_sim: number;
  variance_col: number;
  unique_versions: number;
  duplication_gini: number;
  n_pipelines: number;
}

export interface EltTaskOutcome {
  task_id: string;
  extraction_loading_ok: boolean;
  transform_ok: boolean | null;
  detail: string;
}

export interface EltReportView {
  mode: string;
  srdel: number;
  srdt: number;
  tasks: EltTaskOutcome[];
}
