import { describe, expect, it } from 'vitest';

import { buildDagView, dependencyEdges, runEnabled, transitiveReduction } from '../src/dag.js';
import { parsePipelineIr } from '../src/ir.js';
import type { RunRecordView, VerdictView } from '../src/types.js';
import { fixtureJson, fixtureText } from './helpers.js';

const threeTask = parsePipelineIr(fixtureText('pipeline.yaml'));
const fourTask = parsePipelineIr(fixtureText('pipeline_4task.yaml'));
const verdictPass = fixtureJson<VerdictView>('verdict_pass.json');
const verdictRejected = fixtureJson<VerdictView>('verdict_rejected.json');
const runRecord = fixtureJson<RunRecordView>('run_record.json');

describe('pipeline DAG view', () => {
  it('renders the standard 4-task pipeline as 4 nodes and 3 edges', () => {
    const dag = buildDagView(fourTask);
    expect(dag.nodes.map((n) => n.id).sort()).toEqual([
      'extract_1',
      'load',
      'transform_1',
      'validate',
    ]);
    expect(dag.edges).toHaveLength(3);
    expect(dag.edges).toContainEqual({ from: 'extract_1', to: 'transform_1' });
    expect(dag.edges).toContainEqual({ from: 'transform_1', to: 'load' });
    expect(dag.edges).toContainEqual({ from: 'load', to: 'validate' });
  });

  it('renders the recorded session pipeline as a 3-task DAG', () => {
    const dag = buildDagView(threeTask);
    expect(dag.nodes).toHaveLength(3);
    expect(dag.layers).toEqual([['extract_1'], ['load'], ['validate']]);
  });

  it('keeps the full dependency set before reduction', () => {
    const edges = dependencyEdges(threeTask);
    // the audit depends on the extraction too; the drawing drops only what a
    // longer path already implies
    expect(edges).toContainEqual({ from: 'extract_1', to: 'validate' });
    const reduced = transitiveReduction(Object.keys(threeTask.tasks), edges);
    expect(reduced).not.toContainEqual({ from: 'extract_1', to: 'validate' });
  });

  it('colors nodes from the run record', () => {
    const dag = buildDagView(threeTask, verdictPass, runRecord);
    for (const node of dag.nodes) {
      expect(node.runStatus).toBe('succeeded');
    }
  });

  it('marks nodes with safety findings from the verdict', () => {
    const rejected = parsePipelineIr(fixtureText('pipeline_rejected.yaml'));
    const dag = buildDagView(rejected, verdictRejected);
    const load = dag.nodes.find((n) => n.id === 'load');
    expect(load?.safetyFindings).toBeGreaterThan(0);
  });

  it('gates the run control on the verdict', () => {
    expect(runEnabled(verdictPass)).toBe(true);
    expect(runEnabled(verdictRejected)).toBe(false);
    expect(runEnabled(null)).toBe(false);
  });

  it('lists rejected findings for display', () => {
    expect(verdictRejected.findings.length).toBeGreaterThan(0);
    expect(verdictRejected.findings[0].rule_id).toBe('sql.drop');
  });
});
