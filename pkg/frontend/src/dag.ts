/**
 * Pipeline DAG view-model: dependency edges from bindings, transitive
 * reduction for a clean drawing, longest-path layering for layout, and
 * per-node badges merged from compile, safety, and run payloads.
 */

import type { IrValue, PipelineIr } from './ir.js';
import type { FindingView, RunRecordView, VerdictView } from './types.js';

export interface DagNode {
  id: string;
  component: string;
  toolRef: string;
  /** layer index in the topological layout, 0 = roots */
  layer: number;
  runStatus: 'succeeded' | 'failed' | 'skipped' | null;
  safetyFindings: number;
}

export interface DagEdge {
  from: string;
  to: string;
}

export interface DagView {
  nodes: DagNode[];
  edges: DagEdge[];
  layers: string[][];
}

function bindingRefs(value: IrValue): string[] {
  if (value === null || typeof value !== 'object') return [];
  if (Array.isArray(value)) {
    return value.flatMap(bindingRefs);
  }
  const record = value as { [key: string]: IrValue };
  if (typeof record.from === 'string') {
    return [record.from.split('.')[0]];
  }
  return [];
}

export function dependencyEdges(ir: PipelineIr): DagEdge[] {
  const edges = new Map<string, DagEdge>();
  for (const [tid, task] of Object.entries(ir.tasks)) {
    const upstream = new Set<string>(task.depends_on);
    for (const binding of Object.values(task.bindings)) {
      for (const ref of bindingRefs(binding)) upstream.add(ref);
    }
    for (const from of upstream) {
      if (from in ir.tasks && from !== tid) {
        edges.set(`${from}->${tid}`, { from, to: tid });
      }
    }
  }
  return [...edges.values()].sort((a, b) => `${a.from}->${a.to}`.localeCompare(`${b.from}->${b.to}`));
}

/** Drops edges already implied by a longer path, so chains draw as chains. */
export function transitiveReduction(taskIds: string[], edges: DagEdge[]): DagEdge[] {
  const adjacency = new Map<string, Set<string>>(taskIds.map((t) => [t, new Set()]));
  for (const edge of edges) adjacency.get(edge.from)?.add(edge.to);

  const reaches = (start: string, goal: string, skip: DagEdge): boolean => {
    const stack = [start];
    const seen = new Set<string>();
    while (stack.length) {
      const node = stack.pop()!;
      if (node === goal) return true;
      if (seen.has(node)) continue;
      seen.add(node);
      for (const next of adjacency.get(node) ?? []) {
        if (node === skip.from && next === skip.to) continue;
        stack.push(next);
      }
    }
    return false;
  };

  return edges.filter((edge) => !reaches(edge.from, edge.to, edge));
}

function layerAssignment(taskIds: string[], edges: DagEdge[]): Map<string, number> {
  const preds = new Map<string, string[]>(taskIds.map((t) => [t, []]));
  for (const edge of edges) preds.get(edge.to)?.push(edge.from);
  const layers = new Map<string, number>();
  const visit = (node: string, trail: Set<string>): number => {
    const known = layers.get(node);
    if (known !== undefined) return known;
    if (trail.has(node)) return 0; // cycles render flat rather than crashing
    trail.add(node);
    const upstream = preds.get(node) ?? [];
    const layer = upstream.length ? 1 + Math.max(...upstream.map((p) => visit(p, trail))) : 0;
    trail.delete(node);
    layers.set(node, layer);
    return layer;
  };
  for (const tid of taskIds) visit(tid, new Set());
  return layers;
}

function taskOfFinding(finding: FindingView): string | null {
  const match = /^\.tasks\.([^.]+)\./.exec(finding.location);
  return match ? match[1] : null;
}

export function buildDagView(
  ir: PipelineIr,
  verdict: VerdictView | null = null,
  run: RunRecordView | null = null,
): DagView {
  const taskIds = Object.keys(ir.tasks).sort();
  const fullEdges = dependencyEdges(ir);
  const edges = transitiveReduction(taskIds, fullEdges);
  const layers = layerAssignment(taskIds, fullEdges);

  const findingCounts = new Map<string, number>();
  for (const finding of verdict?.findings ?? []) {
    const tid = taskOfFinding(finding);
    if (tid) findingCounts.set(tid, (findingCounts.get(tid) ?? 0) + 1);
  }

  const nodes: DagNode[] = taskIds.map((tid) => ({
    id: tid,
    component: ir.tasks[tid].component,
    toolRef: ir.components[ir.tasks[tid].component]?.tool_ref ?? ir.tasks[tid].component,
    layer: layers.get(tid) ?? 0,
    runStatus: run?.tasks[tid]?.status ?? null,
    safetyFindings: findingCounts.get(tid) ?? 0,
  }));

  const maxLayer = Math.max(0, ...nodes.map((n) => n.layer));
  const grouped: string[][] = Array.from({ length: maxLayer + 1 }, () => []);
  for (const node of nodes) grouped[node.layer].push(node.id);
  return { nodes, edges, layers: grouped };
}

/** The run control is only live for a clean or sanitized pipeline. */
export function runEnabled(verdict: VerdictView | null): boolean {
  return verdict !== null && verdict.status !== 'Rejected';
}
