/**
 * Single-page console wiring. One active session per tab; everything shown
 * is a server payload re-rendered, so a refresh reproduces the same view.
 */

import { ApiClient } from './api.js';
import { ChatController } from './chat.js';
import { buildDagView, runEnabled, type DagView } from './dag.js';
import { renderChartSvg } from './chart.js';
import { parsePipelineIr } from './ir.js';
import { slotBadges } from './slots.js';
import { varianceIdentityHolds, varianceRows } from './reports.js';
import type { RunRecordView, SessionView, VerdictView } from './types.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function renderDagSvg(dag: DagView): string {
  const layerW = 170;
  const rowH = 64;
  const width = Math.max(1, dag.layers.length) * layerW + 40;
  const height = Math.max(1, Math.max(...dag.layers.map((l) => l.length), 1)) * rowH + 30;
  const positions = new Map<string, { x: number; y: number }>();
  dag.layers.forEach((layer, xi) => {
    layer.forEach((tid, yi) => {
      positions.set(tid, { x: 30 + xi * layerW, y: 30 + yi * rowH });
    });
  });
  const parts = [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" class="dag">`,
  ];
  for (const edge of dag.edges) {
    const a = positions.get(edge.from);
    const b = positions.get(edge.to);
    if (!a || !b) continue;
    parts.push(
      `<line class="dag-edge" x1="${a.x + 110}" y1="${a.y + 18}" x2="${b.x}" y2="${b.y + 18}"/>`,
    );
  }
  for (const node of dag.nodes) {
    const pos = positions.get(node.id)!;
    const status = node.runStatus ?? 'pending';
    parts.push(
      `<g class="dag-node status-${status}" data-task="${node.id}">` +
        `<rect x="${pos.x}" y="${pos.y}" rx="6" width="110" height="36"/>` +
        `<text x="${pos.x + 55}" y="${pos.y + 15}" text-anchor="middle">${node.id}</text>` +
        `<text x="${pos.x + 55}" y="${pos.y + 29}" text-anchor="middle" class="tool">${node.toolRef}</text>` +
        `</g>`,
    );
  }
  parts.push('</svg>');
  return parts.join('');
}

export function startApp(): void {
  const baseInput = el<HTMLInputElement>('base-url');
  baseInput.value = `${window.location.protocol}//${window.location.hostname}:8736`;
  let api = new ApiClient(baseInput.value);
  let chat = new ChatController(api);
  let verdict: VerdictView | null = null;
  let run: RunRecordView | null = null;

  baseInput.addEventListener('change', () => {
    api = new ApiClient(baseInput.value);
    chat = new ChatController(api);
  });

  const input = el<HTMLInputElement>('chat-input');
  const send = el<HTMLButtonElement>('chat-send');
  const transcript = el<HTMLDivElement>('transcript');
  const toast = el<HTMLDivElement>('toast');
  const slots = el<HTMLDivElement>('slots');
  const dagBox = el<HTMLDivElement>('dag');
  const verdictBadge = el<HTMLSpanElement>('verdict-badge');
  const runButton = el<HTMLButtonElement>('run-button');
  const runOut = el<HTMLPreElement>('run-record');
  const reportsBox = el<HTMLDivElement>('variance');

  function renderSession(session: SessionView | null): void {
    send.disabled = !chat.canSend(input.value);
    input.disabled = !chat.inputEnabled();
    toast.textContent = chat.state.toast ?? chat.state.error ?? '';
    toast.hidden = !toast.textContent;
    if (!session) return;
    transcript.innerHTML = session.transcript.turns
      .map((t) => `<p class="turn turn-${t.role}"><b>${t.role}</b> ${t.text}</p>`)
      .join('');
    slots.innerHTML = slotBadges(session.spec)
      .map((b) => `<span class="badge badge-${b.status}" data-slot="${b.slot}">${b.slot}: ${b.summary} [${b.status}]</span>`)
      .join(' ');
    if (session.pipeline_id) {
      void showPipeline(session.pipeline_id);
    }
  }

  async function showPipeline(pid: string): Promise<void> {
    const yamlText = await api.getPipelineYaml(pid);
    const ir = parsePipelineIr(yamlText);
    verdict = await api.validatePipeline(pid);
    verdictBadge.textContent = verdict.status;
    verdictBadge.className = `badge verdict-${verdict.status.toLowerCase()}`;
    runButton.disabled = !runEnabled(verdict);
    runButton.onclick = async () => {
      run = await api.runPipeline(pid, 4);
      runOut.textContent = JSON.stringify(run, null, 2);
      dagBox.innerHTML = renderDagSvg(buildDagView(ir, verdict, run));
    };
    dagBox.innerHTML = renderDagSvg(buildDagView(ir, verdict, run));
  }

  input.addEventListener('input', () => {
    send.disabled = !chat.canSend(input.value);
  });
  send.addEventListener('click', async () => {
    const text = input.value;
    input.value = '';
    renderSession(await chat.send(text));
  });

  el<HTMLButtonElement>('variance-run').addEventListener('click', async () => {
    const prompt = el<HTMLInputElement>('variance-prompt').value;
    const report = await api.evalVariance(prompt, 20);
    const rows = varianceRows(report)
      .map((r) => `<tr><td>${r.label}</td><td>${r.value}</td></tr>`)
      .join('');
    const consistent = varianceIdentityHolds(report) ? '' : ' (inconsistent with avg!)';
    reportsBox.innerHTML = `<table>${rows}</table><p>variance = 1 - avg similarity${consistent}</p>`;
  });

  el<HTMLButtonElement>('summary-run').addEventListener('click', async () => {
    const pid = el<HTMLInputElement>('summary-pid').value;
    const groupBy = el<HTMLInputElement>('summary-group').value;
    const summary = await api.getSummary(pid, groupBy);
    el<HTMLDivElement>('summary-chart').innerHTML = renderChartSvg(summary.chart);
    el<HTMLPreElement>('summary-table').textContent = summary.table;
  });

  renderSession(null);
}

if (typeof document !== 'undefined' && document.getElementById('chat-input')) {
  startApp();
}
