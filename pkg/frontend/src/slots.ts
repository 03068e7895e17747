/**
 * Slot badge view-model. Badges mirror the server's slot states exactly; the
 * console never re-derives filled/missing on its own.
 */

import type { SlotStatus, TaskSpecView } from './types.js';

export interface SlotBadge {
  slot: string;
  status: SlotStatus;
  summary: string;
}

const SLOT_ORDER = ['sources', 'destination', 'transforms', 'constraints'] as const;

function summarize(slot: string, spec: TaskSpecView): string {
  switch (slot) {
    case 'sources':
      return spec.sources.map((s) => `${s.kind}:${s.locator}`).join(', ') || '(none)';
    case 'destination':
      return spec.destination
        ? `${spec.destination.kind}:${spec.destination.name || spec.destination.locator}`
        : '(none)';
    case 'transforms':
      if (spec.slots.transforms === 'explicit_none') return 'none requested';
      return spec.transforms.map((t) => t.op).join(' -> ') || '(none)';
    case 'constraints': {
      const entries = Object.entries(spec.constraints);
      return entries.length ? entries.map(([k, v]) => `${k}=${v}`).join(', ') : '(none)';
    }
    default:
      return '';
  }
}

export function slotBadges(spec: TaskSpecView): SlotBadge[] {
  return SLOT_ORDER.map((slot) => ({
    slot,
    status: spec.slots[slot],
    summary: summarize(slot, spec),
  }));
}

export function missingSlots(spec: TaskSpecView): string[] {
  return slotBadges(spec)
    .filter((b) => b.slot !== 'constraints' && b.status === 'unfilled')
    .map((b) => b.slot);
}
