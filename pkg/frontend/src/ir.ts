/**
 * Reader for the pipeline IR documents the service emits.
 *
 * The canonical serializer produces a strict, predictable subset of YAML:
 * two-space block indentation, list items at their key's indent, flow style
 * only for empty {} / [], scalars on one line (the writer never folds).
 * Parsing that subset directly keeps the console dependency-free.
 */

export type IrScalar = string | number | boolean | null;
export type IrValue = IrScalar | IrValue[] | { [key: string]: IrValue };

export interface IrComponent {
  tool_ref: string;
  inputs: Record<string, string>;
  outputs: Record<string, string>;
}

export interface IrTask {
  component: string;
  bindings: Record<string, IrValue>;
  depends_on: string[];
}

export interface PipelineIr {
  ir_version: number;
  name: string;
  parameters: Record<string, IrValue>;
  components: Record<string, IrComponent>;
  tasks: Record<string, IrTask>;
  metadata: Record<string, IrValue>;
}

export class IrParseError extends Error {}

interface Line {
  indent: number;
  text: string;
  raw: string;
}

function splitLines(source: string): Line[] {
  const out: Line[] = [];
  for (const raw of source.split(/\r?\n/)) {
    if (!raw.trim()) continue;
    const indent = raw.length - raw.trimStart().length;
    out.push({ indent, text: raw.trim(), raw });
  }
  return out;
}

function unquoteSingle(text: string): string {
  return text.slice(1, -1).replace(/''/g, "'");
}

function unquoteDouble(text: string): string {
  const body = text.slice(1, -1);
  return body.replace(/\\(.)/g, (_, ch: string) => {
    const map: Record<string, string> = { n: '\n', t: '\t', r: '\r', '"': '"', '\\': '\\', '0': '\0' };
    return map[ch] ?? ch;
  });
}

function parseScalar(text: string): IrValue {
  if (text === '{}') return {};
  if (text === '[]') return [];
  if (text === 'null' || text === '~') return null;
  if (text === 'true') return true;
  if (text === 'false') return false;
  if (text.startsWith("'") && text.endsWith("'") && text.length >= 2) return unquoteSingle(text);
  if (text.startsWith('"') && text.endsWith('"') && text.length >= 2) return unquoteDouble(text);
  if (/^-?\d+$/.test(text)) return Number.parseInt(text, 10);
  if (/^-?\d+\.\d+(e[+-]?\d+)?$/i.test(text)) return Number.parseFloat(text);
  return text;
}

/** Splits "key: value" | "key:" at the first unquoted colon-space. */
function splitKey(text: string, lineNo: number): { key: string; rest: string | null } {
  const match = /^([^:]+):(?:\s(.*))?$/.exec(text);
  if (!match) {
    throw new IrParseError(`line ${lineNo + 1}: expected "key:" or "key: value", got ${text!}`);
  }
  const rest = match[2];
  return { key: match[1].trim(), rest: rest === undefined || rest === '' ? null : rest.trim() };
}

function parseBlock(lines: Line[], start: number, indent: number): { value: IrValue; next: number } {
  if (start >= lines.length || lines[start].indent < indent) {
    return { value: {}, next: start };
  }
  if (lines[start].text.startsWith('- ') || lines[start].text === '-') {
    return parseList(lines, start, lines[start].indent);
  }
  return parseMapping(lines, start, lines[start].indent);
}

function parseList(lines: Line[], start: number, indent: number): { value: IrValue; next: number } {
  const items: IrValue[] = [];
  let i = start;
  while (i < lines.length && lines[i].indent === indent && lines[i].text.startsWith('-')) {
    const inner = lines[i].text.replace(/^-\s?/, '');
    if (!inner) {
      throw new IrParseError(`line ${i + 1}: empty list items are not produced by the writer`);
    }
    if (/^[^:]+:(\s|$)/.test(inner)) {
      // single-line map entry opening a list item; deeper lines extend it
      const { key, rest } = splitKey(inner, i);
      const item: { [key: string]: IrValue } = {};
      if (rest !== null) {
        item[key] = parseScalar(rest);
        i += 1;
      } else {
        const nested = parseBlock(lines, i + 1, indent + 2);
        item[key] = nested.value;
        i = nested.next;
      }
      while (i < lines.length && lines[i].indent === indent + 2 && !lines[i].text.startsWith('- ')) {
        const cont = splitKey(lines[i].text, i);
        if (cont.rest !== null) {
          item[cont.key] = parseScalar(cont.rest);
          i += 1;
        } else {
          const nested = parseBlock(lines, i + 1, indent + 4);
          item[cont.key] = nested.value;
          i = nested.next;
        }
      }
      items.push(item);
    } else {
      items.push(parseScalar(inner));
      i += 1;
    }
  }
  return { value: items, next: i };
}

function parseMapping(lines: Line[], start: number, indent: number): { value: IrValue; next: number } {
  const out: { [key: string]: IrValue } = {};
  let i = start;
  while (i < lines.length && lines[i].indent === indent && !lines[i].text.startsWith('- ')) {
    const { key, rest } = splitKey(lines[i].text, i);
    if (rest !== null) {
      out[key] = parseScalar(rest);
      i += 1;
      continue;
    }
    // bare "key:": nested mapping is indented deeper; a list sits at the same indent
    if (i + 1 < lines.length && lines[i + 1].indent === indent && lines[i + 1].text.startsWith('- ')) {
      const nested = parseList(lines, i + 1, indent);
      out[key] = nested.value;
      i = nested.next;
    } else if (i + 1 < lines.length && lines[i + 1].indent > indent) {
      const nested = parseBlock(lines, i + 1, lines[i + 1].indent);
      out[key] = nested.value;
      i = nested.next;
    } else {
      out[key] = null;
      i += 1;
    }
  }
  return { value: out, next: i };
}

export function parseIrDocument(source: string): Record<string, IrValue> {
  const lines = splitLines(source);
  if (!lines.length || !lines[0].raw.startsWith('ir_version:')) {
    throw new IrParseError('ir_version must be the first key');
  }
  const { value, next } = parseMapping(lines, 0, 0);
  if (next !== lines.length) {
    throw new IrParseError(`line ${next + 1}: trailing content the reader does not understand`);
  }
  return value as Record<string, IrValue>;
}

function asRecord(value: IrValue, what: string): Record<string, IrValue> {
  if (value === null || typeof value !== 'object' || Array.isArray(value)) {
    throw new IrParseError(`${what} must be a mapping`);
  }
  return value;
}

export function parsePipelineIr(source: string): PipelineIr {
  const doc = parseIrDocument(source);
  for (const key of ['ir_version', 'name', 'components', 'tasks', 'metadata', 'parameters']) {
    if (!(key in doc)) {
      throw new IrParseError(`document is missing ${key}`);
    }
  }
  const components: Record<string, IrComponent> = {};
  for (const [cid, raw] of Object.entries(asRecord(doc.components, 'components'))) {
    const comp = asRecord(raw, `component ${cid}`);
    components[cid] = {
      tool_ref: String(comp.tool_ref ?? ''),
      inputs: Object.fromEntries(
        Object.entries(asRecord(comp.inputs ?? {}, 'inputs')).map(([k, v]) => [k, String(v)]),
      ),
      outputs: Object.fromEntries(
        Object.entries(asRecord(comp.outputs ?? {}, 'outputs')).map(([k, v]) => [k, String(v)]),
      ),
    };
  }
  const tasks: Record<string, IrTask> = {};
  for (const [tid, raw] of Object.entries(asRecord(doc.tasks, 'tasks'))) {
    const task = asRecord(raw, `task ${tid}`);
    const deps = Array.isArray(task.depends_on) ? task.depends_on.map(String) : [];
    tasks[tid] = {
      component: String(task.component ?? ''),
      bindings: asRecord(task.bindings ?? {}, 'bindings'),
      depends_on: deps,
    };
  }
  return {
    ir_version: Number(doc.ir_version),
    name: String(doc.name),
    parameters: asRecord(doc.parameters ?? {}, 'parameters'),
    components,
    tasks,
    metadata: asRecord(doc.metadata ?? {}, 'metadata'),
  };
}
