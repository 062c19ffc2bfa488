// Shapes of the provtrail HTTP API documents the dashboard consumes.

export interface TaggedValue {
  t: 'str' | 'num' | 'bool' | 'list' | 'series' | 'tree';
  v: unknown;
}

export interface PropertyEntry {
  value: TaggedValue;
  source: string;
}

export interface NodeDoc {
  id: number;
  kind: string;
  properties: Record<string, PropertyEntry>;
}

export interface EdgeDoc {
  from: number;
  to: number;
  label: string;
}

export interface GraphDoc {
  nodes: NodeDoc[];
  edges: EdgeDoc[];
}

export type SeriesPoints = [number, number][];

export interface SeriesPair {
  key: string;
  a: SeriesPoints;
  b: SeriesPoints;
}

export interface DiffDoc {
  only_a: string[];
  only_b: string[];
  equal: string[];
  changed: [string, TaggedValue, TaggedValue][];
  series_pairs: SeriesPair[];
  content_diff?: string[];
}

export interface PathStepDoc {
  derivation: number | null;
  snapshot: number;
}

export interface DeepDiffDoc {
  ancestor: number;
  path_a: PathStepDoc[];
  path_b: PathStepDoc[];
  aligned: { step: number; snapshots: DiffDoc; derivations: DiffDoc | null }[];
  unpaired_a: PathStepDoc[];
  unpaired_b: PathStepDoc[];
}

export interface MonitorDoc {
  id: number;
  target: string;
  key: string;
  condition: Record<string, unknown>;
  enabled: boolean;
}

export interface AlertDoc {
  id: number;
  monitor: number;
  version: number;
  path: string;
  observed: unknown;
  prior: unknown;
  timestamp: number;
}

export interface ArtifactDoc {
  id: number;
  path: string;
  tag: string;
  latest_snapshot: number | null;
  snapshots: number[];
}

export interface CaptureSummary {
  version: number;
  derivation: number;
  changed: { path: string; kind: string; snapshot: number | null }[];
  exit_code: number;
  cmdline: string;
}

export interface PipelineDoc {
  id: number;
  name: string;
  creator: string;
  steps: number[];
}

export function untag(value: TaggedValue): unknown {
  switch (value.t) {
    case 'list':
      return (value.v as TaggedValue[]).map(untag);
    case 'tree': {
      const out: Record<string, unknown> = {};
      for (const [k, v] of Object.entries(value.v as Record<string, TaggedValue>)) {
        out[k] = untag(v);
      }
      return out;
    }
    default:
      return value.v;
  }
}

/** Compact one-line rendering of a tagged property value. */
export function showValue(value: TaggedValue): string {
  if (value.t === 'series') {
    const points = value.v as SeriesPoints;
    return `series(${points.length} points)`;
  }
  const plain = untag(value);
  if (typeof plain === 'string') return plain;
  return JSON.stringify(plain);
}
