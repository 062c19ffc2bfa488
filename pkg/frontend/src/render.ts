// Pure HTML/SVG builders for every dashboard view. main.ts mounts the
// strings and wires events; tests assert on the markup directly.

import { esc, seriesChart, sparkline } from './charts.js';
import { layeredLayout, neighborhood } from './layout.js';
import type {
  AlertDoc,
  CaptureSummary,
  DeepDiffDoc,
  DiffDoc,
  EdgeDoc,
  GraphDoc,
  MonitorDoc,
  NodeDoc,
  PipelineDoc,
  SeriesPoints,
  TaggedValue,
} from './types.js';
import { showValue } from './types.js';

export const KIND_COLORS: Record<string, string> = {
  Version: '#8da0cb',
  Artifact: '#66c2a5',
  Snapshot: '#fc8d62',
  Derivation: '#e78ac3',
  Pipeline: '#a6d854',
  Monitor: '#ffd92f',
  Alert: '#e5534b',
};

// ---------------------------------------------------------------------------
// explorer

export function renderExplorer(graph: GraphDoc, rootId: number | null, depth: number): string {
  if (rootId === null) {
    const rows = graph.nodes
      .slice(0, 60)
      .map(
        (n) =>
          `<tr><td>${n.id}</td><td><span class="chip" style="background:${KIND_COLORS[n.kind]}"></span>${n.kind}</td>` +
          `<td>${esc(label(n))}</td>` +
          `<td><a href="#/explorer?node=${n.id}">open</a></td></tr>`,
      )
      .join('');
    const empty = graph.nodes.length === 0 ? '<p class="empty">repository is empty</p>' : '';
    return `<h2>Explorer</h2>${empty}<table class="list"><thead><tr><th>id</th><th>kind</th><th>label</th><th></th></tr></thead><tbody>${rows}</tbody></table>`;
  }
  const { nodes, edges, layers } = neighborhood(graph.nodes, graph.edges, rootId, depth);
  const placed = layeredLayout(nodes, layers);
  const width = 120 + (Math.max(0, ...[...layers.values()]) + 1) * 180;
  const height = 80 + Math.max(0, ...[...placed.values()].map((p) => p.y));
  const edgeMarkup = edges
    .map((e: EdgeDoc) => {
      const a = placed.get(e.from)!;
      const b = placed.get(e.to)!;
      return (
        `<g class="edge"><line x1="${a.x}" y1="${a.y}" x2="${b.x}" y2="${b.y}"/>` +
        `<text x="${(a.x + b.x) / 2}" y="${(a.y + b.y) / 2 - 4}">${e.label}</text></g>`
      );
    })
    .join('');
  const nodeMarkup = [...placed.values()]
    .map(
      (p) =>
        `<g class="node${p.node.id === rootId ? ' selected' : ''}" data-node="${p.node.id}">` +
        `<circle cx="${p.x}" cy="${p.y}" r="17" fill="${KIND_COLORS[p.node.kind] ?? '#ccc'}"/>` +
        `<text class="node-id" x="${p.x}" y="${p.y + 4}" text-anchor="middle">${p.node.id}</text>` +
        `<text class="node-label" x="${p.x}" y="${p.y + 32}" text-anchor="middle">${esc(label(p.node))}</text></g>`,
    )
    .join('');
  return (
    `<h2>Explorer <small>node ${rootId}, ${nodes.length} nodes in view</small></h2>` +
    `<p class="hint">click a node to re-center; <a href="#/explorer">back to index</a></p>` +
    `<svg class="graph" width="${width}" height="${height}">${edgeMarkup}${nodeMarkup}</svg>` +
    `<div id="node-detail"></div>`
  );
}

function label(node: NodeDoc): string {
  const path = node.properties['path'];
  if (path) return showValue(path.value);
  const cmd = node.properties['cmdline'];
  if (cmd) return showValue(cmd.value).slice(0, 40);
  const name = node.properties['name'];
  if (name) return showValue(name.value);
  return node.kind.toLowerCase();
}

export function renderNodeDetail(node: NodeDoc): string {
  const rows = Object.entries(node.properties)
    .map(
      ([key, entry]) =>
        `<tr><td>${esc(key)}</td><td>${esc(showValue(entry.value))}</td><td class="muted">${esc(entry.source)}</td></tr>`,
    )
    .join('');
  return (
    `<h3>${node.kind} ${node.id}</h3>` +
    `<table class="props"><thead><tr><th>key</th><th>value</th><th>source</th></tr></thead><tbody>${rows}</tbody></table>`
  );
}

// ---------------------------------------------------------------------------
// diff

export function renderDiff(doc: DiffDoc, a: number, b: number, deep: boolean): string {
  const rows: string[] = [];
  for (const [key, va, vb] of doc.changed) {
    rows.push(row(key, va, vb, 'changed'));
  }
  for (const key of doc.equal) {
    rows.push(`<tr class="equal"><td>${esc(key)}</td><td colspan="2" class="muted">equal</td></tr>`);
  }
  for (const key of doc.only_a) {
    rows.push(`<tr class="only-a"><td>${esc(key)}</td><td>only in ${a}</td><td></td></tr>`);
  }
  for (const key of doc.only_b) {
    rows.push(`<tr class="only-b"><td>${esc(key)}</td><td></td><td>only in ${b}</td></tr>`);
  }
  const charts = doc.series_pairs.map((pair) => seriesChart(pair)).join('\n');
  const content = doc.content_diff
    ? `<pre class="content-diff">${esc(doc.content_diff.join('\n'))}</pre>`
    : '';
  const deepLink = deep
    ? `<a href="#/diff?a=${a}&b=${b}">shallow</a>`
    : `<a href="#/diff?a=${a}&b=${b}&deep=1">deep</a>`;
  return (
    `<h2>Diff <small>snapshot ${a} vs ${b}</small> <span class="toggle">${deepLink}</span></h2>` +
    `<div class="charts" data-testid="series-charts">${charts}</div>` +
    `<table class="props diff-table"><thead><tr><th>key</th><th>snapshot ${a}</th><th>snapshot ${b}</th></tr></thead><tbody>${rows.join('')}</tbody></table>` +
    content
  );
}

function row(key: string, va: TaggedValue, vb: TaggedValue, cls: string): string {
  return `<tr class="${cls}"><td>${esc(key)}</td><td>${esc(showValue(va))}</td><td>${esc(showValue(vb))}</td></tr>`;
}

export function renderDeepDiff(doc: DeepDiffDoc, a: number, b: number): string {
  const steps = doc.aligned
    .map((entry) => {
      const snapshots = entry.snapshots;
      const changedRows = snapshots.changed
        .map(([key, va, vb]) => row(key, va, vb, 'changed'))
        .join('');
      const derivations = entry.derivations
        ? entry.derivations.changed.map(([key, va, vb]) => row(key, va, vb, 'changed')).join('')
        : '';
      return (
        `<section class="step" data-step="${entry.step}"><h4>step ${entry.step}</h4>` +
        `<table class="props"><tbody>${changedRows}${derivations}</tbody></table></section>`
      );
    })
    .join('');
  const unpaired = [...doc.unpaired_a, ...doc.unpaired_b]
    .map((s) => `<li>snapshot ${s.snapshot} (unpaired)</li>`)
    .join('');
  return (
    `<h2>Deep diff <small>${a} vs ${b}</small> <span class="toggle"><a href="#/diff?a=${a}&b=${b}">shallow</a></span></h2>` +
    `<p>common ancestor: <a href="#/explorer?node=${doc.ancestor}">snapshot ${doc.ancestor}</a>; ` +
    `paths ${doc.path_a.length} vs ${doc.path_b.length} steps</p>` +
    steps +
    (unpaired ? `<ul class="unpaired">${unpaired}</ul>` : '')
  );
}

// ---------------------------------------------------------------------------
// dashboard

export function renderDashboard(
  monitors: MonitorDoc[],
  alerts: AlertDoc[],
  sparklines: Map<number, SeriesPoints>,
): string {
  const monitorRows = monitors
    .map((m) => {
      const points = sparklines.get(m.id) ?? [];
      return (
        `<tr data-monitor="${m.id}"><td>${m.id}</td><td>${esc(m.target)}</td><td>${esc(m.key)}</td>` +
        `<td>${esc(JSON.stringify(m.condition))}</td><td>${m.enabled ? 'on' : 'off'}</td>` +
        `<td>${sparkline(points)}</td>` +
        `<td><button class="rm-monitor" data-id="${m.id}">remove</button></td></tr>`
      );
    })
    .join('');
  const alertRows = alerts
    .map(
      (a) =>
        `<tr class="alert-row" data-alert="${a.id}"><td>${a.id}</td><td>${a.monitor}</td>` +
        `<td>${a.version}</td><td>${esc(a.path)}</td><td>${esc(String(a.observed))}</td>` +
        `<td>${a.prior === null || a.prior === undefined ? '' : esc(String(a.prior))}</td></tr>`,
    )
    .join('');
  return (
    `<h2>Dashboard</h2>` +
    `<form id="monitor-form" class="row-form">` +
    `<input name="target" placeholder="target glob (*.log)" required>` +
    `<input name="key" placeholder="property key (accuracy.last)" required>` +
    `<select name="op"><option>&lt;</option><option>&lt;=</option><option>&gt;</option><option>&gt;=</option><option>==</option><option>!=</option><option value="abs_delta_gt">abs Δ &gt;</option></select>` +
    `<input name="value" placeholder="value" required>` +
    `<button type="submit">add monitor</button></form>` +
    `<table class="list" data-testid="monitors"><thead><tr><th>id</th><th>target</th><th>key</th><th>condition</th><th>enabled</th><th>trend</th><th></th></tr></thead>` +
    `<tbody>${monitorRows}</tbody></table>` +
    `<h3>Alerts <small class="muted">(auto-refreshing)</small></h3>` +
    (alerts.length === 0
      ? '<p class="empty" data-testid="no-alerts">no alerts</p>'
      : `<table class="list" data-testid="alerts"><thead><tr><th>id</th><th>monitor</th><th>version</th><th>artifact</th><th>observed</th><th>prior</th></tr></thead><tbody>${alertRows}</tbody></table>`)
  );
}

// ---------------------------------------------------------------------------
// grid form

export function renderGridForm(
  derivation: NodeDoc | null,
  preview: string[] | null,
  error: string | null,
  runs: CaptureSummary[] | null,
  inFlight: boolean,
): string {
  const command = derivation?.properties['cmdline']
    ? showValue(derivation.properties['cmdline'].value)
    : '';
  const previewList = preview
    ? `<ol class="preview" data-testid="grid-preview">${preview.map((c) => `<li>${esc(c)}</li>`).join('')}</ol>`
    : '';
  const errorBox = error ? `<p class="error" data-testid="grid-error">${esc(error)}</p>` : '';
  const runRows = runs
    ? runs
        .map(
          (r) =>
            `<tr><td>${esc(r.cmdline)}</td><td>${r.version}</td><td>${r.exit_code}</td>` +
            `<td>${r.changed.map((c) => esc(c.path)).join(', ')}</td></tr>`,
        )
        .join('')
    : '';
  const results = runs
    ? `<h3>Runs</h3><table class="list" data-testid="grid-runs"><thead><tr><th>command</th><th>version</th><th>exit</th><th>changed</th></tr></thead><tbody>${runRows}</tbody></table>`
    : '';
  return (
    `<h2>Grid run</h2>` +
    `<form id="grid-form" class="col-form">` +
    `<label>base derivation id <input name="derivation" value="${derivation?.id ?? ''}" required></label>` +
    `<p class="muted">command: <code data-testid="grid-command">${esc(command)}</code></p>` +
    `<label>placeholder <input name="key" placeholder="P" required></label>` +
    `<label>start <input name="start" type="number" step="any" required></label>` +
    `<label>stop <input name="stop" type="number" step="any" required></label>` +
    `<label>step <input name="step" type="number" step="any" required></label>` +
    `<button type="button" id="grid-preview-btn" ${inFlight ? 'disabled' : ''}>preview</button>` +
    `<button type="submit" id="grid-launch-btn" ${inFlight || !preview ? 'disabled' : ''}>launch</button>` +
    `</form>` +
    errorBox +
    previewList +
    results
  );
}

// ---------------------------------------------------------------------------
// pipelines and views

export function renderPipelines(pipelines: PipelineDoc[]): string {
  const rows = pipelines
    .map(
      (p) =>
        `<tr><td>${p.id}</td><td>${esc(p.name)}</td><td>${esc(p.creator)}</td>` +
        `<td>${p.steps.map((s) => `<a href="#/explorer?node=${s}">${s}</a>`).join(' → ')}</td></tr>`,
    )
    .join('');
  return (
    `<h2>Pipelines</h2>` +
    (pipelines.length === 0
      ? '<p class="empty">no pipelines marked</p>'
      : `<table class="list"><thead><tr><th>id</th><th>name</th><th>creator</th><th>steps</th></tr></thead><tbody>${rows}</tbody></table>`)
  );
}

export function renderViews(views: Record<string, { sql: string; mode: string; view_reads: number }>): string {
  const rows = Object.entries(views)
    .map(
      ([name, v]) =>
        `<tr><td>${esc(name)}</td><td>${v.mode}</td><td>${v.view_reads}</td><td><code>${esc(v.sql)}</code></td></tr>`,
    )
    .join('');
  return (
    `<h2>File views</h2>` +
    (rows === ''
      ? '<p class="empty">no views defined</p>'
      : `<table class="list"><thead><tr><th>name</th><th>mode</th><th>reads</th><th>query</th></tr></thead><tbody>${rows}</tbody></table>`)
  );
}

export function renderError(message: string): string {
  return `<div class="banner error" data-testid="api-error">API unreachable or failed: ${esc(message)}</div>`;
}
