// Router and DOM wiring. All view state lives in the URL hash so reloading
// reproduces any view; the only timers are the dashboard's alert polling.

import { ApiClient } from './api.js';
import { domainValues, previewCommands } from './grid.js';
import {
  renderDashboard,
  renderDeepDiff,
  renderDiff,
  renderError,
  renderExplorer,
  renderGridForm,
  renderNodeDetail,
  renderPipelines,
  renderViews,
} from './render.js';
import type { CaptureSummary, NodeDoc, SeriesPoints } from './types.js';
import { untag } from './types.js';

const POLL_MS = 2000;

const api = new ApiClient('');
const app = () => document.getElementById('app')!;

let pollTimer: number | null = null;
let gridInFlight = false;

function parseRoute(): { view: string; params: URLSearchParams } {
  const hash = window.location.hash.replace(/^#\/?/, '');
  const [view, query] = hash.split('?');
  return { view: view || 'explorer', params: new URLSearchParams(query ?? '') };
}

async function route(): Promise<void> {
  if (pollTimer !== null) {
    window.clearInterval(pollTimer);
    pollTimer = null;
  }
  const { view, params } = parseRoute();
  document.querySelectorAll('nav a').forEach((a) => {
    a.classList.toggle('active', a.getAttribute('href') === `#/${view}`);
  });
  try {
    if (view === 'explorer') await showExplorer(params);
    else if (view === 'diff') await showDiff(params);
    else if (view === 'dashboard') await showDashboard();
    else if (view === 'grid') await showGrid(params, null, null, null);
    else if (view === 'pipelines') app().innerHTML = renderPipelines((await api.pipelines()).pipelines);
    else if (view === 'views') app().innerHTML = renderViews((await api.fileviews()).fileviews);
    else app().innerHTML = renderError(`unknown view ${view}`);
  } catch (err) {
    app().innerHTML = renderError(err instanceof Error ? err.message : String(err));
  }
}

async function showExplorer(params: URLSearchParams): Promise<void> {
  const node = params.get('node');
  const depth = Number(params.get('depth') ?? '2');
  const graph = await api.graph('', 500);
  app().innerHTML = renderExplorer(graph, node === null ? null : Number(node), depth);
  app()
    .querySelectorAll('.node')
    .forEach((el) => {
      el.addEventListener('click', () => {
        window.location.hash = `#/explorer?node=${el.getAttribute('data-node')}&depth=${depth}`;
      });
    });
  if (node !== null) {
    const detail = await api.node(Number(node));
    const mount = document.getElementById('node-detail');
    if (mount) mount.innerHTML = renderNodeDetail(detail);
  }
}

async function showDiff(params: URLSearchParams): Promise<void> {
  const a = Number(params.get('a'));
  const b = Number(params.get('b'));
  if (!Number.isFinite(a) || !Number.isFinite(b) || params.get('a') === null) {
    app().innerHTML =
      '<h2>Diff</h2><p class="hint">pick two snapshot ids: #/diff?a=&lt;id&gt;&amp;b=&lt;id&gt;</p>';
    return;
  }
  if (params.get('deep')) {
    app().innerHTML = renderDeepDiff(await api.deepdiff(a, b), a, b);
  } else {
    const withContent = params.get('content') === '1';
    app().innerHTML = renderDiff(await api.diff(a, b, withContent), a, b, false);
  }
}

async function showDashboard(): Promise<void> {
  const [monitorsDoc, alertsDoc, artifactsDoc] = await Promise.all([
    api.monitors(),
    api.alerts(),
    api.artifacts(),
  ]);
  // one sparkline per monitor: the watched key on the first matching artifact
  const sparklines = new Map<number, SeriesPoints>();
  for (const monitor of monitorsDoc.monitors) {
    const regex = globToRegex(monitor.target);
    const artifact = artifactsDoc.artifacts.find((a) => regex.test(a.path));
    if (!artifact) continue;
    try {
      const series = await api.timeseries(artifact.path, monitor.key);
      const points: SeriesPoints = [];
      for (const [ts, tagged] of series.points) {
        const value = untag(tagged);
        if (typeof value === 'number') points.push([ts, value]);
      }
      if (points.length > 0) sparklines.set(monitor.id, points);
    } catch {
      // sparkline is best-effort decoration
    }
  }
  app().innerHTML = renderDashboard(monitorsDoc.monitors, alertsDoc.alerts, sparklines);
  bindDashboard();
  pollTimer = window.setInterval(async () => {
    try {
      const fresh = await api.alerts();
      if (parseRoute().view !== 'dashboard') return;
      const current = document.querySelectorAll('.alert-row').length;
      if (fresh.alerts.length !== current) await showDashboard();
    } catch {
      // keep polling; transient failures surface on user actions
    }
  }, POLL_MS);
}

function bindDashboard(): void {
  const form = document.getElementById('monitor-form') as HTMLFormElement | null;
  form?.addEventListener('submit', async (event) => {
    event.preventDefault();
    const data = new FormData(form);
    const op = String(data.get('op'));
    const rawValue = String(data.get('value'));
    const numeric = Number(rawValue);
    const value = Number.isFinite(numeric) && rawValue.trim() !== '' ? numeric : rawValue;
    const condition =
      op === 'abs_delta_gt' ? { abs_delta_gt: value } : { op, value };
    try {
      await api.addMonitor({
        target: String(data.get('target')),
        key: String(data.get('key')),
        condition,
      });
      await showDashboard();
    } catch (err) {
      app().insertAdjacentHTML('afterbegin', renderError(String(err)));
    }
  });
  document.querySelectorAll('.rm-monitor').forEach((btn) => {
    btn.addEventListener('click', async () => {
      await api.removeMonitor(Number(btn.getAttribute('data-id')));
      await showDashboard();
    });
  });
}

async function showGrid(
  params: URLSearchParams,
  preview: string[] | null,
  error: string | null,
  runs: CaptureSummary[] | null,
): Promise<void> {
  const id = params.get('derivation');
  let derivation: NodeDoc | null = null;
  if (id !== null) {
    derivation = await api.node(Number(id));
  }
  app().innerHTML = renderGridForm(derivation, preview, error, runs, gridInFlight);
  bindGrid(params, preview);
}

function readGridForm(form: HTMLFormElement) {
  const data = new FormData(form);
  return {
    derivation: Number(data.get('derivation')),
    key: String(data.get('key')),
    start: Number(data.get('start')),
    stop: Number(data.get('stop')),
    step: Number(data.get('step')),
  };
}

function bindGrid(params: URLSearchParams, preview: string[] | null): void {
  const form = document.getElementById('grid-form') as HTMLFormElement | null;
  if (!form) return;
  document.getElementById('grid-preview-btn')?.addEventListener('click', async () => {
    const spec = readGridForm(form);
    try {
      const node = await api.node(spec.derivation);
      const command = node.properties['cmdline']
        ? String(untag(node.properties['cmdline'].value))
        : '';
      const values = domainValues(spec.start, spec.stop, spec.step);
      const commands = previewCommands(command, [{ placeholder: spec.key, values }]);
      await showGrid(new URLSearchParams({ derivation: String(spec.derivation) }), commands, null, null);
      restoreGridForm(spec);
    } catch (err) {
      await showGrid(params, null, err instanceof Error ? err.message : String(err), null);
      restoreGridForm(spec);
    }
  });
  form.addEventListener('submit', async (event) => {
    event.preventDefault();
    if (gridInFlight) return;
    const spec = readGridForm(form);
    gridInFlight = true; // mutations stay disabled while a launch is in flight
    try {
      const result = await api.gridrun(spec.derivation, [
        { key: spec.key, start: spec.start, stop: spec.stop, step: spec.step },
      ]);
      gridInFlight = false;
      await showGrid(
        new URLSearchParams({ derivation: String(spec.derivation) }),
        preview,
        null,
        result.runs,
      );
    } catch (err) {
      gridInFlight = false;
      await showGrid(params, preview, err instanceof Error ? err.message : String(err), null);
    }
    restoreGridForm(spec);
  });
}

function restoreGridForm(spec: { key: string; start: number; stop: number; step: number }): void {
  const form = document.getElementById('grid-form') as HTMLFormElement | null;
  if (!form) return;
  (form.elements.namedItem('key') as HTMLInputElement).value = spec.key;
  (form.elements.namedItem('start') as HTMLInputElement).value = String(spec.start);
  (form.elements.namedItem('stop') as HTMLInputElement).value = String(spec.stop);
  (form.elements.namedItem('step') as HTMLInputElement).value = String(spec.step);
}

function globToRegex(glob: string): RegExp {
  const escaped = glob.replace(/[.+^${}()|[\]\\]/g, '\\$&').replace(/\*/g, '.*').replace(/\?/g, '.');
  return new RegExp(`^${escaped}$`);
}

window.addEventListener('hashchange', route);
window.addEventListener('DOMContentLoaded', route);
