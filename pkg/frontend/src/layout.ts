// Breadth-first layered layout from a selected node: layer = hop distance,
// one column per layer, nodes stacked within a column. Full-graph force
// layouts are deliberately out of scope.

import type { EdgeDoc, NodeDoc } from './types.js';

export interface Placed {
  node: NodeDoc;
  x: number;
  y: number;
  layer: number;
}

export const LAYER_W = 170;
export const ROW_H = 64;

export function neighborhood(
  nodes: NodeDoc[],
  edges: EdgeDoc[],
  rootId: number,
  depth: number,
): { nodes: NodeDoc[]; edges: EdgeDoc[]; layers: Map<number, number> } {
  const byId = new Map(nodes.map((n) => [n.id, n]));
  const adjacency = new Map<number, Set<number>>();
  for (const edge of edges) {
    if (!adjacency.has(edge.from)) adjacency.set(edge.from, new Set());
    if (!adjacency.has(edge.to)) adjacency.set(edge.to, new Set());
    adjacency.get(edge.from)!.add(edge.to);
    adjacency.get(edge.to)!.add(edge.from);
  }
  const layers = new Map<number, number>();
  if (byId.has(rootId)) {
    layers.set(rootId, 0);
    let frontier = [rootId];
    for (let hop = 1; hop <= depth && frontier.length > 0; hop++) {
      const next: number[] = [];
      for (const id of frontier) {
        for (const other of adjacency.get(id) ?? []) {
          if (!layers.has(other) && byId.has(other)) {
            layers.set(other, hop);
            next.push(other);
          }
        }
      }
      frontier = next;
    }
  }
  const keptNodes = nodes.filter((n) => layers.has(n.id));
  const keptIds = new Set(keptNodes.map((n) => n.id));
  const keptEdges = edges.filter((e) => keptIds.has(e.from) && keptIds.has(e.to));
  return { nodes: keptNodes, edges: keptEdges, layers };
}

export function layeredLayout(nodes: NodeDoc[], layers: Map<number, number>): Map<number, Placed> {
  const byLayer = new Map<number, NodeDoc[]>();
  for (const node of nodes) {
    const layer = layers.get(node.id) ?? 0;
    if (!byLayer.has(layer)) byLayer.set(layer, []);
    byLayer.get(layer)!.push(node);
  }
  const placed = new Map<number, Placed>();
  for (const [layer, members] of [...byLayer.entries()].sort((a, b) => a[0] - b[0])) {
    members.sort((a, b) => a.id - b.id);
    members.forEach((node, row) => {
      placed.set(node.id, {
        node,
        layer,
        x: 80 + layer * LAYER_W,
        y: 50 + row * ROW_H,
      });
    });
  }
  return placed;
}
