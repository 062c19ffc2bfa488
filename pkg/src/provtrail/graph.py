"""Embedded property graph persisted through an append-only JSON-lines log.

Every mutation is one JSON record appended to ``graph.log`` and flushed
before the call returns; replaying the log from byte zero reconstructs the
graph exactly. A sidecar ``graph.idx`` caches the materialized graph plus the
log offset it covers so reopening a large repository only replays the tail.
The index is a pure cache: if it is missing, stale or corrupt, the store
falls back to a full replay.

Node kinds and edge labels are a closed vocabulary; edges are checked
against the endpoint-kind table at insert time.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field

from .errors import EdgeKindError, PatternError, StorageError, UnknownNodeError
from .props import Property, from_tagged, normalize, to_tagged, values_equal

NODE_KINDS = ("Version", "Artifact", "Snapshot", "Derivation", "Pipeline", "Monitor", "Alert")

# label -> (source kind, target kind)
EDGE_RULES = {
    "PARENT_VERSION": ("Version", "Version"),
    "PARENT_SNAPSHOT": ("Snapshot", "Snapshot"),
    "HAS_SNAPSHOT": ("Version", "Snapshot"),
    "OF_ARTIFACT": ("Snapshot", "Artifact"),
    "USED": ("Derivation", "Snapshot"),
    "PRODUCED": ("Derivation", "Snapshot"),
    "IN_VERSION": ("Derivation", "Version"),
    "STEP_OF": ("Derivation", "Pipeline"),
}

MAX_PATTERN_HOPS = 4
INDEX_INTERVAL = 500


@dataclass
class Node:
    id: int
    kind: str
    properties: dict = field(default_factory=dict)

    def value(self, key, default=None):
        prop = self.properties.get(key)
        return prop.value if prop is not None else default


@dataclass
class Edge:
    src: int
    dst: int
    label: str
    properties: dict = field(default_factory=dict)


def _props_to_json(properties):
    return {k: {"v": to_tagged(p.value), "src": p.source} for k, p in properties.items()}


def _props_from_json(doc):
    return {k: Property(from_tagged(e["v"]), e["src"]) for k, e in doc.items()}


class GraphStore:
    def __init__(self, log_path, index_path=None, writable=True):
        self.log_path = str(log_path)
        self.index_path = str(index_path) if index_path else None
        self.writable = writable
        self._nodes: dict[int, Node] = {}
        self._edges: list[Edge] = []
        self._out: dict[int, list[int]] = {}
        self._in: dict[int, list[int]] = {}
        self._next_id = 1
        self._offset = 0  # bytes of log consumed
        self._since_index = 0
        self._lock = threading.RLock()
        self._fh = None
        self._load()

    # ------------------------------------------------------------------
    # persistence

    def _load(self):
        if self.index_path and os.path.exists(self.index_path):
            try:
                self._load_index()
            except (OSError, ValueError, KeyError):
                self._reset()
        self._replay_from(self._offset)
        if self.writable:
            self._repair_tail()
            self._fh = open(self.log_path, "a", encoding="utf-8")

    def _reset(self):
        self._nodes = {}
        self._edges = []
        self._out = {}
        self._in = {}
        self._next_id = 1
        self._offset = 0

    def _load_index(self):
        with open(self.index_path, encoding="utf-8") as fh:
            doc = json.load(fh)
        log_size = os.path.getsize(self.log_path) if os.path.exists(self.log_path) else 0
        if doc.get("version") != 1 or doc["log_bytes"] > log_size:
            raise ValueError("stale index")
        self._reset()
        for nd in doc["nodes"]:
            node = Node(nd["id"], nd["kind"], _props_from_json(nd["props"]))
            self._nodes[node.id] = node
        for ed in doc["edges"]:
            self._index_edge(Edge(ed["from"], ed["to"], ed["label"], _props_from_json(ed["props"])))
        self._next_id = doc["next_id"]
        self._offset = doc["log_bytes"]

    def _replay_from(self, offset):
        """Apply complete log lines after `offset`; leave any torn tail unconsumed."""
        if not os.path.exists(self.log_path):
            return
        with open(self.log_path, "rb") as fh:
            fh.seek(offset)
            while True:
                line = fh.readline()
                if not line:
                    break
                if not line.endswith(b"\n"):
                    break  # torn tail from a crashed writer
                try:
                    record = json.loads(line)
                except ValueError:
                    break
                self._apply(record)
                self._offset += len(line)

    def _repair_tail(self):
        """Truncate an unacknowledged torn tail before appending (writer only)."""
        if os.path.exists(self.log_path) and os.path.getsize(self.log_path) > self._offset:
            with open(self.log_path, "rb+") as fh:
                fh.truncate(self._offset)

    def _apply(self, record):
        op = record["op"]
        if op == "add_node":
            node = Node(record["id"], record["kind"], _props_from_json(record["props"]))
            self._nodes[node.id] = node
            self._next_id = max(self._next_id, node.id + 1)
        elif op == "add_edge":
            self._index_edge(
                Edge(record["from"], record["to"], record["label"], _props_from_json(record["props"]))
            )
        elif op == "set_prop":
            node = self._nodes[record["id"]]
            node.properties[record["key"]] = Property(from_tagged(record["v"]), record["src"])
        else:
            raise StorageError(f"unknown log record op: {op!r}")

    def _index_edge(self, edge):
        idx = len(self._edges)
        self._edges.append(edge)
        self._out.setdefault(edge.src, []).append(idx)
        self._in.setdefault(edge.dst, []).append(idx)

    def _append(self, record):
        if not self.writable:
            raise StorageError("graph store opened read-only")
        line = json.dumps(record, separators=(",", ":")) + "\n"
        self._fh.write(line)
        self._fh.flush()
        self._offset += len(line.encode("utf-8"))
        self._since_index += 1
        if self.index_path and self._since_index >= INDEX_INTERVAL:
            self.write_index()

    def refresh(self):
        """Pick up records appended by another process since our last read."""
        with self._lock:
            self._replay_from(self._offset)

    def sync_for_write(self):
        """Catch up with the log and clear any torn tail. Call under the repo lock."""
        with self._lock:
            self.refresh()
            if self._fh is not None:
                self._fh.close()
            self._repair_tail()
            self._fh = open(self.log_path, "a", encoding="utf-8")

    def write_index(self):
        if not self.index_path:
            return
        with self._lock:
            doc = {
                "version": 1,
                "log_bytes": self._offset,
                "next_id": self._next_id,
                "nodes": [
                    {"id": n.id, "kind": n.kind, "props": _props_to_json(n.properties)}
                    for n in self.nodes()
                ],
                "edges": [
                    {"from": e.src, "to": e.dst, "label": e.label, "props": _props_to_json(e.properties)}
                    for e in self._edges
                ],
            }
            tmp = self.index_path + ".tmp"
            with open(tmp, "w", encoding="utf-8") as fh:
                json.dump(doc, fh)
            os.replace(tmp, self.index_path)
            self._since_index = 0

    def flush(self):
        with self._lock:
            if self._fh is not None:
                self._fh.flush()
                os.fsync(self._fh.fileno())

    def close(self):
        with self._lock:
            if self._fh is not None:
                self.flush()
                if self.index_path:
                    self.write_index()
                self._fh.close()
                self._fh = None

    # ------------------------------------------------------------------
    # mutation

    def add_node(self, kind, properties=None) -> int:
        if kind not in NODE_KINDS:
            raise StorageError(f"unknown node kind: {kind!r}")
        props = {}
        for key, (value, source) in (properties or {}).items():
            props[key] = Property(normalize(value), source)
        with self._lock:
            node_id = self._next_id
            self._next_id += 1
            node = Node(node_id, kind, props)
            self._append({"op": "add_node", "id": node_id, "kind": kind, "props": _props_to_json(props)})
            self._nodes[node_id] = node
            return node_id

    def add_edge(self, src, dst, label, properties=None):
        if label not in EDGE_RULES:
            raise EdgeKindError(f"unknown edge label: {label!r}")
        with self._lock:
            src_node = self.get_node(src)
            dst_node = self.get_node(dst)
            want_src, want_dst = EDGE_RULES[label]
            if src_node.kind != want_src or dst_node.kind != want_dst:
                raise EdgeKindError(
                    f"{label} requires {want_src}->{want_dst}, got {src_node.kind}->{dst_node.kind}"
                )
            props = {}
            for key, (value, source) in (properties or {}).items():
                props[key] = Property(normalize(value), source)
            self._append(
                {"op": "add_edge", "from": src, "to": dst, "label": label, "props": _props_to_json(props)}
            )
            self._index_edge(Edge(src, dst, label, props))

    def set_property(self, node_id, key, value, source):
        with self._lock:
            node = self.get_node(node_id)
            prop = Property(normalize(value), source)
            self._append(
                {"op": "set_prop", "id": node_id, "key": key, "v": to_tagged(prop.value), "src": source}
            )
            node.properties[key] = prop

    # ------------------------------------------------------------------
    # reads

    def get_node(self, node_id) -> Node:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise UnknownNodeError(f"no node with id {node_id}") from None

    def has_node(self, node_id) -> bool:
        return node_id in self._nodes

    def nodes(self, kind=None):
        for node_id in sorted(self._nodes):
            node = self._nodes[node_id]
            if kind is None or node.kind == kind:
                yield node

    def count(self, kind=None) -> int:
        if kind is None:
            return len(self._nodes)
        return sum(1 for n in self._nodes.values() if n.kind == kind)

    def edges(self, label=None):
        for edge in self._edges:
            if label is None or edge.label == label:
                yield edge

    def out_edges(self, node_id, label=None):
        return [
            self._edges[i]
            for i in self._out.get(node_id, ())
            if label is None or self._edges[i].label == label
        ]

    def in_edges(self, node_id, label=None):
        return [
            self._edges[i]
            for i in self._in.get(node_id, ())
            if label is None or self._edges[i].label == label
        ]

    def state(self):
        """Serializable snapshot of the whole graph, for isomorphism checks."""
        return {
            "nodes": {
                n.id: (n.kind, _props_to_json(n.properties)) for n in self.nodes()
            },
            "edges": sorted(
                (e.src, e.dst, e.label, json.dumps(_props_to_json(e.properties), sort_keys=True))
                for e in self._edges
            ),
        }

    # ------------------------------------------------------------------
    # pattern matching

    def match_pattern(self, pattern):
        """Match a bounded path pattern; see README for the pattern schema.

        Returns the sorted list of binding tuples, or an int when the pattern
        requests a terminal COUNT aggregation.
        """
        hops, want_count = _validate_pattern(pattern)
        anchor = hops[0]
        bindings = [
            (node.id,)
            for node in self.nodes(anchor.get("kind"))
            if self._node_matches(node, anchor)
        ]
        for hop in hops[1:]:
            label = hop["label"]
            direction = hop["direction"]
            extended = []
            for binding in bindings:
                current = binding[-1]
                if direction == "out":
                    neighbors = {e.dst for e in self.out_edges(current, label)}
                else:
                    neighbors = {e.src for e in self.in_edges(current, label)}
                for nid in sorted(neighbors):
                    node = self._nodes[nid]
                    if hop.get("kind") and node.kind != hop["kind"]:
                        continue
                    if self._node_matches(node, hop):
                        extended.append(binding + (nid,))
            bindings = extended
        bindings.sort()
        if want_count:
            return len(bindings)
        return bindings

    def _node_matches(self, node, hop):
        if hop.get("kind") and node.kind != hop["kind"]:
            return False
        for key, want in (hop.get("props") or {}).items():
            prop = node.properties.get(key)
            if prop is None:
                return False
            if isinstance(want, dict) and "op" in want:
                op = want["op"]
                if op == "eq":
                    if not values_equal(prop.value, normalize(want["value"])):
                        return False
                elif op == "suffix":
                    if not (isinstance(prop.value, str) and prop.value.endswith(str(want["value"]))):
                        return False
                else:
                    raise PatternError(f"unknown property filter op: {op!r}")
            else:
                if not values_equal(prop.value, normalize(want)):
                    return False
        return True


def _validate_pattern(pattern):
    if isinstance(pattern, dict):
        hops = pattern.get("hops")
        want_count = bool(pattern.get("count", False))
    else:
        hops = pattern
        want_count = False
    if not isinstance(hops, list) or not hops:
        raise PatternError("pattern must contain a nonempty 'hops' list")
    if len(hops) - 1 > MAX_PATTERN_HOPS:
        raise PatternError(f"pattern exceeds {MAX_PATTERN_HOPS} hops")
    for i, hop in enumerate(hops):
        if not isinstance(hop, dict):
            raise PatternError("each pattern element must be an object")
        kind = hop.get("kind")
        if kind is not None and kind not in NODE_KINDS:
            raise PatternError(f"unknown node kind: {kind!r}")
        if i == 0:
            if "label" in hop or "direction" in hop:
                raise PatternError("the anchor element must not carry label/direction")
        else:
            if hop.get("label") not in EDGE_RULES:
                raise PatternError(f"hop {i} has unknown edge label: {hop.get('label')!r}")
            if hop.get("direction") not in ("out", "in"):
                raise PatternError(f"hop {i} direction must be 'out' or 'in'")
    return hops, want_count
