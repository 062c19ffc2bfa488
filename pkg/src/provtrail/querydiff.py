"""High-level read-only queries over the provenance graph: lineage closures,
blame, shallow and deep diffs, per-artifact time series, and pipeline
marking/browsing.

Deep diff walks both snapshots' ancestries (a producing derivation's USED
snapshots plus PARENT_SNAPSHOT edges) to their lowest common ancestor,
minimizing total distance with ties broken by latest timestamp then smallest
node id, and aligns the two ancestor-to-target paths positionally.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .errors import NoCommonAncestorError, NoPathError, UnknownArtifactError
from .props import TimeSeries, resolve_path, to_tagged, values_equal
from .textdiff import content_diff


@dataclass
class DiffReport:
    only_a: list = field(default_factory=list)
    only_b: list = field(default_factory=list)
    equal: list = field(default_factory=list)
    changed: list = field(default_factory=list)  # (key, value_a, value_b)
    series_pairs: list = field(default_factory=list)  # (key, points_a, points_b)
    content_diff: list | None = None

    def to_json(self):
        doc = {
            "only_a": self.only_a,
            "only_b": self.only_b,
            "equal": self.equal,
            "changed": [[k, to_tagged(a), to_tagged(b)] for k, a, b in self.changed],
            "series_pairs": [
                {"key": k, "a": [[i, v] for i, v in sa], "b": [[i, v] for i, v in sb]}
                for k, sa, sb in self.series_pairs
            ],
        }
        if self.content_diff is not None:
            doc["content_diff"] = self.content_diff
        return doc


@dataclass
class PathStep:
    derivation_id: int | None  # None when the hop is a PARENT_SNAPSHOT edge
    snapshot_id: int

    def to_json(self):
        return {"derivation": self.derivation_id, "snapshot": self.snapshot_id}


@dataclass
class DeepDiffReport:
    ancestor: int
    path_a: list  # PathStep list, ancestor -> a
    path_b: list
    aligned: list  # {"step", "snapshots": DiffReport, "derivations": DiffReport|None}
    unpaired_a: list = field(default_factory=list)
    unpaired_b: list = field(default_factory=list)

    def to_json(self):
        return {
            "ancestor": self.ancestor,
            "path_a": [s.to_json() for s in self.path_a],
            "path_b": [s.to_json() for s in self.path_b],
            "aligned": [
                {
                    "step": e["step"],
                    "snapshots": e["snapshots"].to_json(),
                    "derivations": e["derivations"].to_json() if e["derivations"] else None,
                }
                for e in self.aligned
            ],
            "unpaired_a": [s.to_json() for s in self.unpaired_a],
            "unpaired_b": [s.to_json() for s in self.unpaired_b],
        }


# ----------------------------------------------------------------------
# lineage

def lineage(repo, snapshot_id, depth=None):
    """Upstream closure of a snapshot: producing derivations, their inputs,
    and parent snapshots, truncated at `depth` snapshot generations."""
    repo.snapshot_node(snapshot_id)
    node_ids = {snapshot_id}
    frontier = [snapshot_id]
    level = 0
    while frontier and (depth is None or level < depth):
        next_frontier = []
        for snap in frontier:
            for edge in repo.graph.in_edges(snap, "PRODUCED"):
                node_ids.add(edge.src)
                for used in repo.graph.out_edges(edge.src, "USED"):
                    if used.dst not in node_ids:
                        node_ids.add(used.dst)
                        next_frontier.append(used.dst)
            for edge in repo.graph.out_edges(snap, "PARENT_SNAPSHOT"):
                if edge.dst not in node_ids:
                    node_ids.add(edge.dst)
                    next_frontier.append(edge.dst)
        frontier = next_frontier
        level += 1
    edges = sorted(
        (e.src, e.dst, e.label)
        for nid in node_ids
        for e in repo.graph.out_edges(nid)
        if e.dst in node_ids and e.label in ("PRODUCED", "USED", "PARENT_SNAPSHOT")
    )
    return {"root": snapshot_id, "nodes": sorted(node_ids), "edges": edges}


# ----------------------------------------------------------------------
# blame

def blame(repo, artifact_path, record=None):
    """Latest derivation/version/author that modified an artifact.

    With `record`, answers at record granularity when record lineage covers
    that row, else reports lineage-unavailable.
    """
    artifact = repo.artifact_by_path(artifact_path)
    if artifact is None:
        raise UnknownArtifactError(f"no artifact at path {artifact_path!r}")
    snaps = repo.snapshots_of_artifact(artifact.id)
    derivations = [
        e.src for snap in snaps for e in repo.graph.in_edges(snap.id, "PRODUCED")
    ]
    result = {"artifact": artifact_path, "record": record}
    if not derivations:
        result.update({"derivation": None, "version": None, "author": None})
    else:
        latest = max(derivations)
        versions = [e.dst for e in repo.graph.out_edges(latest, "IN_VERSION")]
        version = versions[0] if versions else None
        author = repo.graph.get_node(version).value("author") if version is not None else None
        result.update({"derivation": latest, "version": version, "author": author})

    if record is None:
        return result

    result["record_lineage"] = None
    result["lineage_available"] = False
    if snaps and derivations:
        producer = repo.graph.get_node(max(derivations))
        tree = producer.value("record_lineage") or {}
        if not tree and producer.value("record_lineage_sidecar"):
            # very large materializations keep lineage in a binary sidecar
            from .capture import read_lineage_sidecar

            try:
                tree = read_lineage_sidecar(
                    repo.meta / "lineage" / producer.value("record_lineage_sidecar")
                )
            except (OSError, ValueError):
                tree = {}
        per_file = tree.get(artifact_path) or {}
        witnesses = per_file.get(str(int(record)))
        if witnesses is not None:
            result["record_lineage"] = [[path, int(idx)] for path, idx in witnesses]
            result["lineage_available"] = True
    return result


# ----------------------------------------------------------------------
# diffs

def diff_property_maps(props_a: dict, props_b: dict) -> DiffReport:
    report = DiffReport()
    keys = sorted(set(props_a) | set(props_b))
    for key in keys:
        in_a = key in props_a
        in_b = key in props_b
        if in_a and not in_b:
            report.only_a.append(key)
            continue
        if in_b and not in_a:
            report.only_b.append(key)
            continue
        va = props_a[key].value
        vb = props_b[key].value
        if isinstance(va, TimeSeries) and isinstance(vb, TimeSeries):
            report.series_pairs.append((key, list(va.points), list(vb.points)))
        if values_equal(va, vb):
            report.equal.append(key)
        else:
            report.changed.append((key, va, vb))
    return report


def shallow_diff(repo, snapshot_a, snapshot_b, include_content=False) -> DiffReport:
    """Join the ingested properties of two snapshots; numeric time series are
    paired by key for charting. Optionally attach a line diff of contents."""
    node_a = repo.snapshot_node(snapshot_a)
    node_b = repo.snapshot_node(snapshot_b)
    report = diff_property_maps(node_a.properties, node_b.properties)
    if include_content:
        data_a = repo.store.get(node_a.value("content"))
        data_b = repo.store.get(node_b.value("content"))
        report.content_diff = content_diff(
            data_a, data_b, f"snapshot:{snapshot_a}", f"snapshot:{snapshot_b}"
        )
    return report


def _ancestor_scan(repo, snapshot_id):
    """BFS over the snapshot ancestry; returns (distances, back-pointers).

    back[p] = (derivation id or None, child snapshot) stepping from ancestor
    p one hop toward the scanned snapshot.
    """
    dist = {snapshot_id: 0}
    back = {}
    queue = deque([snapshot_id])
    while queue:
        current = queue.popleft()
        neighbors = []
        for edge in sorted(repo.graph.in_edges(current, "PRODUCED"), key=lambda e: e.src):
            for used in sorted(repo.graph.out_edges(edge.src, "USED"), key=lambda e: e.dst):
                neighbors.append((used.dst, edge.src))
        for edge in sorted(repo.graph.out_edges(current, "PARENT_SNAPSHOT"), key=lambda e: e.dst):
            neighbors.append((edge.dst, None))
        for parent, via in neighbors:
            if parent not in dist:
                dist[parent] = dist[current] + 1
                back[parent] = (via, current)
                queue.append(parent)
    return dist, back


def _path_from(ancestor, target, back):
    steps = []
    current = ancestor
    while current != target:
        via, nxt = back[current]
        steps.append(PathStep(via, nxt))
        current = nxt
    return steps


def deep_diff(repo, snapshot_a, snapshot_b) -> DeepDiffReport:
    repo.snapshot_node(snapshot_a)
    repo.snapshot_node(snapshot_b)
    dist_a, back_a = _ancestor_scan(repo, snapshot_a)
    dist_b, back_b = _ancestor_scan(repo, snapshot_b)
    common = set(dist_a) & set(dist_b)
    if not common:
        raise NoCommonAncestorError(
            f"snapshots {snapshot_a} and {snapshot_b} share no ancestor"
        )

    def rank(nid):
        ts = repo.graph.get_node(nid).value("timestamp") or 0.0
        return (dist_a[nid] + dist_b[nid], -ts, nid)

    ancestor = min(common, key=rank)
    path_a = _path_from(ancestor, snapshot_a, back_a)
    path_b = _path_from(ancestor, snapshot_b, back_b)

    aligned = []
    for i in range(min(len(path_a), len(path_b))):
        step_a, step_b = path_a[i], path_b[i]
        snap_report = diff_property_maps(
            repo.graph.get_node(step_a.snapshot_id).properties,
            repo.graph.get_node(step_b.snapshot_id).properties,
        )
        if step_a.derivation_id is not None and step_b.derivation_id is not None:
            deriv_report = diff_property_maps(
                repo.graph.get_node(step_a.derivation_id).properties,
                repo.graph.get_node(step_b.derivation_id).properties,
            )
        else:
            deriv_report = None
        aligned.append({"step": i, "snapshots": snap_report, "derivations": deriv_report})

    n = len(aligned)
    return DeepDiffReport(
        ancestor=ancestor,
        path_a=path_a,
        path_b=path_b,
        aligned=aligned,
        unpaired_a=path_a[n:],
        unpaired_b=path_b[n:],
    )


# ----------------------------------------------------------------------
# time series

def property_timeseries(repo, artifact_path, key):
    """One (version timestamp, value) point per snapshot carrying the key."""
    artifact = repo.artifact_by_path(artifact_path)
    if artifact is None:
        raise UnknownArtifactError(f"no artifact at path {artifact_path!r}")
    points = []
    for snap in repo.snapshots_of_artifact(artifact.id):
        value = resolve_path(snap.properties, key)
        if value is None:
            continue
        points.append((snap.value("timestamp") or 0.0, value))
    points.sort(key=lambda p: p[0])
    return points


# ----------------------------------------------------------------------
# pipelines

def _derivations_step(repo, derivation_id):
    """Derivations consuming any snapshot this derivation produced."""
    successors = set()
    for produced in repo.graph.out_edges(derivation_id, "PRODUCED"):
        for used in repo.graph.in_edges(produced.dst, "USED"):
            successors.add(used.src)
    return sorted(successors)


def mark_pipeline(repo, start_derivation, end_derivation, name, creator=None) -> int:
    """Store the shortest USED/PRODUCED-connected derivation path as a Pipeline."""
    for nid in (start_derivation, end_derivation):
        node = repo.graph.get_node(nid)
        if node.kind != "Derivation":
            raise NoPathError(f"node {nid} is a {node.kind}, not a Derivation")
    if start_derivation == end_derivation:
        path = [start_derivation]
    else:
        back = {start_derivation: None}
        queue = deque([start_derivation])
        found = False
        while queue and not found:
            current = queue.popleft()
            for succ in _derivations_step(repo, current):
                if succ in back:
                    continue
                back[succ] = current
                if succ == end_derivation:
                    found = True
                    break
                queue.append(succ)
        if end_derivation not in back:
            raise NoPathError(
                f"no derivation path from {start_derivation} to {end_derivation}"
            )
        path = []
        cur = end_derivation
        while cur is not None:
            path.append(cur)
            cur = back[cur]
        path.reverse()

    with repo.lock():
        pipeline_id = repo.graph.add_node(
            "Pipeline",
            {
                "name": (name, "user"),
                "creator": (creator or repo.author, "user"),
                "steps": ([float(d) for d in path], "user"),
            },
        )
        for derivation in path:
            repo.graph.add_edge(derivation, pipeline_id, "STEP_OF")
    return pipeline_id


def list_pipelines(repo):
    pipelines = []
    for node in repo.graph.nodes("Pipeline"):
        pipelines.append(
            {
                "id": node.id,
                "name": node.value("name"),
                "creator": node.value("creator"),
                "steps": [int(d) for d in node.value("steps") or []],
            }
        )
    return pipelines
