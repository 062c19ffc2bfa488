"""Condition monitors over evolving artifact properties.

Monitors are persisted as Monitor nodes and evaluated inside the capture
critical section, on every new version (implicit or explicit). A violation
mints an Alert node; at most one alert exists per (monitor, version,
artifact path).
"""

from __future__ import annotations

import fnmatch
import time
from dataclasses import dataclass

from .errors import MonitorError, UnknownNodeError
from .props import resolve_path

THRESHOLD_OPS = ("<", "<=", ">", ">=", "==", "!=")


@dataclass
class MonitorSpec:
    target: str  # artifact path or glob
    key: str  # dot-path property key; `last` selects the final series point
    condition: dict  # {"op": .., "value": ..} or {"abs_delta_gt": ..}
    enabled: bool = True
    id: int | None = None

    def validate(self):
        if not self.target:
            raise MonitorError("monitor target must be nonempty")
        try:
            fnmatch.translate(self.target)
        except Exception as exc:
            raise MonitorError(f"bad target glob: {exc}") from exc
        if not self.key:
            raise MonitorError("monitor key must be nonempty")
        cond = self.condition or {}
        if set(cond) == {"abs_delta_gt"}:
            if not isinstance(cond["abs_delta_gt"], (int, float)) or isinstance(cond["abs_delta_gt"], bool):
                raise MonitorError("abs_delta_gt needs a numeric value")
        elif set(cond) == {"op", "value"}:
            if cond["op"] not in THRESHOLD_OPS:
                raise MonitorError(f"unknown condition op: {cond['op']!r}")
        else:
            raise MonitorError(f"condition must be op/value or abs_delta_gt, got {sorted(cond)}")


def register_monitor(repo, spec: MonitorSpec) -> int:
    spec.validate()
    with repo.lock():
        return repo.graph.add_node(
            "Monitor",
            {
                "target": (spec.target, "monitor"),
                "key": (spec.key, "monitor"),
                "condition": (spec.condition, "monitor"),
                "enabled": (spec.enabled, "monitor"),
            },
        )


def remove_monitor(repo, monitor_id):
    with repo.lock():
        node = repo.graph.get_node(monitor_id)
        if node.kind != "Monitor" or node.value("removed"):
            raise UnknownNodeError(f"no monitor with id {monitor_id}")
        repo.graph.set_property(monitor_id, "removed", True, "monitor")


def set_enabled(repo, monitor_id, enabled):
    with repo.lock():
        node = repo.graph.get_node(monitor_id)
        if node.kind != "Monitor" or node.value("removed"):
            raise UnknownNodeError(f"no monitor with id {monitor_id}")
        repo.graph.set_property(monitor_id, "enabled", bool(enabled), "monitor")


def list_monitors(repo) -> list[MonitorSpec]:
    specs = []
    for node in repo.graph.nodes("Monitor"):
        if node.value("removed"):
            continue
        cond = node.value("condition") or {}
        if "value" in cond or "abs_delta_gt" in cond:
            cond = {k: v for k, v in cond.items()}
        specs.append(
            MonitorSpec(
                target=node.value("target"),
                key=node.value("key"),
                condition=cond,
                enabled=bool(node.value("enabled")),
                id=node.id,
            )
        )
    return specs


def evaluate_on_version(repo, version_id) -> list[int]:
    """Check every enabled monitor against the artifacts changed in a version.

    Idempotent: re-evaluating the same version adds no duplicate alerts.
    """
    with repo.lock():
        return _evaluate_locked(repo, version_id)


def _evaluate_locked(repo, version_id):
    version = repo.graph.get_node(version_id)
    changed_snapshots = [
        repo.graph.get_node(e.dst) for e in repo.graph.out_edges(version_id, "HAS_SNAPSHOT")
    ]
    if not changed_snapshots:
        return []
    alerts = []
    for spec in list_monitors(repo):
        if not spec.enabled:
            continue
        for snap in changed_snapshots:
            path = snap.value("path")
            if not fnmatch.fnmatch(path, spec.target):
                continue
            observed = resolve_path(snap.properties, spec.key)
            if observed is None:
                continue
            violated, prior = _check(repo, spec, snap, observed)
            if not violated:
                continue
            if _alert_exists(repo, spec.id, version_id, path):
                continue
            props = {
                "monitor_id": (float(spec.id), "monitor"),
                "version_id": (float(version_id), "monitor"),
                "path": (path, "monitor"),
                "observed": (observed, "monitor"),
                "timestamp": (version.value("timestamp") or time.time(), "monitor"),
            }
            if prior is not None:
                props["prior"] = (prior, "monitor")
            alerts.append(repo.graph.add_node("Alert", props))
    return alerts


def _check(repo, spec, snap, observed):
    cond = spec.condition
    if "abs_delta_gt" in cond:
        parents = repo.graph.out_edges(snap.id, "PARENT_SNAPSHOT")
        if not parents:
            return False, None
        prior = resolve_path(repo.graph.get_node(parents[0].dst).properties, spec.key)
        if not _is_num(prior) or not _is_num(observed):
            return False, None
        return abs(observed - prior) > cond["abs_delta_gt"], prior
    op, value = cond["op"], cond["value"]
    if op in ("==", "!="):
        equal = observed == value if type(observed) is type(value) or (
            _is_num(observed) and _is_num(value)
        ) else False
        return (equal if op == "==" else not equal), None
    if not _is_num(observed) or not _is_num(value):
        return False, None  # numeric conditions require numeric resolved values
    if op == "<":
        return observed < value, None
    if op == "<=":
        return observed <= value, None
    if op == ">":
        return observed > value, None
    return observed >= value, None


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _alert_exists(repo, monitor_id, version_id, path):
    for node in repo.graph.nodes("Alert"):
        if (
            node.value("monitor_id") == float(monitor_id)
            and node.value("version_id") == float(version_id)
            and node.value("path") == path
        ):
            return True
    return False


def list_alerts(repo) -> list[dict]:
    alerts = []
    for node in repo.graph.nodes("Alert"):
        alerts.append(
            {
                "id": node.id,
                "monitor": int(node.value("monitor_id")),
                "version": int(node.value("version_id")),
                "path": node.value("path"),
                "observed": node.value("observed"),
                "prior": node.value("prior"),
                "timestamp": node.value("timestamp"),
            }
        )
    return alerts
