"""Property value model: scalars, lists, time series and trees.

Values are stored on graph nodes/edges together with the ingestor that wrote
them. The tagged JSON form defined here is used verbatim in the write-ahead
log and in HTTP API bodies, so it must stay stable:

    {"t": "str"|"num"|"bool"|"list"|"series"|"tree", "v": ...}
"""

from __future__ import annotations

from dataclasses import dataclass


class TimeSeries:
    """Ordered (index, value) pairs with strictly increasing indices."""

    __slots__ = ("points",)

    def __init__(self, points):
        pts = [(float(i), float(v)) for i, v in points]
        for (a, _), (b, _) in zip(pts, pts[1:]):
            if b <= a:
                raise ValueError(f"time-series indices must be strictly increasing: {a} then {b}")
        self.points = tuple(pts)

    def last(self):
        return self.points[-1][1] if self.points else None

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        return isinstance(other, TimeSeries) and self.points == other.points

    def __hash__(self):
        return hash(self.points)

    def __repr__(self):
        return f"TimeSeries({list(self.points)!r})"


@dataclass(frozen=True)
class Property:
    value: object
    source: str

    def __post_init__(self):
        if not self.source:
            raise ValueError("property source must be nonempty")


def normalize(value):
    """Coerce a raw Python value into the property value model.

    ints become 64-bit floats (bools stay bools), tuples become lists, dicts
    become trees with string keys. Unsupported types raise TypeError.
    """
    if isinstance(value, bool) or isinstance(value, str) or isinstance(value, TimeSeries):
        return value
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, (list, tuple)):
        return [normalize(v) for v in value]
    if isinstance(value, dict):
        out = {}
        for k, v in value.items():
            if not isinstance(k, str):
                raise TypeError(f"tree keys must be strings, got {type(k).__name__}")
            out[k] = normalize(v)
        return out
    raise TypeError(f"unsupported property value type: {type(value).__name__}")


def to_tagged(value):
    """Encode a normalized property value as tagged JSON-compatible data."""
    if isinstance(value, bool):
        return {"t": "bool", "v": value}
    if isinstance(value, str):
        return {"t": "str", "v": value}
    if isinstance(value, float):
        return {"t": "num", "v": value}
    if isinstance(value, TimeSeries):
        return {"t": "series", "v": [[i, v] for i, v in value.points]}
    if isinstance(value, list):
        return {"t": "list", "v": [to_tagged(v) for v in value]}
    if isinstance(value, dict):
        return {"t": "tree", "v": {k: to_tagged(v) for k, v in value.items()}}
    raise TypeError(f"unsupported property value type: {type(value).__name__}")


def from_tagged(doc):
    t = doc["t"]
    v = doc["v"]
    if t == "bool":
        return bool(v)
    if t == "str":
        return str(v)
    if t == "num":
        return float(v)
    if t == "series":
        return TimeSeries(v)
    if t == "list":
        return [from_tagged(x) for x in v]
    if t == "tree":
        return {k: from_tagged(x) for k, x in v.items()}
    raise ValueError(f"unknown property value tag: {t!r}")


def values_equal(a, b):
    """Structural equality over property values (bool is never equal to num)."""
    if isinstance(a, bool) != isinstance(b, bool):
        return False
    if isinstance(a, TimeSeries) or isinstance(b, TimeSeries):
        return isinstance(a, TimeSeries) and isinstance(b, TimeSeries) and a.points == b.points
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(values_equal(x, y) for x, y in zip(a, b))
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(values_equal(a[k], b[k]) for k in a)
    return type(a) is type(b) and a == b


def resolve_path(props, dotted_key):
    """Resolve a dot-path key against a property map.

    Path segments descend into tree values; the segment ``last`` on a
    time-series selects its final point's value. Returns None when the path
    does not resolve.
    """
    parts = dotted_key.split(".")
    if not parts or parts[0] not in props:
        return None
    entry = props[parts[0]]
    value = entry.value if isinstance(entry, Property) else entry
    for part in parts[1:]:
        if isinstance(value, TimeSeries):
            if part == "last":
                value = value.last()
            else:
                return None
        elif isinstance(value, dict):
            if part not in value:
                return None
            value = value[part]
        else:
            return None
        if value is None:
            return None
    return value
