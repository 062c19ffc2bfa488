"""Line diffs built on a longest-common-subsequence core.

Hirschberg's divide-and-conquer LCS keeps memory linear in the inputs, so the
same path serves 50-line training logs and multi-thousand-line data files.
Hunks follow the unified format with 3 lines of context. Binary content (a
NUL byte in the first 8 KiB) is reported as differing, not diffed.
"""

from __future__ import annotations

CONTEXT_LINES = 3
BINARY_SNIFF_BYTES = 8192
BINARY_MARKER = "binary differs"


def is_binary(data: bytes) -> bool:
    return b"\x00" in data[:BINARY_SNIFF_BYTES]


def _lcs_row(a, b):
    """Last row of the LCS length table for a vs b."""
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        c0 = 0
        for j, y in enumerate(b):
            c = prev[j] + 1 if x == y else max(prev[j + 1], c0)
            cur.append(c)
            c0 = c
        prev = cur
    return prev


def _hirschberg(a, b, ao, bo, out):
    if not a or not b:
        return
    if len(a) == 1:
        try:
            j = b.index(a[0])
            out.append((ao, bo + j))
        except ValueError:
            pass
        return
    mid = len(a) // 2
    left = _lcs_row(a[:mid], b)
    right = _lcs_row(a[mid:][::-1], b[::-1])
    split, best = 0, -1
    for j in range(len(b) + 1):
        score = left[j] + right[len(b) - j]
        if score > best:
            best, split = score, j
    _hirschberg(a[:mid], b[:split], ao, bo, out)
    _hirschberg(a[mid:], b[split:], ao + mid, bo + split, out)


def lcs_pairs(a, b):
    """Matched (index in a, index in b) pairs of a longest common subsequence."""
    # map lines to ints so the inner loops compare integers
    table = {}
    ai = [table.setdefault(x, len(table)) for x in a]
    bi = [table.setdefault(x, len(table)) for x in b]
    # trim common prefix/suffix first: typical edits touch a small region
    lo = 0
    while lo < len(ai) and lo < len(bi) and ai[lo] == bi[lo]:
        lo += 1
    hi = 0
    while hi < len(ai) - lo and hi < len(bi) - lo and ai[len(ai) - 1 - hi] == bi[len(bi) - 1 - hi]:
        hi += 1
    pairs = [(i, i) for i in range(lo)]
    middle = []
    _hirschberg(ai[lo : len(ai) - hi], bi[lo : len(bi) - hi], lo, lo, middle)
    pairs.extend((i, j) for i, j in middle)
    pairs.extend((len(a) - hi + k, len(b) - hi + k) for k in range(hi))
    return pairs


def unified_diff(a_lines, b_lines, label_a="a", label_b="b", context=CONTEXT_LINES):
    """Unified-format hunks between two line lists; [] when equal."""
    pairs = lcs_pairs(a_lines, b_lines)
    if len(pairs) == len(a_lines) == len(b_lines):
        return []

    # edit script between successive matches
    groups = []  # (a_start, a_del_count, b_start, b_add_count) change runs
    prev_a, prev_b = 0, 0
    anchored = pairs + [(len(a_lines), len(b_lines))]
    for ai, bi in anchored:
        if ai > prev_a or bi > prev_b:
            groups.append((prev_a, ai - prev_a, prev_b, bi - prev_b))
        prev_a, prev_b = ai + 1, bi + 1

    lines = [f"--- {label_a}", f"+++ {label_b}"]
    i = 0
    while i < len(groups):
        # coalesce change runs whose context would overlap
        j = i
        while j + 1 < len(groups) and groups[j + 1][0] - (groups[j][0] + groups[j][1]) <= 2 * context:
            j += 1
        first = groups[i]
        last = groups[j]
        a_lo = max(first[0] - context, 0)
        a_hi = min(last[0] + last[1] + context, len(a_lines))
        b_lo = max(first[2] - context, 0)
        b_hi = min(last[2] + last[3] + context, len(b_lines))
        a_cnt = a_hi - a_lo
        b_cnt = b_hi - b_lo
        header_a = f"{a_lo + 1},{a_cnt}" if a_cnt != 1 else f"{a_lo + 1}"
        header_b = f"{b_lo + 1},{b_cnt}" if b_cnt != 1 else f"{b_lo + 1}"
        if a_cnt == 0:
            header_a = f"{a_lo},0"
        if b_cnt == 0:
            header_b = f"{b_lo},0"
        lines.append(f"@@ -{header_a} +{header_b} @@")
        pos_a, pos_b = a_lo, b_lo
        for k in range(i, j + 1):
            ga, gda, gb, gdb = groups[k]
            while pos_a < ga:
                lines.append(" " + a_lines[pos_a])
                pos_a += 1
                pos_b += 1
            for _ in range(gda):
                lines.append("-" + a_lines[pos_a])
                pos_a += 1
            for _ in range(gdb):
                lines.append("+" + b_lines[pos_b])
                pos_b += 1
        while pos_a < a_hi:
            lines.append(" " + a_lines[pos_a])
            pos_a += 1
            pos_b += 1
        i = j + 1
    return lines


def content_diff(data_a: bytes, data_b: bytes, label_a="a", label_b="b"):
    """Diff decoded file contents; binary inputs yield the marker string."""
    if is_binary(data_a) or is_binary(data_b):
        return [] if data_a == data_b else [BINARY_MARKER]
    return unified_diff(
        data_a.decode("utf-8", "replace").splitlines(),
        data_b.decode("utf-8", "replace").splitlines(),
        label_a,
        label_b,
    )
