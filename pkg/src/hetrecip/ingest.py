"""
Turn a raw temporal edgelist into an event log the growth model could have
produced: reciprocal edges are detected with a time window, then the edge
sequence is trimmed so that every retained edge touches an existing node.
"""

from __future__ import annotations

import csv
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .model import EventLog


class RawEdge(NamedTuple):
    source: object
    target: object
    timestamp: float


class AnnotatedEdge(NamedTuple):
    source: object
    target: object
    timestamp: float
    reciprocated: int


def _annotated(e) -> AnnotatedEdge:
    e = tuple(e)
    return AnnotatedEdge(*e) if len(e) == 4 else AnnotatedEdge(*e, 0)


def _sorted(edges):
    # stable: equal timestamps keep file order
    return sorted(edges, key=lambda e: e.timestamp)


def window_collapse(edges, window: float) -> list[AnnotatedEdge]:
    """Mark edges answered by their reverse within ``window`` and drop the answers.

    Edges are scanned in time order. An edge ``(t, s)`` arriving within
    ``window`` of a pending, unanswered ``(s, t)`` answers the earliest such
    edge, which gets ``reciprocated=1``; the answer itself is removed. Input
    edges that already carry ``reciprocated=1`` take no further part in
    matching, so the operation is idempotent. Self-loops never match.
    """
    edges = [_annotated(e) for e in edges]
    for e in edges:
        if not np.isfinite(e.timestamp):
            raise ValueError(f"non-finite timestamp in {e}")
    edges = _sorted(edges)
    pending: dict[tuple, deque] = defaultdict(deque)
    keep = [True] * len(edges)
    flag = [e.reciprocated for e in edges]
    for i, e in enumerate(edges):
        if e.source == e.target or e.reciprocated:
            continue
        q = pending.get((e.target, e.source))
        while q and e.timestamp - edges[q[0]].timestamp > window:
            q.popleft()
        if q:
            flag[q.popleft()] = 1
            keep[i] = False
            continue
        pending[(e.source, e.target)].append(i)
    return [AnnotatedEdge(e.source, e.target, e.timestamp, flag[i])
            for i, e in enumerate(edges) if keep[i]]


@dataclass
class TrimReport:
    n_input: int
    n_before_seed: int
    n_disconnected: int
    seed_pair: tuple
    idmap: dict = field(default_factory=dict)


def _id_key(x):
    # numeric ids compare as numbers, everything else as text
    try:
        return (0, int(x), "")
    except (TypeError, ValueError):
        return (1, 0, str(x))


def trim_to_pa(edges) -> tuple[EventLog, dict, TrimReport]:
    """Build an event log from reciprocity-annotated edges in time order.

    The seed graph is the node of largest total degree (ties: lowest id)
    together with the first node it is connected to. Afterwards an edge is
    kept when at least one endpoint is already present; edges with two new
    endpoints are dropped and counted. Returns ``(log, idmap, report)``
    where ``idmap`` sends original ids to dense 1-based ids.
    """
    edges = _sorted([_annotated(e) for e in edges])
    if not edges:
        raise ValueError("empty edge list")
    deg: dict = defaultdict(int)
    for e in edges:
        w = 1 + e.reciprocated
        deg[e.source] += w
        deg[e.target] += w
    # a hub touching only self-loops cannot form a seed edge
    linked = {v for e in edges if e.source != e.target for v in (e.source, e.target)}
    if not linked:
        raise ValueError("no edge joins two distinct nodes")
    hub = min(linked, key=lambda v: (-deg[v], _id_key(v)))
    first = next(i for i, e in enumerate(edges)
                 if hub in (e.source, e.target) and e.source != e.target)
    seed = edges[first]
    idmap = {seed.source: 1, seed.target: 2}
    r = int(seed.reciprocated)
    seed_in, seed_out = [r, 1], [1, r]
    J, S, T, R = [], [], [], []
    dropped = 0
    for e in edges[first + 1:]:
        s_new = e.source not in idmap
        t_new = e.target not in idmap
        if s_new and t_new:
            dropped += 1
            continue
        if s_new:
            idmap[e.source] = len(idmap) + 1
            j = 1
        elif t_new:
            idmap[e.target] = len(idmap) + 1
            j = 3
        else:
            j = 2
        J.append(j)
        S.append(idmap[e.source])
        T.append(idmap[e.target])
        R.append(0 if e.source == e.target else e.reciprocated)
    log = EventLog(seed_in, seed_out, J, S, T, R)
    report = TrimReport(len(edges), first, dropped, (seed.source, seed.target), idmap)
    return log, idmap, report


def ingest(edges, window: float = 24 * 3600.0, cutoff: float | None = None):
    """Window-collapse then trim. ``cutoff`` drops edges after that timestamp."""
    raw = [RawEdge(*e) for e in edges]
    if cutoff is not None:
        raw = [e for e in raw if e.timestamp <= cutoff]
    return trim_to_pa(window_collapse(raw, window))


def read_edgelist_csv(path) -> list[RawEdge]:
    """Read ``source,target,timestamp`` rows (header required)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["source", "target", "timestamp"]:
        raise ValueError(f"{path}: expected header source,target,timestamp")
    out = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 3 or not row[0].strip() or not row[1].strip():
            raise ValueError(f"{path}:{i}: malformed row {row!r}")
        out.append(RawEdge(row[0].strip(), row[1].strip(), float(row[2])))
    return out


def write_idmap_csv(idmap, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["original", "node"])
        for k, v in sorted(idmap.items(), key=lambda kv: kv[1]):
            w.writerow([k, v])
