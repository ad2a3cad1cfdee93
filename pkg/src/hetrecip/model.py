"""
Event logs and degree states for growing directed networks with reciprocity.

Node ids are dense 1-based integers assigned in arrival order. Class labels
are stored as 0-based integer arrays indexed by ``node - 1``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, NamedTuple

import numpy as np


class InvalidEventError(ValueError):
    """Raised when an event is inconsistent with the current graph state."""

    def __init__(self, message, index=None):
        if index is not None:
            message = f"event {index}: {message}"
        super().__init__(message)
        self.index = index


class Event(NamedTuple):
    k: int
    scenario: int
    source: int
    target: int
    reciprocated: int


@dataclass
class GraphState:
    """Node count, edge count and per-node degree tallies.

    ``in_degree[v - 1]`` is the in-degree of node ``v``.
    """

    in_degree: np.ndarray
    out_degree: np.ndarray
    n_edges: int

    @property
    def n_nodes(self) -> int:
        return len(self.in_degree)

    @classmethod
    def empty(cls, n_nodes: int = 1) -> "GraphState":
        z = np.zeros(n_nodes, dtype=np.int64)
        return cls(z, z.copy(), 0)

    @classmethod
    def from_degrees(cls, in_degree, out_degree) -> "GraphState":
        din = np.asarray(in_degree, dtype=np.int64).copy()
        dout = np.asarray(out_degree, dtype=np.int64).copy()
        if din.shape != dout.shape or din.ndim != 1 or len(din) < 1:
            raise ValueError("degree lists must be 1-d, nonempty and of equal length")
        if (din < 0).any() or (dout < 0).any():
            raise ValueError("degrees must be nonnegative")
        if din.sum() != dout.sum():
            raise ValueError("in- and out-degree sums differ")
        return cls(din, dout, int(din.sum()))

    def copy(self) -> "GraphState":
        return GraphState(self.in_degree.copy(), self.out_degree.copy(), self.n_edges)

    @property
    def total_degree(self) -> np.ndarray:
        return self.in_degree + self.out_degree


def _check_event(n_nodes, event, index=None):
    J, s, t, R = event.scenario, event.source, event.target, event.reciprocated
    if J not in (1, 2, 3):
        raise InvalidEventError(f"scenario {J} not in {{1,2,3}}", index)
    if R not in (0, 1):
        raise InvalidEventError(f"reciprocated flag {R} not in {{0,1}}", index)
    new = n_nodes + 1
    if J == 1:
        if s != new:
            raise InvalidEventError(f"J=1 source must be the new node {new}, got {s}", index)
        if not 1 <= t <= n_nodes:
            raise InvalidEventError(f"target {t} does not exist", index)
    elif J == 3:
        if t != new:
            raise InvalidEventError(f"J=3 target must be the new node {new}, got {t}", index)
        if not 1 <= s <= n_nodes:
            raise InvalidEventError(f"source {s} does not exist", index)
    else:
        if not 1 <= s <= n_nodes:
            raise InvalidEventError(f"source {s} does not exist", index)
        if not 1 <= t <= n_nodes:
            raise InvalidEventError(f"target {t} does not exist", index)


def _apply_inplace(in_deg, out_deg, n_nodes, event):
    """Increment degree arrays (with spare capacity); returns new node count."""
    if event.scenario != 2:
        n_nodes += 1
    s, t = event.source - 1, event.target - 1
    out_deg[s] += 1
    in_deg[t] += 1
    if event.reciprocated:
        out_deg[t] += 1
        in_deg[s] += 1
    return n_nodes


def apply_event(state: GraphState, event: Event) -> GraphState:
    """Return the state after ``event``; ``state`` itself is never modified."""
    _check_event(state.n_nodes, event, getattr(event, "k", None))
    grow = 0 if event.scenario == 2 else 1
    din = np.concatenate([state.in_degree, np.zeros(grow, dtype=np.int64)])
    dout = np.concatenate([state.out_degree, np.zeros(grow, dtype=np.int64)])
    _apply_inplace(din, dout, state.n_nodes, event)
    return GraphState(din, dout, state.n_edges + 1 + int(event.reciprocated))


@dataclass(eq=False)
class EventLog:
    """Seed-graph summary plus the ordered edge-creation events.

    Event arrays are parallel int64 arrays; node ids are 1-based.
    """

    seed_in: np.ndarray
    seed_out: np.ndarray
    scenario: np.ndarray
    source: np.ndarray
    target: np.ndarray
    reciprocated: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.seed_in = np.asarray(self.seed_in, dtype=np.int64)
        self.seed_out = np.asarray(self.seed_out, dtype=np.int64)
        self.scenario = np.asarray(self.scenario, dtype=np.int64).reshape(-1)
        self.source = np.asarray(self.source, dtype=np.int64).reshape(-1)
        self.target = np.asarray(self.target, dtype=np.int64).reshape(-1)
        self.reciprocated = np.asarray(self.reciprocated, dtype=np.int64).reshape(-1)
        n = len(self.scenario)
        if not (len(self.source) == len(self.target) == len(self.reciprocated) == n):
            raise ValueError("event arrays must have equal length")
        if len(self.seed_in) != len(self.seed_out) or len(self.seed_in) < 1:
            raise ValueError("seed degree lists must be nonempty and of equal length")
        if self.seed_in.sum() != self.seed_out.sum():
            raise ValueError("seed in- and out-degree sums differ")

    @classmethod
    def from_events(cls, seed: GraphState, events) -> "EventLog":
        arr = np.array([(e[1], e[2], e[3], e[4]) for e in events], dtype=np.int64).reshape(-1, 4)
        return cls(seed.in_degree, seed.out_degree, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])

    @property
    def n_events(self) -> int:
        return len(self.scenario)

    def __len__(self):
        return self.n_events

    @property
    def n_seed_nodes(self) -> int:
        return len(self.seed_in)

    @property
    def n_seed_edges(self) -> int:
        return int(self.seed_in.sum())

    @property
    def n_nodes(self) -> int:
        return self.n_seed_nodes + int(np.count_nonzero(self.scenario != 2))

    @property
    def n_edges(self) -> int:
        return self.n_seed_edges + self.n_events + int(self.reciprocated.sum())

    def seed_state(self) -> GraphState:
        return GraphState.from_degrees(self.seed_in, self.seed_out)

    def events(self) -> Iterator[Event]:
        for k in range(self.n_events):
            yield Event(k + 1, int(self.scenario[k]), int(self.source[k]),
                        int(self.target[k]), int(self.reciprocated[k]))

    def event(self, k: int) -> Event:
        i = k - 1
        return Event(k, int(self.scenario[i]), int(self.source[i]),
                     int(self.target[i]), int(self.reciprocated[i]))

    def validate(self) -> None:
        """Check every event against the replayed node count."""
        n_nodes = self.n_seed_nodes
        for e in self.events():
            _check_event(n_nodes, e, e.k)
            if e.scenario != 2:
                n_nodes += 1

    @cached_property
    def arrivals(self) -> np.ndarray:
        """0-based ids of nodes created by J=1 / J=3 events, in order."""
        new_src = self.scenario == 1
        return np.where(new_src, self.source, self.target)[self.scenario != 2] - 1

    @cached_property
    def is_self_loop(self) -> np.ndarray:
        return self.source == self.target

    @cached_property
    def incidence(self) -> "Incidence":
        return Incidence.build(self)

    def reciprocal_counts(self, labels: np.ndarray, K: int, include_self_loops=True):
        """Return ``(n1, n0)``: K x K counts indexed ``[target class, source class]``."""
        keep = slice(None) if include_self_loops else ~self.is_self_loop
        r = labels[self.source[keep] - 1]
        m = labels[self.target[keep] - 1]
        R = self.reciprocated[keep]
        n1 = np.zeros((K, K))
        n0 = np.zeros((K, K))
        np.add.at(n1, (m[R == 1], r[R == 1]), 1)
        np.add.at(n0, (m[R == 0], r[R == 0]), 1)
        return n1, n0


@dataclass(eq=False)
class Incidence:
    """CSR incidence lists used by the inference kernels.

    Self-loops are split off into per-node counts; ``out_*`` and ``in_*``
    only hold events with distinct endpoints.
    """

    n_nodes: int
    src: np.ndarray
    tgt: np.ndarray
    rec: np.ndarray
    out_ptr: np.ndarray
    out_evt: np.ndarray
    in_ptr: np.ndarray
    in_evt: np.ndarray
    self1: np.ndarray
    self0: np.ndarray

    @classmethod
    def build(cls, log: EventLog) -> "Incidence":
        V = log.n_nodes
        src = log.source - 1
        tgt = log.target - 1
        rec = log.reciprocated.copy()
        loop = src == tgt
        idx = np.flatnonzero(~loop)

        def csr(nodes):
            order = np.argsort(nodes[idx], kind="stable")
            evt = idx[order]
            ptr = np.zeros(V + 1, dtype=np.int64)
            np.cumsum(np.bincount(nodes[idx], minlength=V), out=ptr[1:])
            return ptr, evt.astype(np.int64)

        out_ptr, out_evt = csr(src)
        in_ptr, in_evt = csr(tgt)
        self1 = np.bincount(src[loop & (rec == 1)], minlength=V).astype(np.int64)
        self0 = np.bincount(src[loop & (rec == 0)], minlength=V).astype(np.int64)
        return cls(V, src, tgt, rec, out_ptr, out_evt, in_ptr, in_evt, self1, self0)

    @property
    def proper(self) -> np.ndarray:
        """Mask of events with distinct endpoints."""
        return self.src != self.tgt


def replay(log: EventLog, upto: int | None = None) -> GraphState:
    """Fold ``apply_event`` over the log starting from the seed state."""
    n = log.n_events if upto is None else upto
    V = log.n_nodes
    din = np.zeros(V, dtype=np.int64)
    dout = np.zeros(V, dtype=np.int64)
    n0 = log.n_seed_nodes
    din[:n0] = log.seed_in
    dout[:n0] = log.seed_out
    n_nodes = n0
    for k in range(n):
        e = Event(k + 1, int(log.scenario[k]), int(log.source[k]),
                  int(log.target[k]), int(log.reciprocated[k]))
        _check_event(n_nodes, e, k + 1)
        n_nodes = _apply_inplace(din, dout, n_nodes, e)
    n_edges = log.n_seed_edges + n + int(log.reciprocated[:n].sum())
    return GraphState(din[:n_nodes].copy(), dout[:n_nodes].copy(), n_edges)


def rand_index(p, q) -> float:
    """Fraction of node pairs on which two partitions agree."""
    p = np.asarray(p)
    q = np.asarray(q)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError("label vectors must be 1-d and of equal length")
    n = len(p)
    if n < 2:
        raise ValueError("need at least two labels")
    _, pi = np.unique(p, return_inverse=True)
    _, qi = np.unique(q, return_inverse=True)
    table = np.zeros((pi.max() + 1, qi.max() + 1), dtype=np.float64)
    np.add.at(table, (pi, qi), 1)

    def pairs(x):
        return float((x * (x - 1) / 2).sum())

    total = n * (n - 1) / 2
    both = pairs(table)
    a = pairs(table.sum(1))
    b = pairs(table.sum(0))
    return (total + 2 * both - a - b) / total


# -- file formats -----------------------------------------------------------

EVENT_HEADER = ["k", "scenario", "source", "target", "reciprocated"]


def write_events_csv(log: EventLog, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_HEADER)
        for e in log.events():
            w.writerow(e)


def seed_dict(log: EventLog) -> dict:
    return {
        "nodes": log.n_seed_nodes,
        "edges": log.n_seed_edges,
        "in_degrees": [int(x) for x in log.seed_in],
        "out_degrees": [int(x) for x in log.seed_out],
    }


def write_seed_json(log: EventLog, path) -> None:
    with open(path, "w") as fh:
        json.dump(seed_dict(log), fh, indent=2)
        fh.write("\n")


def read_event_log(events_path, seed_path) -> EventLog:
    with open(seed_path) as fh:
        seed = json.load(fh)
    if len(seed["in_degrees"]) != seed["nodes"] or sum(seed["in_degrees"]) != seed["edges"]:
        raise ValueError(f"{seed_path}: seed summary is inconsistent")
    with open(events_path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != EVENT_HEADER:
        raise ValueError(f"{events_path}: expected header {','.join(EVENT_HEADER)}")
    arr = np.array(rows[1:], dtype=np.int64).reshape(-1, 5)
    if len(arr) and not np.array_equal(arr[:, 0], np.arange(1, len(arr) + 1)):
        raise ValueError(f"{events_path}: step numbers must run 1..n in order")
    log = EventLog(seed["in_degrees"], seed["out_degrees"],
                   arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4])
    log.validate()
    return log


def write_labels_csv(labels, path) -> None:
    """Write ``node,class`` rows with 1-based node ids and classes."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "class"])
        for v, c in enumerate(np.asarray(labels), start=1):
            w.writerow([v, int(c) + 1])


def read_labels_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    arr = np.array(rows, dtype=np.int64).reshape(-1, 2)
    out = np.empty(len(arr), dtype=np.int64)
    out[arr[:, 0] - 1] = arr[:, 1] - 1
    return out
