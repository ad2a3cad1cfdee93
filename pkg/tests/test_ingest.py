import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hetrecip.ingest import (AnnotatedEdge, RawEdge, ingest, read_edgelist_csv, trim_to_pa,
                             window_collapse)
from hetrecip.model import replay
from hetrecip.simulate import GlobalParams, MixtureParams, generate


def reference_collapse(edges, window):
    """Literal parent-first scan: each surviving edge claims its earliest reverse."""
    order = sorted(range(len(edges)), key=lambda i: edges[i][2])
    deleted, flag = set(), {i: 0 for i in order}
    for pos, i in enumerate(order):
        s, t, ti = edges[i][:3]
        if i in deleted or s == t:
            continue
        for j in order[pos + 1:]:
            if j in deleted or flag[j]:
                continue
            u, v, tj = edges[j][:3]
            if (u, v) == (t, s) and tj - ti <= window:
                flag[i] = 1
                deleted.add(j)
                break
    return [(edges[i][0], edges[i][1], edges[i][2], flag[i]) for i in order if i not in deleted]


def _plain(out):
    return [(e.source, e.target, e.timestamp, e.reciprocated) for e in out]


def test_one_match_one_miss():
    out = window_collapse([(1, 2, 0), (2, 1, 0.5), (3, 1, 2)], 1)
    assert _plain(out) == [(1, 2, 0, 1), (3, 1, 2, 0)]


def test_outside_window():
    out = window_collapse([(1, 2, 0), (2, 1, 5)], 1)
    assert _plain(out) == [(1, 2, 0, 0), (2, 1, 5, 0)]


def test_earliest_parent_wins():
    out = window_collapse([(1, 2, 0), (1, 2, 0.1), (2, 1, 0.2)], 1)
    assert _plain(out) == [(1, 2, 0, 1), (1, 2, 0.1, 0)]


def test_exhaustive_three_edge_orderings():
    pairs = [(1, 2), (2, 1), (1, 3), (3, 1), (2, 2)]
    times = [(0, 0.5, 2), (0, 0, 0), (0, 1, 1.5), (0, 0.9, 1.8), (2, 0, 1)]
    for combo in itertools.product(pairs, repeat=3):
        for ts in times:
            edges = [(s, t, tm) for (s, t), tm in zip(combo, ts)]
            assert _plain(window_collapse(edges, 1)) == reference_collapse(edges, 1), edges


edge_lists = st.lists(st.tuples(st.integers(1, 3), st.integers(1, 3),
                                st.integers(0, 12).map(lambda x: x / 4)), max_size=14)


@given(edge_lists, st.sampled_from([0, 0.5, 1, 2]))
def test_matches_reference(edges, window):
    assert _plain(window_collapse(edges, window)) == reference_collapse(edges, window)


@given(edge_lists, st.sampled_from([0, 0.5, 1, 2]))
def test_idempotent(edges, window):
    once = window_collapse(edges, window)
    assert window_collapse(once, window) == once


def test_empty_and_unsorted_input():
    assert window_collapse([], 1) == []
    out = window_collapse([(2, 1, 3), (1, 2, 2.5)], 1)
    assert _plain(out) == [(1, 2, 2.5, 1)]


def test_non_finite_timestamp():
    with pytest.raises(ValueError):
        window_collapse([(1, 2, float("nan"))], 1)


def test_disconnected_edge_dropped():
    log, idmap, report = trim_to_pa([AnnotatedEdge("a", "b", 0, 0),
                                     AnnotatedEdge("c", "d", 1, 0)])
    assert log.n_events == 0 and report.n_disconnected == 1
    assert idmap == {"a": 1, "b": 2}


def test_single_edge_becomes_seed():
    log, idmap, _ = trim_to_pa([AnnotatedEdge("x", "y", 0, 1)])
    assert log.n_events == 0
    assert list(log.seed_in) == [1, 1] and list(log.seed_out) == [1, 1]


def test_empty_input_rejected():
    with pytest.raises(ValueError):
        trim_to_pa([])
    with pytest.raises(ValueError):
        trim_to_pa([AnnotatedEdge(1, 1, 0, 0)])


def test_scenarios_and_hub_choice():
    edges = [
        AnnotatedEdge("q", "r", 0, 0),   # before the hub's first edge: dropped
        AnnotatedEdge("h", "b", 1, 0),   # seed edge
        AnnotatedEdge("c", "h", 2, 1),   # new source -> J=1
        AnnotatedEdge("h", "d", 3, 0),   # new target -> J=3
        AnnotatedEdge("b", "c", 4, 0),   # both present -> J=2
        AnnotatedEdge("e", "f", 5, 0),   # both new -> dropped
        AnnotatedEdge("h", "h", 6, 0),   # self-loop, J=2
    ]
    log, idmap, report = trim_to_pa(edges)
    assert idmap == {"h": 1, "b": 2, "c": 3, "d": 4}
    assert list(log.scenario) == [1, 3, 2, 2]
    assert list(log.source) == [3, 1, 2, 1] and list(log.target) == [1, 4, 3, 1]
    assert list(log.reciprocated) == [1, 0, 0, 0]
    assert report.n_before_seed == 1 and report.n_disconnected == 1
    log.validate()


def test_degree_tie_goes_to_lowest_id():
    edges = [AnnotatedEdge(5, 9, 0, 0), AnnotatedEdge(3, 4, 1, 0)]
    _, idmap, _ = trim_to_pa(edges)
    assert idmap[3] == 1 and 5 not in idmap


def test_retained_edge_count(rng):
    raw = [(int(a), int(b), float(t)) for a, b, t in
           zip(rng.integers(0, 40, 600), rng.integers(0, 40, 600), rng.random(600) * 100)]
    log, idmap, report = ingest(raw, window=0.7)
    log.validate()
    state = replay(log)
    assert state.n_edges == log.n_seed_edges + log.n_events + log.reciprocated.sum()
    assert len(idmap) == log.n_nodes


def _simulated_edges(log, rename):
    edges = [RawEdge(rename(1), rename(2), 0.0)]
    for k, e in enumerate(log.events(), start=1):
        edges.append(RawEdge(rename(e.source), rename(e.target), float(k)))
        if e.reciprocated:
            edges.append(RawEdge(rename(e.target), rename(e.source), k + 0.5))
    return edges


def test_round_trip_from_simulator():
    theta = GlobalParams(0.5, 0.3, 0.5, 0.5)
    mix = MixtureParams([0.5, 0.5], [[0.3, 0.7], [0.2, 0.9]])
    for seed in range(50):
        sim, _ = generate(theta, mix, 1500, rng=seed)
        deg = replay(sim).total_degree
        if deg[:2].max() == deg.max():
            break
    else:
        pytest.fail("no simulated graph whose hub is a seed node")
    rename = lambda v: f"user{v + 1000}"
    edges = _simulated_edges(sim, rename)[::-1]      # input order must not matter
    log, idmap, report = ingest(edges, window=0.6)
    assert report.n_disconnected == 0 and report.n_before_seed == 0
    for name in ("scenario", "source", "target", "reciprocated", "seed_in", "seed_out"):
        assert np.array_equal(getattr(log, name), getattr(sim, name)), name
    assert idmap[rename(7)] == 7


def test_cutoff(rng):
    edges = [(1, 2, 0.0), (3, 1, 1.0), (4, 1, 10.0)]
    log, _, _ = ingest(edges, window=0.1, cutoff=5.0)
    assert log.n_events == 1


def test_read_edgelist(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("source,target,timestamp\na,b,1\nb,a,2.5\n")
    assert read_edgelist_csv(p) == [RawEdge("a", "b", 1.0), RawEdge("b", "a", 2.5)]
    p.write_text("from,to\n")
    with pytest.raises(ValueError):
        read_edgelist_csv(p)
    p.write_text("source,target,timestamp\na,,1\n")
    with pytest.raises(ValueError):
        read_edgelist_csv(p)
