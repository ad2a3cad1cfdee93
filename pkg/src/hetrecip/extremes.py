"""
Heavy-tail tools: minimum-distance power-law threshold, tail angles of the
out/in-degree pairs, and one-dimensional K-means.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import zeta

from .model import GraphState


class ExtremesError(ValueError):
    pass


@dataclass
class ThresholdFit:
    threshold: int
    exponent: float
    ks: float
    n_tail: int
    candidates: np.ndarray | None = None
    ks_values: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {"threshold": self.threshold, "exponent": self.exponent,
                "ks": self.ks, "n_tail": self.n_tail}


def discrete_exponent(tail, xmin) -> float:
    """Continuity-corrected MLE ``1 + n / sum(log(x / (xmin - 1/2)))``."""
    tail = np.asarray(tail, dtype=float)
    return 1.0 + len(tail) / np.sum(np.log(tail / (xmin - 0.5)))


def discrete_powerlaw_cdf(x, exponent, xmin):
    """P(X <= x) for the discrete power law on ``xmin, xmin + 1, ...``."""
    x = np.asarray(x, dtype=float)
    return 1.0 - zeta(exponent, x + 1) / zeta(exponent, xmin)


def min_distance_threshold(degrees, min_tail: int = 10) -> ThresholdFit:
    """Tail threshold minimising the KS distance to a fitted discrete power law.

    Every observed value with at least ``min_tail`` observations at or above
    it is a candidate; the KS distance is taken over the observed values of
    the tail.
    """
    x = np.asarray(degrees)
    if x.size == 0:
        raise ExtremesError("no degrees given")
    if (x <= 0).any() or (x != np.floor(x)).any():
        raise ExtremesError("degrees must be positive integers")
    uniq, counts = np.unique(x.astype(np.int64), return_counts=True)
    if len(uniq) == 1:
        raise ExtremesError("all degrees are equal")
    if len(uniq) < 10:
        raise ExtremesError(f"need at least 10 distinct values, got {len(uniq)}")
    n_ge = np.cumsum(counts[::-1])[::-1]
    log_ge = np.cumsum((counts * np.log(uniq))[::-1])[::-1]
    cand = np.flatnonzero(n_ge >= min_tail)
    ks = np.full(len(cand), np.inf)
    alphas = np.full(len(cand), np.nan)
    for j, i in enumerate(cand):
        xm = float(uniq[i])
        n_t = n_ge[i]
        a = 1.0 + n_t / (log_ge[i] - n_t * np.log(xm - 0.5))
        alphas[j] = a
        vals = uniq[i:]
        emp = np.cumsum(counts[i:]) / n_t
        fit = 1.0 - zeta(a, vals + 1.0) / zeta(a, xm)
        ks[j] = np.max(np.abs(emp - fit))
    best = int(np.argmin(ks))
    i = cand[best]
    return ThresholdFit(int(uniq[i]), float(alphas[best]), float(ks[best]), int(n_ge[i]),
                        uniq[cand], ks)


@dataclass
class AngularSet:
    values: np.ndarray
    threshold: float
    nodes: np.ndarray

    def to_rows(self):
        return [(int(v), float(a)) for v, a in zip(self.nodes, self.values)]


def angular_set(state: GraphState, r: float) -> AngularSet:
    """Out-degree share ``D_out / (D_out + D_in)`` of nodes with total degree > r."""
    if r < 0:
        raise ValueError("threshold must be nonnegative")
    total = state.in_degree + state.out_degree
    nodes = np.flatnonzero(total > r)
    vals = state.out_degree[nodes] / total[nodes]
    return AngularSet(vals.astype(float), r, nodes + 1)


def _assign(xs, centers):
    # centers sorted ascending; ties go to the lower center
    mids = (centers[1:] + centers[:-1]) / 2
    return np.searchsorted(mids, xs, side="left")


def kmeans_1d(values, K: int, rng=None, max_iter: int = 1000, history: list | None = None):
    """Lloyd's algorithm with k-means++ seeding on scalar data.

    Returns ``(labels, centers)`` with centers sorted ascending. Pass a list
    as ``history`` to collect the objective after every assignment step.
    """
    xs = np.asarray(values, dtype=float).reshape(-1)
    if K < 1:
        raise ValueError("K must be at least 1")
    if len(xs) < K:
        raise ExtremesError(f"need at least K={K} values, got {len(xs)}")
    if len(np.unique(xs)) < K:
        raise ExtremesError(f"fewer than K={K} distinct values")
    rng = np.random.default_rng(rng)
    centers = [xs[rng.integers(len(xs))]]
    for _ in range(1, K):
        d2 = np.min((xs[:, None] - np.array(centers)[None, :]) ** 2, axis=1)
        centers.append(xs[rng.choice(len(xs), p=d2 / d2.sum())])
    centers = np.sort(np.array(centers))
    labels = _assign(xs, centers)
    for _ in range(max_iter):
        for j in range(K):
            members = xs[labels == j]
            if len(members):
                centers[j] = members.mean()
            else:
                far = np.argmax(np.abs(xs - centers[labels]))
                centers[j] = xs[far]
        centers = np.sort(centers)
        new = _assign(xs, centers)
        if history is not None:
            history.append(float(np.sum((xs - centers[new]) ** 2)))
        if np.array_equal(new, labels):
            break
        labels = new
    for j in range(K):
        members = xs[labels == j]
        if len(members):
            centers[j] = members.mean()
    return labels.astype(np.int64), centers


def kmeans_objective(values, labels, centers) -> float:
    xs = np.asarray(values, dtype=float)
    return float(np.sum((xs - np.asarray(centers)[labels]) ** 2))
