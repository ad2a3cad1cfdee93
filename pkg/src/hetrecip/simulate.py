"""
Generate event logs from the directed preferential attachment model with
class-dependent reciprocity.

Degree-proportional selection uses stub lists: with ``|E|`` in-stubs the
offset weights satisfy ``sum_v (D_in(v) + delta) = |E| + delta |V|``, so a
target is a uniform stub with probability ``|E| / (|E| + delta |V|)`` and a
uniform node otherwise. Each step costs O(1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .model import EventLog, GraphState


@dataclass(frozen=True)
class GlobalParams:
    alpha: float
    beta: float
    delta_in: float
    delta_out: float

    def __post_init__(self):
        a, b = self.alpha, self.beta
        if not (0 <= a <= 1 and 0 <= b <= 1 and a + b <= 1 + 1e-12):
            raise ValueError(f"need alpha, beta in [0,1] with alpha+beta <= 1, got {a}, {b}")
        if not (self.delta_in > 0 and self.delta_out > 0):
            raise ValueError("offsets delta_in, delta_out must be positive")

    @property
    def gamma(self) -> float:
        return max(0.0, 1.0 - self.alpha - self.beta)


@dataclass(frozen=True, eq=False)
class MixtureParams:
    """Class proportions ``pi`` and reciprocity matrix ``rho[m, r]``.

    ``rho[m, r]`` is the probability that a class-m node answers an edge it
    received from a class-r node.
    """

    pi: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float).reshape(-1)
        rho = np.asarray(self.rho, dtype=float)
        K = len(pi)
        if K < 1 or rho.shape != (K, K):
            raise ValueError(f"rho must be {K}x{K}, got shape {rho.shape}")
        if (pi < 0).any() or abs(pi.sum() - 1) > 1e-9:
            raise ValueError("pi must lie on the probability simplex")
        if (rho < 0).any() or (rho > 1).any():
            raise ValueError("rho entries must lie in [0, 1]")
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "rho", rho)

    @property
    def K(self) -> int:
        return len(self.pi)

    def permuted(self, perm) -> "MixtureParams":
        """Relabel so that new class ``j`` is old class ``perm[j]``."""
        perm = np.asarray(perm)
        return MixtureParams(self.pi[perm], self.rho[np.ix_(perm, perm)])


def default_seed_graph() -> GraphState:
    """Two nodes joined by the single edge 1 -> 2."""
    return GraphState.from_degrees([0, 1], [1, 0])


@numba.njit(cache=True)
def _pick(stubs, n_stubs, deg, n_nodes, delta, u, linear):
    total = n_stubs + delta * n_nodes
    x = u * total
    if not linear:
        if x < n_stubs:
            return stubs[min(int(x), n_stubs - 1)]
        return min(int((x - n_stubs) / delta), n_nodes - 1)
    acc = 0.0
    for v in range(n_nodes):
        acc += deg[v] + delta
        if x < acc:
            return v
    return n_nodes - 1


@numba.njit(cache=True)
def _generate(n, alpha, beta, delta_in, delta_out, cum_pi, rho, labels,
              din, dout, in_stubs, out_stubs, n_nodes, n_edges, U, linear,
              J_out, s_out, t_out, R_out):
    K = len(cum_pi)
    for k in range(n):
        uj = U[k, 0]
        if uj < alpha:
            J = 1
        elif uj < alpha + beta:
            J = 2
        else:
            J = 3
        if J == 1:
            t = _pick(in_stubs, n_edges, din, n_nodes, delta_in, U[k, 1], linear)
            s = n_nodes
        elif J == 3:
            s = _pick(out_stubs, n_edges, dout, n_nodes, delta_out, U[k, 2], linear)
            t = n_nodes
        else:
            t = _pick(in_stubs, n_edges, din, n_nodes, delta_in, U[k, 1], linear)
            s = _pick(out_stubs, n_edges, dout, n_nodes, delta_out, U[k, 2], linear)
        if J != 2:
            c = 0
            while c < K - 1 and U[k, 3] >= cum_pi[c]:
                c += 1
            labels[n_nodes] = c
            n_nodes += 1
        R = 0
        if s != t and U[k, 4] < rho[labels[t], labels[s]]:
            R = 1
        dout[s] += 1
        din[t] += 1
        out_stubs[n_edges] = s
        in_stubs[n_edges] = t
        n_edges += 1
        if R == 1:
            dout[t] += 1
            din[s] += 1
            out_stubs[n_edges] = t
            in_stubs[n_edges] = s
            n_edges += 1
        J_out[k] = J
        s_out[k] = s + 1
        t_out[k] = t + 1
        R_out[k] = R
    return n_nodes


def _stubs(deg, capacity):
    out = np.zeros(capacity, dtype=np.int64)
    ids = np.repeat(np.arange(len(deg)), deg)
    out[: len(ids)] = ids
    return out


def generate(theta: GlobalParams, mix: MixtureParams, n: int,
             seed_graph: GraphState | None = None, seed_labels=None,
             rng=None, linear: bool = False):
    """Simulate ``n`` steps; returns ``(log, labels)``.

    ``labels`` are 0-based classes for every node (seed nodes included).
    Seed labels are drawn i.i.d. from ``mix.pi`` unless given. ``rng`` is a
    ``numpy.random.Generator`` or an integer seed. ``linear=True`` replaces
    stub sampling by a cumulative scan over all nodes.

    In the internal-edge step the two endpoints are drawn independently, so
    self-loops occur; they are never reciprocated.
    """
    if n < 0:
        raise ValueError("step count must be nonnegative")
    rng = np.random.default_rng(rng)
    seed = default_seed_graph() if seed_graph is None else seed_graph
    V0, E0 = seed.n_nodes, seed.n_edges
    if V0 < 1:
        raise ValueError("seed graph must have at least one node")
    if seed_labels is None:
        seed_labels = rng.choice(mix.K, size=V0, p=mix.pi)
    seed_labels = np.asarray(seed_labels, dtype=np.int64)
    if len(seed_labels) != V0 or (seed_labels < 0).any() or (seed_labels >= mix.K).any():
        raise ValueError("seed labels must give a class in 0..K-1 for every seed node")

    n_new = V0 + n
    cap_e = E0 + 2 * n
    din = np.zeros(n_new, dtype=np.int64)
    dout = np.zeros(n_new, dtype=np.int64)
    din[:V0] = seed.in_degree
    dout[:V0] = seed.out_degree
    labels = np.zeros(n_new, dtype=np.int64)
    labels[:V0] = seed_labels
    U = rng.random((n, 5))
    J = np.zeros(n, dtype=np.int64)
    s = np.zeros(n, dtype=np.int64)
    t = np.zeros(n, dtype=np.int64)
    R = np.zeros(n, dtype=np.int64)
    cum_pi = np.cumsum(mix.pi)
    n_nodes = _generate(n, theta.alpha, theta.beta, theta.delta_in, theta.delta_out,
                        cum_pi, mix.rho, labels, din, dout,
                        _stubs(seed.in_degree, cap_e), _stubs(seed.out_degree, cap_e),
                        V0, E0, U, linear, J, s, t, R)
    log = EventLog(seed.in_degree, seed.out_degree, J, s, t, R)
    return log, labels[:n_nodes].copy()


def selection_probabilities(state: GraphState, delta: float, side: str = "in") -> np.ndarray:
    """Exact per-node selection probabilities for one attachment draw."""
    deg = state.in_degree if side == "in" else state.out_degree
    w = deg + delta
    return w / (state.n_edges + delta * state.n_nodes)


def draw_endpoint(state: GraphState, delta: float, side: str = "in", size: int = 1,
                  rng=None, linear: bool = False) -> np.ndarray:
    """Draw ``size`` independent endpoints (0-based) from a fixed state."""
    rng = np.random.default_rng(rng)
    deg = state.in_degree if side == "in" else state.out_degree
    stubs = _stubs(deg, max(int(deg.sum()), 1))
    u = rng.random(size)
    return np.array([_pick(stubs, int(deg.sum()), deg, state.n_nodes, delta, x, linear)
                     for x in u])
