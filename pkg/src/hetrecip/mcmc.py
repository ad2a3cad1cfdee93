"""
Fully Bayesian inference for the reciprocity mixture.

``gibbs_run`` samples labels, class proportions and reciprocities for a fixed
number of classes. ``telescoping_run`` additionally samples the number of
components under a beta-negative-binomial prior on ``K - 1``, alternating
between the partition of the nodes and the component parameters.

Self-loop events enter a node's label conditional once, through
``rho[l, l]``, since both endpoints carry the same label.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations
from typing import NamedTuple

import numba
import numpy as np
from scipy.special import betaln, gammaln

from .model import EventLog, Incidence
from .simulate import MixtureParams


@dataclass(frozen=True)
class PriorConfig:
    """Beta(a, b) on each reciprocity, symmetric Dirichlet(eta) on the
    proportions, BNB(c1, c2, c3) on ``K - 1`` truncated at ``k_max``."""

    a: float = 0.5
    b: float = 0.5
    eta: float = 0.5
    c1: float = 1.0
    c2: float = 4.0
    c3: float = 3.0
    k_max: int = 20

    def __post_init__(self):
        for name in ("a", "b", "eta", "c1", "c2", "c3"):
            if not getattr(self, name) > 0:
                raise ValueError(f"prior parameter {name} must be positive")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")


class ChainSample(NamedTuple):
    W: np.ndarray | None
    pi: np.ndarray
    rho: np.ndarray
    K: int
    K_plus: int


@dataclass(eq=False)
class Chain:
    """Stored MCMC iterates.

    ``pi`` is ``(M, k_max)`` and ``rho`` is ``(M, k_max, k_max)``, NaN-padded
    beyond each iterate's ``K``. ``labels`` holds every iterate's label
    vector when it was stored; ``label_counts`` tallies post-burn-in labels
    per node.
    """

    pi: np.ndarray
    rho: np.ndarray
    K: np.ndarray
    K_plus: np.ndarray
    log_joint: np.ndarray
    burn_in: int
    label_counts: np.ndarray
    labels: np.ndarray | None = None
    seed: object = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.burn_in < len(self.K):
            raise ValueError("burn-in must be shorter than the chain")

    def __len__(self):
        return len(self.K)

    def sample(self, i) -> ChainSample:
        K = int(self.K[i])
        W = None if self.labels is None else self.labels[i].astype(np.int64)
        return ChainSample(W, self.pi[i, :K].copy(), self.rho[i, :K, :K].copy(),
                           K, int(self.K_plus[i]))

    def kept(self) -> slice:
        return slice(self.burn_in, len(self.K))

    def hard_labels(self) -> np.ndarray:
        """Per-node most frequent post-burn-in label."""
        return np.argmax(self.label_counts, axis=1)


def bnb_log_pmf(K, c1, c2, c3):
    """Log pmf of ``K`` when ``K - 1`` is beta-negative-binomial."""
    K = np.asarray(K, dtype=float)
    if np.any(K < 1) or np.any(K != np.floor(K)):
        raise ValueError("K must be a positive integer")
    if not (c1 > 0 and c2 > 0 and c3 > 0):
        raise ValueError("BNB parameters must be positive")
    out = (gammaln(c1 + K - 1) + betaln(c1 + c2, K - 1 + c3)
           - gammaln(c1) - gammaln(K) - betaln(c2, c3))
    return out if out.ndim else float(out)


# -- kernels ----------------------------------------------------------------

@numba.njit(cache=True)
def _node_logweights(v, K, W, log_pi, log_rho, log_1rho, src, tgt, rec,
                     out_ptr, out_evt, in_ptr, in_evt, self1, self0, lw, c1, c0, d1, d0):
    for m in range(K):
        c1[m] = 0.0
        c0[m] = 0.0
        d1[m] = 0.0
        d0[m] = 0.0
    for j in range(out_ptr[v], out_ptr[v + 1]):
        k = out_evt[j]
        if rec[k] == 1:
            c1[W[tgt[k]]] += 1.0
        else:
            c0[W[tgt[k]]] += 1.0
    for j in range(in_ptr[v], in_ptr[v + 1]):
        k = in_evt[j]
        if rec[k] == 1:
            d1[W[src[k]]] += 1.0
        else:
            d0[W[src[k]]] += 1.0
    for l in range(K):
        acc = log_pi[l]
        for m in range(K):
            if c1[m] > 0:
                acc += c1[m] * log_rho[m, l]
            if c0[m] > 0:
                acc += c0[m] * log_1rho[m, l]
            if d1[m] > 0:
                acc += d1[m] * log_rho[l, m]
            if d0[m] > 0:
                acc += d0[m] * log_1rho[l, m]
        if self1[v] > 0:
            acc += self1[v] * log_rho[l, l]
        if self0[v] > 0:
            acc += self0[v] * log_1rho[l, l]
        lw[l] = acc


@numba.njit(cache=True)
def _categorical(lw, K, u):
    mx = -np.inf
    for l in range(K):
        if lw[l] > mx:
            mx = lw[l]
    if mx == -np.inf:
        return -1
    tot = 0.0
    for l in range(K):
        tot += np.exp(lw[l] - mx)
    x = u * tot
    acc = 0.0
    for l in range(K):
        acc += np.exp(lw[l] - mx)
        if x < acc:
            return l
    for l in range(K - 1, -1, -1):
        if lw[l] > -np.inf:
            return l
    return K - 1


@numba.njit(cache=True)
def _label_sweep(W, K, log_pi, log_rho, log_1rho, src, tgt, rec,
                 out_ptr, out_evt, in_ptr, in_evt, self1, self0, U):
    V = len(W)
    lw = np.empty(K)
    c1 = np.empty(K)
    c0 = np.empty(K)
    d1 = np.empty(K)
    d0 = np.empty(K)
    for v in range(V):
        _node_logweights(v, K, W, log_pi, log_rho, log_1rho, src, tgt, rec,
                         out_ptr, out_evt, in_ptr, in_evt, self1, self0, lw, c1, c0, d1, d0)
        l = _categorical(lw, K, U[v])
        if l >= 0:
            W[v] = l


@numba.njit(cache=True)
def _pair_counts(W, K, src, tgt, rec):
    n1 = np.zeros((K, K))
    n0 = np.zeros((K, K))
    for k in range(len(src)):
        m = W[tgt[k]]
        r = W[src[k]]
        if rec[k] == 1:
            n1[m, r] += 1.0
        else:
            n0[m, r] += 1.0
    return n1, n0


# -- helpers ----------------------------------------------------------------

class _Loops(NamedTuple):
    # self-loop counts for the label sweep and event arrays for the pair counts
    self1: np.ndarray
    self0: np.ndarray
    src: np.ndarray
    tgt: np.ndarray
    rec: np.ndarray


def _loops(inc: Incidence, include: bool) -> _Loops:
    """Self-loops have R forced to 0 by construction, so by default they carry
    no information about rho and are left out."""
    if include:
        return _Loops(inc.self1, inc.self0, inc.src, inc.tgt, inc.rec)
    keep = inc.proper
    zero = np.zeros_like(inc.self1)
    return _Loops(zero, zero, inc.src[keep], inc.tgt[keep], inc.rec[keep])


def _logs(pi, rho):
    with np.errstate(divide="ignore"):
        return np.log(pi), np.log(rho), np.log1p(-rho)


def conditional_label_weights(log: EventLog, v: int, W, mix: MixtureParams,
                              include_self_loops: bool = False) -> np.ndarray:
    """Normalised conditional probabilities of node ``v``'s label (1-based ``v``).

    Only the other nodes' labels in ``W`` are used. A self-loop, when
    included, counts once through ``rho[l, l]``.
    """
    if not 1 <= v <= log.n_nodes:
        raise ValueError(f"node {v} out of range 1..{log.n_nodes}")
    W = np.asarray(W, dtype=np.int64)
    if len(W) != log.n_nodes:
        raise ValueError("label vector length does not match the node count")
    inc = log.incidence
    K = mix.K
    lpi, lr, l1r = _logs(mix.pi, mix.rho)
    lw = np.empty(K)
    scratch = [np.empty(K) for _ in range(4)]
    loops = _loops(inc, include_self_loops)
    _node_logweights(v - 1, K, W, lpi, lr, l1r, inc.src, inc.tgt, inc.rec,
                     inc.out_ptr, inc.out_evt, inc.in_ptr, inc.in_evt,
                     loops.self1, loops.self0, lw, *scratch)
    w = np.exp(lw - lw.max())
    return w / w.sum()


def _log_joint(W, K, pi, rho, prior, n1, n0):
    """log p(data, W | pi, rho) + log prior(pi, rho), every node carrying a pi term."""
    counts = np.bincount(W, minlength=K)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (np.sum(counts * np.log(pi))
               + np.sum(np.where(n1 > 0, n1 * np.log(rho), 0.0))
               + np.sum(np.where(n0 > 0, n0 * np.log1p(-rho), 0.0))
               + gammaln(K * prior.eta) - K * gammaln(prior.eta)
               + np.sum((prior.eta - 1) * np.log(pi))
               + np.sum((prior.a - 1) * np.log(rho) + (prior.b - 1) * np.log1p(-rho))
               - K * K * betaln(prior.a, prior.b))
    return float(val)


def _store_labels(store, V, M):
    if store is None:
        return V * M <= 5_000_000
    return bool(store)


def _validate_log(log):
    if log.n_nodes < 1:
        raise ValueError("empty graph")


def gibbs_run(log: EventLog, K: int, prior: PriorConfig = PriorConfig(), M: int = 5000,
              rng=None, burn_in: int | None = None, store_labels: bool | None = None,
              init=None, include_self_loops: bool = False) -> Chain:
    """Gibbs sampler for a fixed number of classes ``K``.

    ``init`` optionally supplies ``(W, pi, rho)``; otherwise the proportions
    and reciprocities are drawn from the prior and labels from the
    proportions. ``burn_in`` defaults to half the chain. Self-loops are
    ignored unless ``include_self_loops`` is set.
    """
    if K < 1 or M < 1:
        raise ValueError("need K >= 1 and M >= 1")
    _validate_log(log)
    seed = rng if isinstance(rng, (int, np.integer)) else None
    rng = np.random.default_rng(rng)
    burn_in = M // 2 if burn_in is None else burn_in
    inc: Incidence = log.incidence
    loops = _loops(inc, include_self_loops)
    V = inc.n_nodes
    if init is None:
        pi = rng.dirichlet(np.full(K, prior.eta))
        rho = rng.beta(prior.a, prior.b, size=(K, K))
        W = rng.choice(K, size=V, p=pi).astype(np.int64)
    else:
        W, pi, rho = (np.array(x) for x in init)
        W = W.astype(np.int64)
    keep_w = _store_labels(store_labels, V, M)

    pis = np.empty((M, K))
    rhos = np.empty((M, K, K))
    lj = np.empty(M)
    labels = np.empty((M, V), dtype=np.int16) if keep_w else None
    label_counts = np.zeros((V, K), dtype=np.int64)
    rows = np.arange(V)
    for i in range(M):
        lpi, lr, l1r = _logs(pi, rho)
        _label_sweep(W, K, lpi, lr, l1r, inc.src, inc.tgt, inc.rec, inc.out_ptr,
                     inc.out_evt, inc.in_ptr, inc.in_evt, loops.self1, loops.self0,
                     rng.random(V))
        n1, n0 = _pair_counts(W, K, loops.src, loops.tgt, loops.rec)
        rho = rng.beta(prior.a + n1, prior.b + n0)
        pi = rng.dirichlet(prior.eta + np.bincount(W, minlength=K))
        pis[i] = pi
        rhos[i] = rho
        lj[i] = _log_joint(W, K, pi, rho, prior, n1, n0)
        if keep_w:
            labels[i] = W
        if i >= burn_in:
            label_counts[rows, W] += 1
    Ks = np.full(M, K, dtype=np.int64)
    K_plus = np.full(M, K, dtype=np.int64) if labels is None else np.array(
        [len(np.unique(w)) for w in labels], dtype=np.int64)
    return Chain(pis, rhos, Ks, K_plus, lj, burn_in, label_counts, labels, seed,
                 {"method": "gibbs", "K": K})


def k_conditional_logweights(K_plus: int, class_sizes, n_nodes: int, prior: PriorConfig):
    """Unnormalised log p(K | partition) for K = K_plus .. k_max."""
    Ks = np.arange(K_plus, prior.k_max + 1)
    eta = prior.eta
    sizes = np.asarray(class_sizes, dtype=float)
    return Ks, (bnb_log_pmf(Ks, prior.c1, prior.c2, prior.c3)
                + gammaln(Ks + 1) - gammaln(Ks - K_plus + 1)
                + gammaln(eta * Ks) - gammaln(n_nodes + eta * Ks)
                - K_plus * gammaln(eta) + np.sum(gammaln(sizes + eta)))


def _sample_log_categorical(lw, rng):
    p = np.exp(lw - np.max(lw))
    p /= p.sum()
    return int(rng.choice(len(p), p=p))


def telescoping_run(log: EventLog, prior: PriorConfig = PriorConfig(), K_init: int = 1,
                    M: int = 5000, rng=None, burn_in: int | None = None,
                    store_labels: bool | None = None,
                    include_self_loops: bool = False) -> Chain:
    """Telescoping sampler over (labels, pi, rho, K) with K in 1..k_max."""
    if not 1 <= K_init <= prior.k_max:
        raise ValueError("need 1 <= K_init <= k_max")
    if M < 1:
        raise ValueError("need M >= 1")
    _validate_log(log)
    seed = rng if isinstance(rng, (int, np.integer)) else None
    rng = np.random.default_rng(rng)
    burn_in = M // 2 if burn_in is None else burn_in
    inc = log.incidence
    loops = _loops(inc, include_self_loops)
    V = inc.n_nodes
    Kmax = prior.k_max
    K = K_init
    pi = rng.dirichlet(np.full(K, prior.eta))
    rho = rng.beta(prior.a, prior.b, size=(K, K))
    W = rng.choice(K, size=V, p=pi).astype(np.int64)
    keep_w = _store_labels(store_labels, V, M)

    pis = np.full((M, Kmax), np.nan)
    rhos = np.full((M, Kmax, Kmax), np.nan)
    Ks = np.empty(M, dtype=np.int64)
    Kp = np.empty(M, dtype=np.int64)
    lj = np.empty(M)
    labels = np.empty((M, V), dtype=np.int16) if keep_w else None
    label_counts = np.zeros((V, Kmax), dtype=np.int64)
    rows = np.arange(V)
    for i in range(M):
        # 1. labels, then move filled components to the front
        lpi, lr, l1r = _logs(pi, rho)
        _label_sweep(W, K, lpi, lr, l1r, inc.src, inc.tgt, inc.rec, inc.out_ptr,
                     inc.out_evt, inc.in_ptr, inc.in_evt, loops.self1, loops.self0,
                     rng.random(V))
        sizes = np.bincount(W, minlength=K)
        filled = np.flatnonzero(sizes > 0)
        K_plus = len(filled)
        perm = np.concatenate([filled, np.flatnonzero(sizes == 0)])
        inv = np.empty(K, dtype=np.int64)
        inv[perm] = np.arange(K)
        W = inv[W]
        pi = pi[perm]
        rho = rho[np.ix_(perm, perm)]
        sizes = sizes[perm]
        # 2. filled reciprocities
        n1, n0 = _pair_counts(W, K_plus, loops.src, loops.tgt, loops.rec)
        rho_f = rng.beta(prior.a + n1, prior.b + n0)
        # 3. number of components
        Kgrid, lw = k_conditional_logweights(K_plus, sizes[:K_plus], V, prior)
        K = int(Kgrid[_sample_log_categorical(lw, rng)])
        rho = rng.beta(prior.a, prior.b, size=(K, K))
        rho[:K_plus, :K_plus] = rho_f
        # 4. proportions
        counts = np.zeros(K)
        counts[:K_plus] = sizes[:K_plus]
        pi = rng.dirichlet(prior.eta + counts)

        pis[i, :K] = pi
        rhos[i, :K, :K] = rho
        Ks[i] = K
        Kp[i] = K_plus
        full_n1, full_n0 = _pair_counts(W, K, loops.src, loops.tgt, loops.rec)
        lj[i] = (_log_joint(W, K, pi, rho, prior, full_n1, full_n0)
                 + bnb_log_pmf(K, prior.c1, prior.c2, prior.c3))
        if keep_w:
            labels[i] = W
        if i >= burn_in:
            label_counts[rows, W] += 1
    return Chain(pis, rhos, Ks, Kp, lj, burn_in, label_counts, labels, seed,
                 {"method": "telescoping", "K_init": K_init})


# -- summaries --------------------------------------------------------------

def best_permutation(labels, reference, K):
    """Permutation ``perm`` maximising agreement of ``perm[labels]`` with ``reference``.

    Exhaustive for K <= 8, Hungarian assignment beyond.
    """
    labels = np.asarray(labels)
    reference = np.asarray(reference)
    conf = np.zeros((K, K))
    np.add.at(conf, (labels, reference), 1)
    if K <= 8:
        best, best_score = None, -1.0
        idx = np.arange(K)
        for p in permutations(range(K)):
            score = conf[idx, list(p)].sum()
            if score > best_score:
                best, best_score = np.array(p), score
        return best
    from scipy.optimize import linear_sum_assignment
    _, cols = linear_sum_assignment(-conf)
    return cols


def _relabel_params(pi, rho, perm):
    """Parameters after mapping old class ``c`` to new class ``perm[c]``."""
    order = np.argsort(perm)
    return pi[order], rho[np.ix_(order, order)]


@dataclass
class PosteriorSummary:
    K: int
    pi_mean: np.ndarray
    rho_mean: np.ndarray
    pi_interval: np.ndarray
    rho_interval: np.ndarray
    n_samples: int
    aligned: bool

    def to_dict(self) -> dict:
        return {
            "K": self.K, "n_samples": self.n_samples, "aligned": self.aligned,
            "pi_mean": self.pi_mean.tolist(), "rho_mean": self.rho_mean.tolist(),
            "pi_interval": self.pi_interval.tolist(),
            "rho_interval": self.rho_interval.tolist(),
        }


def posterior_summary(chain: Chain, level: float = 0.95, align: bool = False,
                      K: int | None = None) -> PosteriorSummary:
    """Posterior means and equal-tailed intervals of ``pi`` and ``rho``.

    Only post-burn-in iterates with ``K`` components are used (``K`` defaults
    to the most frequent value). With ``align=True`` each iterate is
    relabelled to best match the partition of the highest-density iterate.
    """
    idx = np.arange(chain.burn_in, len(chain))
    if len(idx) == 0:
        raise ValueError("chain has no post-burn-in samples")
    if K is None:
        vals, cnt = np.unique(chain.K[idx], return_counts=True)
        K = int(vals[np.argmax(cnt)])
    idx = idx[chain.K[idx] == K]
    if len(idx) == 0:
        raise ValueError(f"no post-burn-in samples with K={K}")
    pi = chain.pi[idx, :K].copy()
    rho = chain.rho[idx, :K, :K].copy()
    if align and K > 1:
        if chain.labels is None:
            raise ValueError("alignment needs stored label vectors")
        ref = chain.labels[idx[np.argmax(chain.log_joint[idx])]]
        for j, i in enumerate(idx):
            perm = best_permutation(chain.labels[i], ref, K)
            pi[j], rho[j] = _relabel_params(pi[j], rho[j], perm)
    lo, hi = (1 - level) / 2, 1 - (1 - level) / 2
    return PosteriorSummary(
        K, pi.mean(0), rho.mean(0),
        np.stack([np.quantile(pi, lo, axis=0), np.quantile(pi, hi, axis=0)], -1),
        np.stack([np.quantile(rho, lo, axis=0), np.quantile(rho, hi, axis=0)], -1),
        len(idx), bool(align and K > 1))
