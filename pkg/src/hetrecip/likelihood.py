"""
Likelihood of the attachment dynamics and of the reciprocity mixture, plus
maximum likelihood estimation of the attachment parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy import optimize
from scipy.special import xlogy

from .model import EventLog
from .simulate import GlobalParams, MixtureParams


class NoRootError(RuntimeError):
    """The offset score equation has no sign change on the search bracket.

    ``diagnosis`` is one of ``"flat"`` (score identically zero),
    ``"boundary-low"`` (score negative everywhere, likelihood increasing
    towards the lower end) or ``"boundary-high"`` (score positive
    everywhere, no finite maximiser).
    """

    def __init__(self, diagnosis, side, low, high):
        super().__init__(f"no root for delta_{side}: {diagnosis} "
                         f"(score {low:.3g} at lower end, {high:.3g} at upper end)")
        self.diagnosis = diagnosis
        self.side = side


@dataclass
class ThetaFit:
    alpha: float
    beta: float
    delta_in: float
    delta_out: float
    residual_in: float
    residual_out: float
    loglik: float

    def params(self) -> GlobalParams:
        return GlobalParams(self.alpha, self.beta, self.delta_in, self.delta_out)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha, "beta": self.beta,
            "delta_in": self.delta_in, "delta_out": self.delta_out,
            "loglik": self.loglik,
            "residuals": {"delta_in": self.residual_in, "delta_out": self.residual_out},
        }


@numba.njit(cache=True)
def _trajectory(seed_in, seed_out, J, s, t, R, n_nodes_final):
    n = len(J)
    din = np.zeros(n_nodes_final, dtype=np.int64)
    dout = np.zeros(n_nodes_final, dtype=np.int64)
    V0 = len(seed_in)
    E = 0
    for v in range(V0):
        din[v] = seed_in[v]
        dout[v] = seed_out[v]
        E += seed_in[v]
    V = V0
    din_t = np.zeros(n, dtype=np.int64)
    dout_s = np.zeros(n, dtype=np.int64)
    Vk = np.zeros(n, dtype=np.int64)
    Ek = np.zeros(n, dtype=np.int64)
    for k in range(n):
        a = s[k] - 1
        b = t[k] - 1
        din_t[k] = din[b]
        dout_s[k] = dout[a]
        Vk[k] = V
        Ek[k] = E
        if J[k] != 2:
            V += 1
        dout[a] += 1
        din[b] += 1
        E += 1
        if R[k] == 1:
            dout[b] += 1
            din[a] += 1
            E += 1
    return din_t, dout_s, Vk, Ek


def trajectory(log: EventLog):
    """Per-step pre-event quantities along the replayed graph sequence.

    Returns ``(D_in(t_k), D_out(s_k), |V(k-1)|, |E(k-1)|)`` arrays, each
    measured immediately before step ``k``.
    """
    return _trajectory(log.seed_in, log.seed_out, log.scenario, log.source,
                       log.target, log.reciprocated, log.n_nodes)


def estimate_alpha_beta(log: EventLog):
    if log.n_events < 1:
        raise ValueError("cannot estimate scenario probabilities from an empty log")
    n = log.n_events
    return (float(np.count_nonzero(log.scenario == 1)) / n,
            float(np.count_nonzero(log.scenario == 2)) / n)


def _side_data(log, side):
    din_t, dout_s, Vk, Ek = trajectory(log)
    if side == "in":
        mask = log.scenario != 3
        D = din_t[mask]
    elif side == "out":
        mask = log.scenario != 1
        D = dout_s[mask]
    else:
        raise ValueError("side must be 'in' or 'out'")
    return D.astype(float), Vk[mask].astype(float), Ek[mask].astype(float)


def delta_score(log: EventLog, delta, side="in"):
    """Derivative of the attachment log-likelihood in ``delta_in`` / ``delta_out``."""
    D, V, E = _side_data(log, side)
    return _score(D, V, E, delta)


def _score(D, V, E, delta):
    return float(np.sum(1.0 / (D + delta)) - np.sum(V / (E + delta * V)))


def _score_prime(D, V, E, delta):
    return float(-np.sum(1.0 / (D + delta) ** 2) + np.sum(V * V / (E + delta * V) ** 2))


def estimate_delta(log: EventLog, side: str = "in", bracket=(1e-8, 1e6), tol=1e-10):
    """Root of the offset score equation on ``bracket``.

    Returns ``(delta_hat, residual)``. Raises :class:`NoRootError` when the
    score does not change sign on the bracket.
    """
    D, V, E = _side_data(log, side)
    if len(D) == 0:
        raise ValueError(f"no events inform delta_{side}")
    lo, hi = bracket
    f_lo, f_hi = _score(D, V, E, lo), _score(D, V, E, hi)
    scale = np.sum(1.0 / (D + lo))
    if np.allclose(D * V, E, rtol=0, atol=1e-9 * np.maximum(1, E)) or (
            abs(f_lo) <= 1e-12 * scale and abs(f_hi) <= 1e-12 * scale):
        raise NoRootError("flat", side, f_lo, f_hi)
    if f_lo < 0 and f_hi < 0:
        raise NoRootError("boundary-low", side, f_lo, f_hi)
    if f_lo > 0 and f_hi > 0:
        raise NoRootError("boundary-high", side, f_lo, f_hi)
    root = optimize.brentq(lambda d: _score(D, V, E, d), lo, hi,
                           xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    # Newton polish; keep whichever iterate has the smallest residual
    best, best_r = root, abs(_score(D, V, E, root))
    x = root
    for _ in range(8):
        if best_r < tol * 1e-2:
            break
        fp = _score_prime(D, V, E, x)
        if fp == 0:
            break
        x = x - _score(D, V, E, x) / fp
        if not lo < x < hi:
            break
        r = abs(_score(D, V, E, x))
        if r < best_r:
            best, best_r = x, r
    return float(best), float(_score(D, V, E, best))


def loglik_theta(log: EventLog, theta: GlobalParams) -> float:
    """Log-probability of the event sequence under the attachment dynamics.

    Returns ``-inf`` when a scenario of probability zero occurs.
    """
    J = log.scenario
    counts = np.array([np.count_nonzero(J == j) for j in (1, 2, 3)], dtype=float)
    probs = np.array([theta.alpha, theta.beta, 1.0 - theta.alpha - theta.beta])
    probs = np.clip(probs, 0.0, 1.0)
    with np.errstate(divide="ignore"):
        total = float(np.sum(xlogy(counts, probs)))
    if not np.isfinite(total):
        return -np.inf
    din_t, dout_s, Vk, Ek = trajectory(log)
    m_in = J != 3
    m_out = J != 1
    total += float(np.sum(np.log((din_t[m_in] + theta.delta_in)
                                 / (Ek[m_in] + theta.delta_in * Vk[m_in]))))
    total += float(np.sum(np.log((dout_s[m_out] + theta.delta_out)
                                 / (Ek[m_out] + theta.delta_out * Vk[m_out]))))
    return total


def fit_theta(log: EventLog) -> ThetaFit:
    alpha, beta = estimate_alpha_beta(log)
    d_in, r_in = estimate_delta(log, "in")
    d_out, r_out = estimate_delta(log, "out")
    theta = GlobalParams(alpha, beta, d_in, d_out)
    return ThetaFit(alpha, beta, d_in, d_out, r_in, r_out, loglik_theta(log, theta))


def arrival_class_counts(log: EventLog, labels, K, include_seed=False):
    """Number of arriving nodes (optionally all nodes) in each class."""
    nodes = np.arange(log.n_nodes) if include_seed else log.arrivals
    return np.bincount(np.asarray(labels)[nodes], minlength=K).astype(float)


def loglik_pi_rho(log: EventLog, labels, mix: MixtureParams, include_seed=False) -> float:
    """Complete-data log-likelihood of labels and reciprocity outcomes.

    The class-proportion term runs over nodes created by J=1 / J=3 events;
    ``include_seed=True`` adds the seed nodes as well. Returns ``-inf`` when
    an observed outcome has probability zero.
    """
    labels = np.asarray(labels)
    if len(labels) != log.n_nodes:
        raise ValueError(f"need {log.n_nodes} labels, got {len(labels)}")
    K = mix.K
    if len(labels) and (labels.min() < 0 or labels.max() >= K):
        raise ValueError("labels out of range for K")
    counts = arrival_class_counts(log, labels, K, include_seed)
    n1, n0 = log.reciprocal_counts(labels, K)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (np.sum(xlogy(counts, mix.pi)) + np.sum(xlogy(n1, mix.rho))
               + np.sum(xlogy(n0, 1.0 - mix.rho)))
    return float(val) if np.isfinite(val) else -np.inf
