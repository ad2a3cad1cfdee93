"""
Mean-field variational inference for the reciprocity mixture.

``cavi_run`` is variational Bayes with Dirichlet / Beta factors on the
proportions and reciprocities. ``vem_run`` is variational EM: a mean-field
E-step over the labels and closed-form M-step point estimates.

Self-loop events are excluded from every variational sum. Responsibility
updates run node by node in place (Gauss-Seidel), so each update is an exact
coordinate maximiser and the objective never decreases. ``mode="jacobi"``
updates all nodes from the previous sweep instead; it is faster to reason
about in batch but loses the monotonicity guarantee.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import stats
from scipy.special import digamma, gammaln, xlogy

from .extremes import ExtremesError, angular_set, kmeans_1d, min_distance_threshold
from .likelihood import loglik_pi_rho
from .mcmc import PriorConfig
from .model import EventLog, replay
from .simulate import MixtureParams

log_ = logging.getLogger(__name__)


@numba.njit(cache=True)
def _tau_sweep(tau_w, tau_r, base, L1, L0, src, tgt, rec, out_ptr, out_evt, in_ptr, in_evt):
    """One pass of responsibility updates.

    ``L1[m, r]`` / ``L0[m, r]`` weight a reciprocated / unreciprocated event
    whose target has class m and source class r.
    """
    V, K = tau_w.shape
    a1 = np.empty(K)
    a0 = np.empty(K)
    b1 = np.empty(K)
    b0 = np.empty(K)
    lw = np.empty(K)
    for v in range(V):
        for m in range(K):
            a1[m] = 0.0
            a0[m] = 0.0
            b1[m] = 0.0
            b0[m] = 0.0
        for j in range(out_ptr[v], out_ptr[v + 1]):
            k = out_evt[j]
            t = tgt[k]
            if rec[k] == 1:
                for m in range(K):
                    a1[m] += tau_r[t, m]
            else:
                for m in range(K):
                    a0[m] += tau_r[t, m]
        for j in range(in_ptr[v], in_ptr[v + 1]):
            k = in_evt[j]
            s = src[k]
            if rec[k] == 1:
                for r in range(K):
                    b1[r] += tau_r[s, r]
            else:
                for r in range(K):
                    b0[r] += tau_r[s, r]
        mx = -np.inf
        for l in range(K):
            acc = base[l]
            for m in range(K):
                if a1[m] > 0:
                    acc += a1[m] * L1[m, l]
                if a0[m] > 0:
                    acc += a0[m] * L0[m, l]
                if b1[m] > 0:
                    acc += b1[m] * L1[l, m]
                if b0[m] > 0:
                    acc += b0[m] * L0[l, m]
            lw[l] = acc
            if acc > mx:
                mx = acc
        if mx == -np.inf:
            for l in range(K):
                tau_w[v, l] = tau_r[v, l]
            continue
        tot = 0.0
        for l in range(K):
            lw[l] = np.exp(lw[l] - mx)
            tot += lw[l]
        for l in range(K):
            tau_w[v, l] = lw[l] / tot


def _sweep(tau, base, L1, L0, inc, mode):
    if mode == "gauss-seidel":
        _tau_sweep(tau, tau, base, L1, L0, inc.src, inc.tgt, inc.rec,
                   inc.out_ptr, inc.out_evt, inc.in_ptr, inc.in_evt)
        return tau
    if mode == "jacobi":
        new = np.empty_like(tau)
        _tau_sweep(new, tau, base, L1, L0, inc.src, inc.tgt, inc.rec,
                   inc.out_ptr, inc.out_evt, inc.in_ptr, inc.in_evt)
        return new
    raise ValueError(f"unknown update mode {mode!r}")


def soft_pair_counts(tau, log: EventLog):
    """Expected ``(C1, C0)``; ``C1[m, r] = sum_k tau[t_k, m] tau[s_k, r] 1{R_k = 1}``.

    Self-loops are excluded.
    """
    inc = log.incidence
    keep = inc.proper
    s, t, R = inc.src[keep], inc.tgt[keep], inc.rec[keep]
    one = R == 1
    C1 = tau[t[one]].T @ tau[s[one]]
    C0 = tau[t[~one]].T @ tau[s[~one]]
    return C1, C0


def entropy(tau) -> float:
    return float(-np.sum(xlogy(tau, tau)))


def _random_tau(V, K, rng):
    return rng.dirichlet(np.ones(K), size=V)


# -- variational Bayes -------------------------------------------------------

@dataclass(eq=False)
class VariationalState:
    tau: np.ndarray
    d: np.ndarray
    omega: np.ndarray
    xi: np.ndarray
    elbo_trace: list = field(default_factory=list)
    n_sweeps: int = 0
    converged: bool = False

    @property
    def K(self) -> int:
        return self.tau.shape[1]

    @property
    def elbo(self) -> float:
        return self.elbo_trace[-1]

    @property
    def pi_mean(self) -> np.ndarray:
        return self.d / self.d.sum()

    @property
    def rho_mean(self) -> np.ndarray:
        return self.omega / (self.omega + self.xi)

    def hard_labels(self) -> np.ndarray:
        return np.argmax(self.tau, axis=1)

    def intervals(self, level=0.95):
        """Equal-tailed marginal intervals ``(pi_interval, rho_interval)``."""
        lo, hi = (1 - level) / 2, 1 - (1 - level) / 2
        rest = self.d.sum() - self.d
        pi_iv = np.stack([stats.beta.ppf(lo, self.d, rest), stats.beta.ppf(hi, self.d, rest)], -1)
        rho_iv = np.stack([stats.beta.ppf(lo, self.omega, self.xi),
                           stats.beta.ppf(hi, self.omega, self.xi)], -1)
        return pi_iv, rho_iv

    def to_dict(self, level=0.95) -> dict:
        pi_iv, rho_iv = self.intervals(level)
        return {
            "K": self.K, "elbo": self.elbo, "elbo_trace": list(self.elbo_trace),
            "n_sweeps": self.n_sweeps, "converged": self.converged,
            "pi_mean": self.pi_mean.tolist(), "rho_mean": self.rho_mean.tolist(),
            "pi_interval": pi_iv.tolist(), "rho_interval": rho_iv.tolist(),
            "d": self.d.tolist(), "omega": self.omega.tolist(), "xi": self.xi.tolist(),
        }


def _vb_factors(tau, log, prior):
    C1, C0 = soft_pair_counts(tau, log)
    d = prior.eta + tau.sum(0)
    return d, prior.a + C1, prior.b + C0


def elbo_vb(state: VariationalState, prior: PriorConfig) -> float:
    """Evidence lower bound at optimal Dirichlet / Beta factors for ``state.tau``."""
    d, om, xi = state.d, state.omega, state.xi
    if (d <= 0).any() or (om <= 0).any() or (xi <= 0).any():
        raise ValueError("Dirichlet and Beta parameters must be positive")
    K = len(d)
    dir_term = gammaln(K * prior.eta) + gammaln(d).sum() - gammaln(d.sum()) - K * gammaln(prior.eta)
    beta_term = np.sum(gammaln(prior.a + prior.b) + gammaln(om) + gammaln(xi)
                       - gammaln(om + xi) - gammaln(prior.a) - gammaln(prior.b))
    return float(dir_term + beta_term + entropy(state.tau))


def cavi_run(log: EventLog, K: int, prior: PriorConfig = PriorConfig(), eps: float = 0.01,
             max_sweeps: int = 500, rng=None, tau_init=None,
             mode: str = "gauss-seidel") -> VariationalState:
    """Coordinate ascent variational Bayes with ``K`` classes.

    Each sweep refreshes the Dirichlet and Beta factors, records the ELBO,
    and stops once it gains less than ``eps``; otherwise responsibilities
    are updated.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    rng = np.random.default_rng(rng)
    inc = log.incidence
    tau = _random_tau(inc.n_nodes, K, rng) if tau_init is None else np.array(tau_init, dtype=float)
    state = VariationalState(tau, *_vb_factors(tau, log, prior))
    for sweep in range(max_sweeps + 1):
        state.d, state.omega, state.xi = _vb_factors(state.tau, log, prior)
        val = elbo_vb(state, prior)
        if not np.isfinite(val):
            raise FloatingPointError(f"non-finite ELBO at sweep {sweep}")
        state.elbo_trace.append(val)
        state.n_sweeps = sweep
        if sweep > 0 and val - state.elbo_trace[-2] < eps:
            state.converged = True
            break
        if sweep == max_sweeps:
            break
        base = digamma(state.d) - digamma(state.d.sum())
        tot = digamma(state.omega + state.xi)
        state.tau = _sweep(state.tau, base, digamma(state.omega) - tot,
                           digamma(state.xi) - tot, inc, mode)
    return state


# -- variational EM ----------------------------------------------------------

def elbo_vem(tau, mix: MixtureParams, log: EventLog, include_seed: bool = True) -> float:
    """Mean-field lower bound on the complete-data log-likelihood.

    The class-proportion term covers every node by default (seed nodes carry
    the same i.i.d. class prior as arrivals); ``include_seed=False``
    restricts it to nodes created by J=1 / J=3 events. ``-inf`` is returned
    when a zero-probability outcome receives positive weight.
    """
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (log.n_nodes, mix.K):
        raise ValueError(f"tau must be {log.n_nodes}x{mix.K}")
    rows = tau if include_seed else tau[log.arrivals]
    C1, C0 = soft_pair_counts(tau, log)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (np.sum(xlogy(rows.sum(0), mix.pi)) + entropy(tau)
               + np.sum(xlogy(C1, mix.rho)) + np.sum(xlogy(C0, 1.0 - mix.rho)))
    return float(val) if np.isfinite(val) else -np.inf


def m_step(tau, log: EventLog):
    """Closed-form maximisers ``(pi, rho, degenerate_mask)`` given ``tau``.

    Pairs with zero expected events get ``rho = 0.5`` and are flagged.
    """
    pi = tau.sum(0) / tau.shape[0]
    pi = pi / pi.sum()
    C1, C0 = soft_pair_counts(tau, log)
    den = C1 + C0
    empty = den <= 0
    rho = np.where(empty, 0.5, C1 / np.where(empty, 1.0, den))
    return pi, np.clip(rho, 0.0, 1.0), empty


@dataclass(eq=False)
class VemFit:
    mix: MixtureParams
    tau: np.ndarray
    elbo: float
    labels: np.ndarray
    n_rounds: int
    n_inner: list
    converged: bool
    degenerate: bool
    init: str
    estep_traces: list = field(default_factory=list)
    mstep_elbos: list = field(default_factory=list)

    @property
    def K(self) -> int:
        return self.mix.K

    def to_dict(self) -> dict:
        return {
            "K": self.K, "pi": self.mix.pi.tolist(), "rho": self.mix.rho.tolist(),
            "elbo": self.elbo, "n_rounds": self.n_rounds, "n_inner": list(self.n_inner),
            "converged": self.converged, "degenerate": self.degenerate, "init": self.init,
        }


RHO_BOUND = 1e-10


def _bounded(mix: MixtureParams) -> MixtureParams:
    # keep rho off {0, 1}: a hard zero would forbid a pair for good and
    # send the bound to -inf; clipping is the exact maximiser on the box
    return MixtureParams(mix.pi, np.clip(mix.rho, RHO_BOUND, 1.0 - RHO_BOUND))


def _safe_logs(mix):
    with np.errstate(divide="ignore"):
        return np.log(mix.pi), np.log(mix.rho), np.log1p(-mix.rho)


def vem_run(log: EventLog, K: int, eps: float = 0.01, kappa: float = 0.01,
            max_rounds: int = 1000, max_inner: int = 500, rng=None,
            init: str = "extremes", mode: str = "gauss-seidel",
            init_params: MixtureParams | None = None, tau_init=None) -> VemFit:
    """Variational EM with ``K`` classes.

    Responsibilities start uniformly at random on the simplex; the starting
    parameters come from the tail-angle clustering (``init="extremes"``),
    from a random draw (``init="random"``) or from ``init_params``. The
    E-step cycles responsibility updates until the ELBO gains less than
    ``eps`` (or ``max_inner`` passes); the loop ends when no parameter moves
    by more than ``kappa``. Reciprocities are kept inside
    ``[RHO_BOUND, 1 - RHO_BOUND]``.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    rng = np.random.default_rng(rng)
    inc = log.incidence
    V = inc.n_nodes
    tau = _random_tau(V, K, rng) if tau_init is None else np.array(tau_init, dtype=float)
    if init_params is not None:
        mix, init = init_params, "given"
    elif init == "extremes":
        pi0, rho0, info = vem_init_extremes(log, K, rng=rng)
        mix, init = MixtureParams(pi0, rho0), info["init"]
    elif init == "random":
        mix = _random_params(K, rng)
    else:
        raise ValueError(f"unknown init {init!r}")
    mix = _bounded(mix)

    estep_traces, mstep_elbos, n_inner = [], [], []
    degenerate = False
    converged = False
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        lpi, lr, l1r = _safe_logs(mix)
        prev = elbo_vem(tau, mix, log)
        trace = [prev]
        for _ in range(max_inner):
            tau = _sweep(tau, lpi, lr, l1r, inc, mode)
            cur = elbo_vem(tau, mix, log)
            trace.append(cur)
            if not cur - prev > eps:
                break
            prev = cur
        estep_traces.append(trace)
        n_inner.append(len(trace) - 1)
        pi, rho, empty = m_step(tau, log)
        degenerate = bool(empty.any())
        new = _bounded(MixtureParams(pi, rho))
        mstep_elbos.append((trace[-1], elbo_vem(tau, new, log)))
        change = max(np.abs(new.pi - mix.pi).max(), np.abs(new.rho - mix.rho).max())
        mix = new
        if change < kappa:
            converged = True
            break
    return VemFit(mix, tau, elbo_vem(tau, mix, log), np.argmax(tau, axis=1), rounds,
                  n_inner, converged, degenerate, init, estep_traces, mstep_elbos)


def _random_params(K, rng):
    return MixtureParams(rng.dirichlet(np.ones(K)), rng.uniform(size=(K, K)))


def hard_params(labels, tau_nodes, log: EventLog, K: int):
    """Empirical class shares over ``tau_nodes`` and reciprocation rates among
    events (self-loops excluded) whose endpoints both lie in ``tau_nodes``."""
    labels_full = np.full(log.n_nodes, -1, dtype=np.int64)
    labels_full[tau_nodes] = labels
    pi = np.bincount(labels, minlength=K) / len(labels)
    inc = log.incidence
    s, t, R = inc.src, inc.tgt, inc.rec
    keep = inc.proper & (labels_full[s] >= 0) & (labels_full[t] >= 0)
    n1 = np.zeros((K, K))
    n0 = np.zeros((K, K))
    m, r = labels_full[t[keep]], labels_full[s[keep]]
    np.add.at(n1, (m[R[keep] == 1], r[R[keep] == 1]), 1)
    np.add.at(n0, (m[R[keep] == 0], r[R[keep] == 0]), 1)
    den = n1 + n0
    rho = np.where(den > 0, n1 / np.maximum(den, 1), 0.5)
    return pi, rho


def vem_init_extremes(log: EventLog, K: int, rng=None):
    """Starting ``(pi, rho, info)`` from K-means on the tail out-degree angles.

    Falls back to a random start (with a warning) when the tail is too small
    or the angles cannot support K clusters.
    """
    rng = np.random.default_rng(rng)
    state = replay(log)
    info = {"init": "extremes"}
    try:
        total = state.total_degree
        fit = min_distance_threshold(total[total > 0])
        ang = angular_set(state, fit.threshold)
        if len(ang.values) < K:
            raise ExtremesError(f"only {len(ang.values)} tail nodes for K={K}")
        labels, centers = kmeans_1d(ang.values, K, rng=rng)
    except ExtremesError as exc:
        log_.warning("extremes initialisation failed (%s); using a random start", exc)
        mix = _random_params(K, rng)
        return mix.pi, mix.rho, {"init": "random-fallback", "reason": str(exc)}
    pi, rho = hard_params(labels, ang.nodes - 1, log, K)
    info.update(threshold=fit.threshold, n_tail=len(ang.values), centers=centers.tolist())
    return pi, rho, info


def icl(fit: VemFit, log: EventLog) -> float:
    """Integrated classification likelihood of a VEM fit."""
    K = fit.K
    return (loglik_pi_rho(log, fit.labels, fit.mix)
            - K * K / 2 * np.log(log.n_events) - (K - 1) / 2 * np.log(log.n_nodes))
