"""
Choosing the number of classes and scoring fits against a known truth:
criterion argmax for the variational fits, posterior mode of K for the
telescoping sampler, and interval coverage after label alignment.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .mcmc import Chain, _relabel_params, best_permutation
from .simulate import MixtureParams


@dataclass
class SelectionReport:
    """Per-method criterion tables and chosen K, plus optional K posteriors."""

    tables: dict = field(default_factory=dict)
    chosen: dict = field(default_factory=dict)
    k_pmf: dict | None = None
    k_plus_pmf: dict | None = None
    diagnostics: dict = field(default_factory=dict)

    def merge(self, other: "SelectionReport") -> "SelectionReport":
        return SelectionReport({**self.tables, **other.tables}, {**self.chosen, **other.chosen},
                               other.k_pmf or self.k_pmf, other.k_plus_pmf or self.k_plus_pmf,
                               {**self.diagnostics, **other.diagnostics})

    def to_dict(self) -> dict:
        return {
            "tables": {m: {str(k): v for k, v in t.items()} for m, t in self.tables.items()},
            "chosen": dict(self.chosen),
            "k_pmf": None if self.k_pmf is None else {str(k): v for k, v in self.k_pmf.items()},
            "k_plus_pmf": None if self.k_plus_pmf is None
            else {str(k): v for k, v in self.k_plus_pmf.items()},
            "diagnostics": self.diagnostics,
        }


def argmax_smallest(table) -> int:
    """Key with the largest value; ties go to the smallest key."""
    if not table:
        raise ValueError("empty criterion table")
    best = max(table.values())
    return min(k for k, v in table.items() if v == best)


def select_k_variational(fits, criterion: str = "elbo", method: str | None = None) -> SelectionReport:
    """Pick K maximising ``criterion`` over ``fits`` (a mapping K -> value).

    Values may be plain numbers or objects with an ``elbo`` / ``icl``
    attribute or key.
    """
    if criterion not in ("elbo", "icl"):
        raise ValueError("criterion must be 'elbo' or 'icl'")
    if not fits:
        raise ValueError("no fits given")
    table = {int(k): _criterion_value(f, criterion) for k, f in fits.items()}
    ks = sorted(table)
    if ks != list(range(ks[0], ks[-1] + 1)):
        raise ValueError(f"fits must cover a contiguous K range, got {ks}")
    table = {k: table[k] for k in ks}
    name = method or criterion
    return SelectionReport({name: table}, {name: argmax_smallest(table)})


def _criterion_value(fit, criterion):
    if isinstance(fit, (int, float, np.floating, np.integer)):
        return float(fit)
    if isinstance(fit, dict):
        return float(fit[criterion])
    return float(getattr(fit, criterion))


def k_pmf(values) -> dict:
    vals, cnt = np.unique(np.asarray(values), return_counts=True)
    return {int(v): float(c) / cnt.sum() for v, c in zip(vals, cnt)}


def posterior_k_mode(chain: Chain) -> tuple[int, dict]:
    """Posterior mode of K from the post-burn-in iterates (ties: smallest K)."""
    ks = chain.K[chain.kept()]
    if len(ks) == 0:
        raise ValueError("chain has no post-burn-in samples")
    pmf = k_pmf(ks)
    return argmax_smallest(pmf), pmf


def telescoping_report(chain: Chain) -> SelectionReport:
    mode, pmf = posterior_k_mode(chain)
    return SelectionReport({}, {"telescoping": mode}, pmf, k_pmf(chain.K_plus[chain.kept()]))


# -- alignment and coverage ----------------------------------------------------

@dataclass
class Estimate:
    """Point estimates, optional equal-tailed intervals and hard labels of one fit."""

    pi: np.ndarray
    rho: np.ndarray
    labels: np.ndarray | None = None
    pi_interval: np.ndarray | None = None
    rho_interval: np.ndarray | None = None

    @property
    def K(self) -> int:
        return len(self.pi)

    def permuted(self, perm) -> "Estimate":
        """Relabel old class ``c`` as ``perm[c]`` in every field at once."""
        perm = np.asarray(perm)
        order = np.argsort(perm)
        pi, rho = _relabel_params(np.asarray(self.pi), np.asarray(self.rho), perm)
        return Estimate(
            pi, rho,
            None if self.labels is None else perm[np.asarray(self.labels)],
            None if self.pi_interval is None else np.asarray(self.pi_interval)[order],
            None if self.rho_interval is None
            else np.asarray(self.rho_interval)[np.ix_(order, order)])


def align_to_truth(est: Estimate, true_labels) -> Estimate:
    """Relabel ``est`` by the permutation that best matches the true partition."""
    if est.labels is None:
        raise ValueError("alignment needs hard labels")
    perm = best_permutation(est.labels, true_labels, est.K)
    return est.permuted(perm)


def param_names(K: int) -> list[str]:
    return [f"pi_{i + 1}" for i in range(K)] + \
        [f"rho_{m + 1}{r + 1}" for m in range(K) for r in range(K)]


def flatten_params(pi, rho) -> dict:
    K = len(pi)
    vals = list(np.asarray(pi, float)) + list(np.asarray(rho, float).reshape(-1))
    return dict(zip(param_names(K), map(float, vals)))


def coverage_eval(estimates, truth: MixtureParams, true_labels=None, drop_last_pi=True) -> dict:
    """Fraction of replicates whose interval contains each true parameter.

    ``true_labels`` (one label vector per replicate) triggers alignment of
    each estimate before checking. The last class proportion is implied by
    the others and is left out unless ``drop_last_pi=False``.
    """
    if truth is None:
        raise ValueError("coverage needs the true parameters")
    estimates = list(estimates)
    if not estimates:
        raise ValueError("no replicates given")
    if true_labels is not None:
        estimates = [align_to_truth(e, t) for e, t in zip(estimates, true_labels, strict=True)]
    K = truth.K
    hits = {n: 0 for n in param_names(K)}
    for e in estimates:
        if e.K != K or e.pi_interval is None or e.rho_interval is None:
            raise ValueError("every replicate needs intervals with the true K")
        lo = flatten_params(e.pi_interval[:, 0], e.rho_interval[..., 0])
        hi = flatten_params(e.pi_interval[:, 1], e.rho_interval[..., 1])
        for name, v in flatten_params(truth.pi, truth.rho).items():
            hits[name] += lo[name] <= v <= hi[name]
    out = {n: h / len(estimates) for n, h in hits.items()}
    if drop_last_pi:
        out.pop(f"pi_{K}")
    return out


def mean_estimates(estimates) -> dict:
    """Average of flattened point estimates across replicates."""
    rows = [flatten_params(e.pi, e.rho) for e in estimates]
    return {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}


# -- tabular output -------------------------------------------------------------

def report_rows(fits) -> list[dict]:
    """One row per (fit, parameter) from fit dictionaries.

    Each fit needs ``method`` and ``pi``/``rho`` (or ``pi_mean``/``rho_mean``);
    intervals and ``rand`` are copied when present.
    """
    rows = []
    for f in fits:
        pi = np.asarray(f.get("pi_mean", f.get("pi")), float)
        rho = np.asarray(f.get("rho_mean", f.get("rho")), float)
        est = flatten_params(pi, rho)
        lo = hi = None
        if "pi_interval" in f and "rho_interval" in f:
            piv, riv = np.asarray(f["pi_interval"]), np.asarray(f["rho_interval"])
            lo = flatten_params(piv[:, 0], riv[..., 0])
            hi = flatten_params(piv[:, 1], riv[..., 1])
        for name, v in est.items():
            rows.append({"source": f.get("source", ""), "method": f["method"], "K": len(pi),
                         "parameter": name, "estimate": v,
                         "lower": "" if lo is None else lo[name],
                         "upper": "" if hi is None else hi[name],
                         "rand": f.get("rand", "")})
    return rows


def rows_to_csv(rows, columns=None) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    columns = columns or list(rows[0])
    w = csv.DictWriter(buf, columns, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def selection_rows(report: SelectionReport) -> list[dict]:
    rows = []
    for method, table in report.tables.items():
        for k, v in table.items():
            rows.append({"method": method, "K": k, "value": float(v),
                         "chosen": int(report.chosen.get(method) == k)})
    if report.k_pmf:
        for k, p in report.k_pmf.items():
            rows.append({"method": "telescoping", "K": k, "value": p,
                         "chosen": int(report.chosen.get("telescoping") == k)})
    return rows


__all__ = [
    "SelectionReport", "select_k_variational", "posterior_k_mode", "telescoping_report",
    "Estimate", "align_to_truth", "coverage_eval", "mean_estimates", "flatten_params",
    "param_names", "argmax_smallest", "k_pmf", "report_rows", "rows_to_csv", "selection_rows",
]
