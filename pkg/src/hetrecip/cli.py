"""
Command-line entry point.

Every subcommand reads its inputs, validates the resolved configuration
before any computation, and writes its outputs into ``--out`` atomically
together with ``config.json``, an echo of the full configuration that
reproduces the run. Settings may also come from a flat ``key = value``
config file passed as ``--config``; command-line flags take precedence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .extremes import ExtremesError, angular_set, kmeans_1d, min_distance_threshold
from .ingest import ingest, read_edgelist_csv
from .likelihood import NoRootError, fit_theta
from .mcmc import PriorConfig, gibbs_run, posterior_summary, telescoping_run
from .model import (EVENT_HEADER, EventLog, GraphState, rand_index, read_event_log,
                    read_labels_csv, replay, seed_dict)
from .selection import (SelectionReport, report_rows, rows_to_csv, select_k_variational,
                        selection_rows, telescoping_report)
from .simulate import GlobalParams, MixtureParams, generate
from .variational import cavi_run, icl, vem_run

SCHEMA_VERSION = 1
log = logging.getLogger("hetrecip")


class ConfigError(ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


# -- config files --------------------------------------------------------------

def parse_config_text(text: str, origin: str = "<config>") -> dict:
    """Parse flat ``key = value`` lines.

    Blank lines and ``#`` comments are skipped. Values may be double-quoted
    strings, ``true``/``false``, numbers, bracketed lists ``[1, 2]`` or bare
    words. Dashes in keys are read as underscores. Section headers and
    repeated keys are errors.
    """
    out = {}
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            raise ConfigError(f"{origin}:{i}", "sections are not supported (flat keys only)")
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{origin}:{i}", f"expected 'key = value', got {raw!r}")
        key = key.strip().replace("-", "_")
        if not key:
            raise ConfigError(f"{origin}:{i}", "empty key")
        if key in out:
            raise ConfigError(f"{origin}:{i}", f"duplicate key {key!r}")
        out[key] = _parse_value(value.strip(), f"{origin}:{i}")
    return out


def _parse_value(v: str, where: str):
    if v.startswith('"'):
        if len(v) < 2 or not v.endswith('"'):
            raise ConfigError(where, "unterminated string")
        return v[1:-1]
    if "#" in v:
        v = v.split("#", 1)[0].strip()
    if v.startswith("["):
        try:
            # numeric lists, nested ones included
            return json.loads(v)
        except json.JSONDecodeError:
            pass
        if not v.endswith("]"):
            raise ConfigError(where, "unterminated list")
        body = v[1:-1].strip()
        return [] if not body else [_parse_value(x.strip(), where) for x in body.split(",")]
    if v in ("true", "false"):
        return v == "true"
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    if not v:
        raise ConfigError(where, "missing value")
    return v


def read_config(path, command: str | None = None) -> dict:
    """Read a flat config file, or a ``config.json`` echoed by an earlier run."""
    text = Path(path).read_text()
    if str(path).endswith(".json"):
        try:
            cfg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"invalid JSON ({exc})") from None
        if not isinstance(cfg, dict):
            raise ConfigError(str(path), "expected a JSON object")
        echoed = cfg.pop("command", command)
        if command is not None and echoed != command:
            raise ConfigError("command", f"config is for {echoed!r}, not {command!r}")
        for k in ("schema_version", "version"):
            cfg.pop(k, None)
        return {k: v for k, v in cfg.items() if v is not None}
    return parse_config_text(text, str(path))


def _config_to_string(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ",".join(_config_to_string(x) for x in value)
    return str(value)


def apply_config(sub: argparse.ArgumentParser, cfg: dict) -> None:
    """Install config values as defaults of ``sub`` (so flags still win)."""
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help",)}
    defaults = {}
    for key, value in cfg.items():
        if key in ("config", "out", "command") or key not in actions:
            raise ConfigError(key, "unknown setting for this subcommand")
        act = actions[key]
        if isinstance(act, argparse._StoreTrueAction):
            if not isinstance(value, bool):
                raise ConfigError(key, "expected true or false")
            defaults[key] = value
            continue
        text = _config_to_string(value)
        try:
            defaults[key] = act.type(text) if act.type else text
        except (ValueError, TypeError, argparse.ArgumentTypeError) as exc:
            raise ConfigError(key, str(exc)) from None
        if act.choices is not None and defaults[key] not in act.choices:
            raise ConfigError(key, f"must be one of {sorted(act.choices)}")
    sub.set_defaults(**defaults)


# -- value types -----------------------------------------------------------------

def float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in str(text).replace(";", ",").split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def matrix(text: str) -> list[list[float]]:
    """``"a,b;c,d"`` rows separated by semicolons, or a flat row-major list."""
    text = str(text)
    if ";" in text:
        rows = [float_list(r) for r in text.split(";") if r.strip()]
    else:
        flat = float_list(text)
        K = int(round(np.sqrt(len(flat))))
        if K * K != len(flat):
            raise argparse.ArgumentTypeError(f"{len(flat)} values do not form a square matrix")
        rows = [flat[i * K:(i + 1) * K] for i in range(K)]
    if any(len(r) != len(rows) for r in rows):
        raise argparse.ArgumentTypeError("matrix must be square")
    return rows


def k_list(text: str) -> list[int]:
    """``"2"``, ``"1,2,3"`` or ``"1-4"``."""
    out = []
    try:
        for part in str(text).split(","):
            part = part.strip()
            if "-" in part:
                lo, hi = part.split("-")
                out.extend(range(int(lo), int(hi) + 1))
            elif part:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected K values like 2, 1,2,3 or 1-4, got {text!r}")
    return out


def path_list(text: str) -> list[str]:
    return [p for p in str(text).split(",") if p]


# -- output helpers ----------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"cannot serialise {type(x).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


class Outputs:
    """Collects output files in memory and commits them with atomic renames."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.files: dict[str, str] = {}

    def add(self, name: str, text: str) -> None:
        self.files[name] = text

    def json(self, name: str, obj) -> None:
        self.add(name, dumps(obj))

    def commit(self) -> list[Path]:
        self.directory.mkdir(parents=True, exist_ok=True)
        written = []
        for name, text in self.files.items():
            target = self.directory / name
            fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=f".{name}.", suffix=".tmp")
            try:
                with os.fdopen(fd, "w", newline="") as fh:
                    fh.write(text)
                os.replace(tmp, target)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise
            written.append(target)
        return written


def events_csv(log_: EventLog) -> str:
    lines = [",".join(EVENT_HEADER)]
    lines += [f"{e.k},{e.scenario},{e.source},{e.target},{e.reciprocated}" for e in log_.events()]
    return "\n".join(lines) + "\n"


def labels_csv(labels) -> str:
    rows = ["node,class"] + [f"{v},{int(c) + 1}" for v, c in enumerate(np.asarray(labels), 1)]
    return "\n".join(rows) + "\n"


# -- subcommands -------------------------------------------------------------------

def _require(args, *names):
    for n in names:
        if getattr(args, n, None) in (None, "", []):
            raise ConfigError(n, "is required")


def _check(cond, field, msg):
    if not cond:
        raise ConfigError(field, msg)


def _load_log(args) -> EventLog:
    _require(args, "events")
    seed_path = args.seed_json or str(Path(args.events).with_name("seed.json"))
    return read_event_log(args.events, seed_path)


def _prior(args) -> PriorConfig:
    c1, c2, c3 = args.bnb
    return PriorConfig(args.a, args.b, args.eta, c1, c2, c3, args.k_max)


def validate_prior(args):
    for n in ("a", "b", "eta"):
        _check(getattr(args, n) > 0, n, "must be positive")
    if hasattr(args, "bnb"):
        _check(len(args.bnb) == 3 and all(c > 0 for c in args.bnb), "bnb",
               "needs three positive numbers c1,c2,c3")
        _check(args.k_max >= 1, "k_max", "must be at least 1")


def cmd_simulate(args, out: Outputs):
    _require(args, "n", "pi", "rho")
    _check(args.n >= 0, "n", "must be nonnegative")
    try:
        theta = GlobalParams(args.alpha, args.beta, args.delta_in, args.delta_out)
    except ValueError as exc:
        raise ConfigError("alpha/beta/delta_in/delta_out", str(exc)) from None
    try:
        mix = MixtureParams(np.array(args.pi), np.array(args.rho))
    except ValueError as exc:
        raise ConfigError("pi/rho", str(exc)) from None
    seed_graph = None
    if args.seed_graph:
        seed = json.loads(Path(args.seed_graph).read_text())
        seed_graph = GraphState.from_degrees(seed["in_degrees"], seed["out_degrees"])
    ev, labels = generate(theta, mix, args.n, seed_graph=seed_graph,
                          rng=np.random.default_rng(args.seed), linear=args.linear)
    out.add("events.csv", events_csv(ev))
    out.json("seed.json", seed_dict(ev))
    out.add("labels.csv", labels_csv(labels))


def cmd_ingest(args, out: Outputs):
    _require(args, "input")
    _check(args.window_hours >= 0, "window_hours", "must be nonnegative")
    edges = read_edgelist_csv(args.input)
    ev, idmap, report = ingest(edges, args.window_hours * 3600.0, args.cutoff_timestamp)
    ev.validate()
    out.add("events.csv", events_csv(ev))
    out.json("seed.json", seed_dict(ev))
    rows = ["original,node"] + [f"{k},{v}" for k, v in sorted(idmap.items(), key=lambda kv: kv[1])]
    out.add("idmap.csv", "\n".join(rows) + "\n")
    out.json("ingest.json", {
        "schema_version": SCHEMA_VERSION,
        "input_edges": report.n_input, "dropped_before_seed": report.n_before_seed,
        "dropped_disconnected": report.n_disconnected,
        "seed_pair": [str(x) for x in report.seed_pair],
        "events": ev.n_events, "nodes": ev.n_nodes,
        "reciprocated": int(ev.reciprocated.sum()),
    })


def cmd_fit_theta(args, out: Outputs):
    ev = _load_log(args)
    try:
        fit = fit_theta(ev)
    except NoRootError as exc:
        raise RuntimeError(str(exc)) from None
    out.json("theta.json", {"schema_version": SCHEMA_VERSION, **fit.to_dict()})


def _chain_lines(chain) -> str:
    lines = []
    for i in range(len(chain)):
        K = int(chain.K[i])
        rec = {"iteration": i, "K": K, "K_plus": int(chain.K_plus[i]),
               "burn_in": i < chain.burn_in,
               "pi": chain.pi[i, :K], "rho": chain.rho[i, :K, :K],
               "log_joint": float(chain.log_joint[i])}
        if chain.labels is not None:
            rec["labels"] = chain.labels[i].astype(np.int64)
        lines.append(json.dumps(rec, sort_keys=True, default=_jsonable))
    return "\n".join(lines) + "\n"


def _run_chain(job):
    # top-level so it can be shipped to worker processes
    kind, ev, K, prior, M, burn_in, store, loops, seed_seq = job
    rng = np.random.default_rng(seed_seq)
    if kind == "gibbs":
        return gibbs_run(ev, K, prior, M, rng, burn_in, store, include_self_loops=loops)
    return telescoping_run(ev, prior, K, M, rng, burn_in, store, include_self_loops=loops)


def _fit_chains(args, out: Outputs, kind: str):
    _check(args.iters >= 1, "iters", "must be at least 1")
    burn_in = args.iters // 2 if args.burn_in is None else args.burn_in
    _check(0 <= burn_in < args.iters, "burn_in", "must lie in [0, iters)")
    _check(args.chains >= 1, "chains", "must be at least 1")
    _check(args.jobs >= 1, "jobs", "must be at least 1")
    validate_prior(args)
    prior = _prior(args)
    if kind == "gibbs":
        _require(args, "k")
        _check(args.k >= 1, "k", "must be at least 1")
        K = args.k
    else:
        _check(1 <= args.k_init <= args.k_max, "k_init", "must lie in [1, k_max]")
        K = args.k_init
    ev = _load_log(args)
    seqs = np.random.SeedSequence(args.seed).spawn(args.chains)
    jobs = [(kind, ev, K, prior, args.iters, burn_in, args.store_labels,
             args.include_self_loops, s) for s in seqs]
    if args.jobs > 1 and args.chains > 1:
        with ProcessPoolExecutor(min(args.jobs, args.chains)) as pool:
            chains = list(pool.map(_run_chain, jobs))
    else:
        chains = [_run_chain(j) for j in jobs]
    summaries = []
    for c, chain in enumerate(chains):
        out.add(f"chain_{c}.jsonl", _chain_lines(chain))
        summ = posterior_summary(chain, align=chain.labels is not None)
        rec = {"chain": c, "method": "gibbs" if kind == "gibbs" else "telescoping",
               **summ.to_dict(), "labels_file": f"labels_{c}.csv"}
        if kind == "telescope":
            rep = telescoping_report(chain)
            rec["K_mode"] = rep.chosen["telescoping"]
            rec["k_pmf"] = {str(k): v for k, v in rep.k_pmf.items()}
            rec["k_plus_pmf"] = {str(k): v for k, v in rep.k_plus_pmf.items()}
        summaries.append(rec)
        out.add(f"labels_{c}.csv", labels_csv(chain.hard_labels()))
    out.json("summary.json", {"schema_version": SCHEMA_VERSION, "chains": summaries})


def cmd_fit_gibbs(args, out):
    _fit_chains(args, out, "gibbs")


def cmd_fit_telescope(args, out):
    _fit_chains(args, out, "telescope")


def _k_values(args):
    _require(args, "k")
    _check(all(k >= 1 for k in args.k), "k", "every K must be at least 1")
    return sorted(set(args.k))


def cmd_fit_cavi(args, out: Outputs):
    ks = _k_values(args)
    _check(args.eps > 0, "eps", "must be positive")
    _check(args.max_sweeps >= 1, "max_sweeps", "must be at least 1")
    validate_prior(args)
    prior = PriorConfig(args.a, args.b, args.eta)
    ev = _load_log(args)
    for K in ks:
        st = cavi_run(ev, K, prior, args.eps, args.max_sweeps, np.random.default_rng([args.seed, K]))
        out.json(f"cavi_K{K}.json", {"schema_version": SCHEMA_VERSION, "method": "cavi",
                                     **st.to_dict(), "labels_file": f"labels_cavi_K{K}.csv"})
        out.add(f"labels_cavi_K{K}.csv", labels_csv(st.hard_labels()))


def cmd_fit_vem(args, out: Outputs):
    ks = _k_values(args)
    _check(args.eps > 0, "eps", "must be positive")
    _check(args.kappa > 0, "kappa", "must be positive")
    ev = _load_log(args)
    for K in ks:
        fit = vem_run(ev, K, args.eps, args.kappa, args.max_rounds,
                      rng=np.random.default_rng([args.seed, K]), init=args.init)
        out.json(f"vem_K{K}.json", {"schema_version": SCHEMA_VERSION, "method": "vem",
                                    **fit.to_dict(), "icl": icl(fit, ev),
                                    "labels_file": f"labels_vem_K{K}.csv"})
        out.add(f"labels_vem_K{K}.csv", labels_csv(fit.labels))


def _load_fits(paths):
    fits = []
    for p in paths:
        d = json.loads(Path(p).read_text())
        d["source"] = Path(p).name
        d["_dir"] = str(Path(p).parent)
        fits.append(d)
    return fits


def cmd_select_k(args, out: Outputs):
    _require(args, "fits")
    report = SelectionReport()
    cavi = {f["K"]: f for f in _load_fits(args.fits) if f.get("method") == "cavi"}
    vem = {f["K"]: f for f in _load_fits(args.fits) if f.get("method") == "vem"}
    chains = [f for f in _load_fits(args.fits) if "chains" in f]
    _check(cavi or vem or chains, "fits", "no cavi, vem or chain summary files given")
    if cavi:
        report = report.merge(select_k_variational(cavi, "elbo", "cavi_elbo"))
    if vem:
        report = report.merge(select_k_variational(vem, "icl", "vem_icl"))
        report = report.merge(select_k_variational(vem, "elbo", "vem_elbo"))
    tel = [c for f in chains for c in f["chains"] if c.get("method") == "telescoping"]
    if tel:
        report.chosen["telescoping"] = tel[0]["K_mode"]
        report.k_pmf = {int(k): v for k, v in tel[0]["k_pmf"].items()}
        report.k_plus_pmf = {int(k): v for k, v in tel[0]["k_plus_pmf"].items()}
    out.json("selection.json", {"schema_version": SCHEMA_VERSION, **report.to_dict()})
    out.add("selection.csv", rows_to_csv(selection_rows(report), ["method", "K", "value", "chosen"]))


def cmd_extremes(args, out: Outputs):
    _check(args.kmeans_k >= 1, "kmeans_k", "must be at least 1")
    _check(args.min_tail >= 1, "min_tail", "must be at least 1")
    ev = _load_log(args)
    state = replay(ev)
    total = state.total_degree
    try:
        fit = min_distance_threshold(total[total > 0], args.min_tail)
    except ExtremesError as exc:
        raise RuntimeError(str(exc)) from None
    r = fit.threshold if args.threshold is None else args.threshold
    ang = angular_set(state, r)
    res = {"schema_version": SCHEMA_VERSION, **fit.to_dict(), "angular_threshold": r,
           "n_angular": len(ang.values)}
    clusters = np.zeros(len(ang.values), dtype=int)
    if len(ang.values) >= args.kmeans_k and len(np.unique(ang.values)) >= args.kmeans_k:
        clusters, centers = kmeans_1d(ang.values, args.kmeans_k, np.random.default_rng(args.seed))
        res["centers"] = centers
    lines = ["node,angle,cluster"] + [f"{v},{a!r},{int(c) + 1}"
                                      for (v, a), c in zip(ang.to_rows(), clusters)]
    out.json("threshold.json", res)
    out.add("angles.csv", "\n".join(lines) + "\n")


def cmd_report(args, out: Outputs):
    _require(args, "fits")
    fits = []
    for f in _load_fits(args.fits):
        if "chains" in f:
            fits.extend({**c, "source": f["source"], "_dir": f["_dir"]} for c in f["chains"])
        else:
            fits.append(f)
    truth = read_labels_csv(args.truth_labels) if args.truth_labels else None
    for f in fits:
        f.setdefault("method", "unknown")
        if truth is not None and f.get("labels_file"):
            lab = read_labels_csv(Path(f["_dir"]) / f["labels_file"])
            f["rand"] = rand_index(lab, truth)
    rows = report_rows(fits)
    clean = [{k: v for k, v in f.items() if not k.startswith("_")} for f in fits]
    out.json("report.json", {"schema_version": SCHEMA_VERSION, "fits": [
        {k: c[k] for k in ("source", "method", "K", "rand") if k in c} for c in clean],
        "rows": rows})
    out.add("report.csv", rows_to_csv(rows, ["source", "method", "K", "parameter", "estimate",
                                             "lower", "upper", "rand"]))


# -- parser ----------------------------------------------------------------------

def _log_args(p):
    p.add_argument("--events", help="event-log CSV")
    p.add_argument("--seed-json", help="seed-graph JSON (default: seed.json beside --events)")


def _prior_args(p, bnb=False):
    p.add_argument("--a", type=float, default=0.5, help="Beta prior a")
    p.add_argument("--b", type=float, default=0.5, help="Beta prior b")
    p.add_argument("--eta", type=float, default=0.5, help="Dirichlet concentration")
    if bnb:
        p.add_argument("--bnb", type=float_list, default=[1.0, 4.0, 3.0], help="c1,c2,c3")
        p.add_argument("--k-max", type=int, default=20)


COMMANDS = {}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetrecip", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)
    parser.subcommands = {}

    def sub(name, func, help):
        p = subs.add_parser(name, help=help)
        p.add_argument("--config", help="flat key = value settings file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=0, help="random seed")
        p.add_argument("-v", "--verbose", action="store_true")
        COMMANDS[name] = func
        parser.subcommands[name] = p
        return p

    p = sub("simulate", cmd_simulate, "simulate a network with reciprocity classes")
    p.add_argument("--n", type=int, help="number of steps")
    p.add_argument("--alpha", type=float, default=0.75)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--delta-in", type=float, default=1.0)
    p.add_argument("--delta-out", type=float, default=1.0)
    p.add_argument("--pi", type=float_list, help="class proportions, comma separated")
    p.add_argument("--rho", type=matrix, help="reciprocity matrix, rows split by ';'")
    p.add_argument("--seed-graph", help="seed-graph JSON (default: one edge 1 -> 2)")
    p.add_argument("--linear", action="store_true", help="linear-scan endpoint sampling")

    p = sub("ingest", cmd_ingest, "turn a temporal edgelist into an event log")
    p.add_argument("--input", help="CSV with source,target,timestamp")
    p.add_argument("--window-hours", type=float, default=24.0)
    p.add_argument("--cutoff-timestamp", type=float, default=None)

    p = sub("fit-theta", cmd_fit_theta, "maximum likelihood for the attachment parameters")
    _log_args(p)

    for name, func, hlp in (("fit-gibbs", cmd_fit_gibbs, "Gibbs sampler with fixed K"),
                            ("fit-telescope", cmd_fit_telescope, "telescoping sampler over K")):
        p = sub(name, func, hlp)
        _log_args(p)
        if name == "fit-gibbs":
            p.add_argument("--k", type=int)
        else:
            p.add_argument("--k-init", type=int, default=1)
        p.add_argument("--iters", type=int, default=5000)
        p.add_argument("--burn-in", type=int, default=None, help="default: half of --iters")
        _prior_args(p, bnb=True)
        p.add_argument("--chains", type=int, default=1)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--store-labels", action="store_true",
                       help="keep every label vector (enables relabelling)")
        p.add_argument("--include-self-loops", action="store_true",
                       help="count self-loops through rho[l, l] (ignored by default)")

    p = sub("fit-cavi", cmd_fit_cavi, "variational Bayes for one or more K")
    _log_args(p)
    p.add_argument("--k", type=k_list, help="K values: 2, 1,2,3 or 1-4")
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--max-sweeps", type=int, default=500)
    _prior_args(p)

    p = sub("fit-vem", cmd_fit_vem, "variational EM for one or more K")
    _log_args(p)
    p.add_argument("--k", type=k_list, help="K values: 2, 1,2,3 or 1-4")
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--kappa", type=float, default=0.01)
    p.add_argument("--max-rounds", type=int, default=1000)
    p.add_argument("--init", choices=["random", "extremes"], default="extremes")

    p = sub("select-k", cmd_select_k, "choose K from fit outputs")
    p.add_argument("--fits", type=path_list, help="fit JSON files, comma separated")

    p = sub("extremes", cmd_extremes, "tail threshold and angular clustering")
    _log_args(p)
    p.add_argument("--threshold", type=int, default=None,
                   help="angular threshold (default: fitted tail threshold)")
    p.add_argument("--min-tail", type=int, default=10)
    p.add_argument("--kmeans-k", type=int, default=2)

    p = sub("report", cmd_report, "tabulate fit outputs")
    p.add_argument("--fits", type=path_list, help="fit JSON files, comma separated")
    p.add_argument("--truth-labels", help="labels CSV for Rand indices")
    return parser


def resolve(argv):
    """Parse ``argv`` with config-file defaults; returns the namespace."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        apply_config(parser.subcommands[args.command], read_config(args.config, args.command))
        args = parser.parse_args(argv)
    return args


def echo_config(args) -> dict:
    skip = {"config", "out", "verbose"}
    cfg = {k: v for k, v in vars(args).items() if k not in skip}
    return {"schema_version": SCHEMA_VERSION, "version": __version__, **cfg}


def run(args) -> list[Path]:
    out = Outputs(args.out)
    COMMANDS[args.command](args, out)
    out.json("config.json", echo_config(args))
    return out.commit()


def main(argv=None) -> int:
    try:
        args = resolve(argv)
    except ConfigError as exc:
        print(f"hetrecip: config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"hetrecip: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        for path in run(args):
            log.info("wrote %s", path)
    except ConfigError as exc:
        print(f"hetrecip {args.command}: config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        print(f"hetrecip {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
