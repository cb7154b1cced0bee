"""Experiment orchestration, persistence and replay.

A run is split into work units with fixed indices.  Unit i draws from
``rng.stream(seed, i)`` and returns plain values (CSV text and metrics);
the orchestrator merges them in index order, writes the files, and
records every file with its sha256 in ``manifest.json``.  Worker count
and scheduling therefore never change the bytes written.

Wall-clock measurements are kept in the manifest only, never in the
checksummed files.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import platform
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from . import experiments as ex
from .config import ExperimentConfig
from .core import PotentialModel
from .equilibrium import semicircle, semicircle_cdf, solve_equilibrium_density
from .errors import ConfigError, PartialResultsError, ReproducibilityError
from .parabolic import check_nash_decay, delta, holder_oscillation, propagate
from .dynamics import HessianKernel
from .rng import stream, unit_seed
from .samplers import (ChainParams, LogGasMeasure, VarianceProfile, sample_gaussian_beta_tridiagonal,
                       sample_generalized_wigner, sample_log_gas_mcmc)
from .statistics import gap_distribution, ks_distance, level_repulsion_exponent

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
SUMMARY = "summary.json"


# ---------------------------------------------------------------- formatting

def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return "%.17g" % v


def csv_text(header, columns) -> str:
    """CSV with 17 significant digits for floats; columns are equal-length sequences."""
    lines = [",".join(header)]
    for row in zip(*columns):
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def json_text(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _split_runtime(obj, path="", out=None):
    """Copy of obj without 'runtime' entries, plus a map of the removed values."""
    out = {} if out is None else out
    if isinstance(obj, dict):
        clean = {}
        for k, v in obj.items():
            if k == "runtime":
                out[path or "total"] = v
            else:
                clean[k] = _split_runtime(v, f"{path}.{k}" if path else k, out)[0]
        return clean, out
    if isinstance(obj, list):
        return [_split_runtime(v, f"{path}[{i}]", out)[0] for i, v in enumerate(obj)], out
    return obj, out


def _config_positions(x, lo=1):
    x = np.asarray(x, float)
    return csv_text(["index", "position"], [np.arange(lo, lo + x.size), x])


# ---------------------------------------------------------------- pipelines

def _plan(cfg: ExperimentConfig) -> list:
    """Payload of every work unit, in merge order."""
    p = cfg.params
    if cfg.kind == "sample":
        if p["ensemble"] == "mcmc":
            counts = [len(a) for a in np.array_split(np.arange(p["draws"]), p["chains"])]
            starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
            return [{"first": int(s), "count": int(c)} for s, c in zip(starts, counts) if c > 0]
        return [{"first": i, "count": 1} for i in range(p["draws"])]
    if cfg.kind == "dbm":
        n = math.ceil(p["paths"] / p["batch"])
        return [{"first": u * p["batch"], "count": min(p["batch"], p["paths"] - u * p["batch"])}
                for u in range(n)]
    if cfg.kind == "stats":
        n = math.ceil(p["draws"] / p["chunk"])
        return [{"count": min(p["chunk"], p["draws"] - u * p["chunk"])} for u in range(n)]
    return [{}]


def _execute(kind: str, params: dict, seed: int, index: int, payload: dict) -> dict:
    """Run one work unit; returns {'files': {name: text}, 'metrics': {...}}."""
    rng = stream(seed, index)
    return _UNITS[kind](params, rng, seed, index, payload)


def _sample_unit(p, rng, seed, index, payload):
    N, first, count = p["N"], payload["first"], payload["count"]
    metrics = {}
    if p["ensemble"] == "tridiagonal":
        X = sample_gaussian_beta_tridiagonal(N, p["beta"], rng, size=1)
    elif p["ensemble"] == "wigner":
        conf = sample_generalized_wigner(VarianceProfile.uniform(N), p["entry_law"], p["symmetry"], rng)
        X = conf.positions[None, :]
    else:
        mu = LogGasMeasure.global_gas(_potential(p["potential"]), N, p["beta"])
        ch = sample_log_gas_mcmc(mu, ChainParams(burn_in=p["burn_in"], n_samples=count, thin=p["thin"],
                                                 chains=1), rng)
        X = ch.samples
        metrics = {"acceptance_rate": ch.acceptance_rate, "step": ch.step}
    files = {f"draw_{first + r:05d}.csv": _config_positions(X[r]) for r in range(count)}
    return {"files": files, "metrics": metrics, "positions": X}


def _potential(name):
    return PotentialModel.quartic() if name == "quartic" else PotentialModel.quadratic()


def _dbm_unit(p, rng, seed, index, payload):
    first, count = payload["first"], payload["count"]
    _, P = ex.equilibrium_paths(rng, p["K"], p["N"], p["beta"], count, p["T"], p["burn_in"],
                                dt_max=p["dt_max"], store_every=p["store_every"])
    files = {}
    for r in range(count):
        st = P.states[r]
        T, n = st.shape
        files[f"path_{first + r:05d}.csv"] = csv_text(
            ["t", "index", "position"],
            [np.repeat(P.times, n), np.tile(np.arange(P.lo, P.lo + n), T), st.ravel()])
    return {"files": files, "metrics": dict(P.diagnostics)}


def _parabolic_unit(p, rng, seed, index, payload):
    K = p["K"]
    if p["kernel"] == "random_floor":
        kern = ex.random_floor_kernel(rng, K)
    else:
        kern = HessianKernel.inverse_square(K)
    store = np.arange(0.0, p["t1"] + 0.5 * p["store_every"], p["store_every"])
    store = store[store <= p["t1"]]
    if store[-1] < p["t1"]:
        store = np.append(store, p["t1"])
    sol = propagate(kern, delta(K, p["source"]), 0.0, p["t1"], store=store, method=p["method"])
    nash = check_nash_decay(sol, kern, tolerance=p["tolerance"])
    holder = []
    for s in sol.times[1:]:
        if K ** 0.3 <= s <= K ** 0.7 and abs(p["source"]) + s ** (1 - p["alpha"]) <= K:
            holder.append({"sigma": float(s), "scaled_oscillation":
                           float(s * holder_oscillation(sol, p["source"], s, p["alpha"], window="box"))})
    n = sol.values.shape[1]
    text = csv_text(["t", "index", "value"],
                    [np.repeat(sol.times, n), np.tile(np.arange(-K, K + 1), sol.times.size),
                     sol.values.ravel()])
    return {"files": {"solution.csv": text},
            "metrics": {"nash": nash.to_json(), "holder": holder}}


def _stats_unit(p, rng, seed, index, payload):
    N = p["N"]
    k = p["k"] or N // 2
    X = sample_gaussian_beta_tridiagonal(N, p["beta"], rng, size=payload["count"])
    g = gap_distribution(X, semicircle(), k, n=2).gaps
    q = gap_distribution(X, semicircle(), N // 4).gaps[:, 0]
    return {"files": {}, "metrics": {}, "gaps": g, "quarter": q}


def _verify_unit(p, rng, seed, index, payload):
    name = p["suite"]
    fn = ex.SUITES[name]
    kw = {k: v for k, v in p.items() if k != "suite" and v is not None}
    if name in ex.DETERMINISTIC:
        result = fn(**kw)
    elif name in ex.SEEDED_BY_INT:
        result = fn(unit_seed(seed, index), **kw)
    else:
        result = fn(rng, **kw)
    return {"files": {}, "metrics": result}


_UNITS = {"sample": _sample_unit, "dbm": _dbm_unit, "parabolic": _parabolic_unit,
          "stats": _stats_unit, "verify": _verify_unit}


def _validate_overrides(cfg: ExperimentConfig) -> None:
    """Reject verify overrides the chosen suite does not take."""
    import inspect
    if cfg.kind != "verify":
        return
    fn = ex.SUITES[cfg.params["suite"]]
    names = set(inspect.signature(fn).parameters)
    for k, v in cfg.params.items():
        if k != "suite" and v is not None and k not in names:
            raise ConfigError(f"suite {cfg.params['suite']!r} has no parameter {k!r}", f"verify.{k}")


def _reduce(cfg: ExperimentConfig, results: list) -> tuple[dict, dict]:
    """Merge unit results in index order into (extra files, summary)."""
    p = cfg.params
    if cfg.kind == "sample":
        x = np.concatenate([r["positions"].ravel() for r in results])
        if p["ensemble"] == "mcmc" and p["potential"] == "quartic":
            cdf = solve_equilibrium_density(PotentialModel.quartic()).cdf
            ref = "quartic equilibrium density"
        else:
            cdf, ref = semicircle_cdf, "semicircle"
        ks = float(stats.kstest(x, cdf).statistic)
        summary = {"ks": ks, "reference": ref, "draws": p["draws"], "satisfied": bool(ks < p["ks_max"])}
        if p["ensemble"] == "mcmc":
            summary["acceptance_rates"] = [r["metrics"]["acceptance_rate"] for r in results]
        return {}, summary
    if cfg.kind == "dbm":
        d = [r["metrics"] for r in results]
        summary = {"paths": p["paths"],
                   "ordering_violations": int(sum(m["ordering_violations"] for m in d)),
                   "accepted_steps": int(sum(m["accepted_steps"] for m in d)),
                   "rejected_steps": int(sum(m["rejected_steps"] for m in d)),
                   "floor_rejections": int(sum(m.get("floor_rejections", 0) for m in d)),
                   "min_gap": float(min(m["min_gap"] for m in d))}
        summary["satisfied"] = summary["ordering_violations"] == 0
        return {}, summary
    if cfg.kind == "parabolic":
        m = results[0]["metrics"]
        return {}, {"nash": m["nash"], "holder": m["holder"], "satisfied": bool(m["nash"]["satisfied"])}
    if cfg.kind == "stats":
        g = np.concatenate([r["gaps"] for r in results])
        q = np.concatenate([r["quarter"] for r in results])
        beta = p["beta"]
        fits = {}
        for order, want in ((1, beta + 1), (2, 2 * beta + 1)):
            try:
                fits[str(order)] = {**level_repulsion_exponent(g[:, order - 1]).to_json(), "expected": want}
            except Exception as exc:          # too few draws for a tail fit
                fits[str(order)] = {"error": str(exc), "expected": want}
        s1 = fits["1"].get("value")
        summary = {"fits": fits, "ks_quarter_vs_half": ks_distance(q, g[:, 0]),
                   "mean_gap": float(g[:, 0].mean()),
                   "satisfied": bool(s1 is not None and abs(s1 - (beta + 1)) <= p["slope_tolerance"])}
        files = {"gaps.csv": csv_text(["gap1", "gap2"], [g[:, 0], g[:, 1]])}
        return files, summary
    return {}, dict(results[0]["metrics"])


# ---------------------------------------------------------------- records

@dataclass
class ExperimentRecord:
    directory: Path
    manifest: dict
    summary: dict = field(default_factory=dict)

    @property
    def files(self) -> list[str]:
        return [f["name"] for f in self.manifest["files"]]

    @property
    def satisfied(self) -> bool:
        return bool(self.summary.get("satisfied", False))

    @property
    def checksums(self) -> dict:
        return {f["name"]: f["sha256"] for f in self.manifest["files"]}


def versions() -> dict:
    import numba
    import scipy
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "loggas": __version__, "platform": sys.platform}


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _run_units(cfg: ExperimentConfig, plan: list):
    """Results (or exceptions) per unit, in unit order."""
    args = [(cfg.kind, cfg.params, cfg.seed, i, payload) for i, payload in enumerate(plan)]
    out = []
    if cfg.workers == 1 or len(plan) == 1:
        for a in args:
            try:
                out.append(_execute(*a))
            except Exception as exc:  # collected and reported with the salvage list
                out.append(exc)
        return out
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        futures = [pool.submit(_execute, *a) for a in args]
        for f in futures:
            try:
                out.append(f.result())
            except Exception as exc:
                out.append(exc)
    return out


def run_experiment(config: ExperimentConfig) -> ExperimentRecord:
    """Execute the configured pipeline and write its files and manifest."""
    _validate_overrides(config)
    t0 = time.perf_counter()
    outdir = config.output_dir()
    outdir.mkdir(parents=True, exist_ok=True)
    plan = _plan(config)
    results = _run_units(config, plan)
    failed = [i for i, r in enumerate(results) if isinstance(r, Exception)]
    good = [r for r in results if not isinstance(r, Exception)]

    files = {}
    for r in good:
        files.update(r["files"])
    summary = {}
    if not failed:
        extra, summary = _reduce(config, results)
        files.update(extra)
    summary, timings = _split_runtime(summary)
    if not failed:
        files[SUMMARY] = json_text(summary)

    entries = []
    for name in sorted(files):
        data = files[name].encode()
        (outdir / name).write_bytes(data)
        entries.append({"name": name, "sha256": _sha(data), "bytes": len(data)})

    manifest = {
        "config": config.to_dict(),
        "config_text": config.to_text(),
        "config_hash": config.hash(),
        "seed": config.seed,
        "versions": versions(),
        "wall_time": time.perf_counter() - t0,
        "timings": timings,
        "units": len(plan),
        "workers": config.workers,
        "files": entries,
        "summary": summary,
        "satisfied": bool(summary.get("satisfied", False)),
        "partial": bool(failed),
    }
    if failed:
        manifest["failed_units"] = {str(i): repr(results[i]) for i in failed}
    (outdir / MANIFEST).write_text(json_text(manifest))
    record = ExperimentRecord(outdir, manifest, summary)
    if failed:
        salvaged = [i for i in range(len(plan)) if i not in failed]
        err = PartialResultsError(f"{len(failed)} of {len(plan)} work units failed: "
                                  f"{manifest['failed_units']}", salvaged)
        err.record = record
        raise err
    log.info("wrote %d files to %s", len(entries), outdir)
    return record


def load_manifest(path) -> dict:
    p = Path(path)
    if p.is_dir():
        p = p / MANIFEST
    try:
        return json.loads(p.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest: {exc}", str(p)) from None


def replay(manifest_path, output=None) -> ExperimentRecord:
    """Rerun the experiment of a manifest and compare file checksums.

    The seed recorded at the top level of the manifest is the one used.
    Output goes to ``output`` or a fresh temporary directory.
    """
    m = load_manifest(manifest_path)
    cfg = ExperimentConfig.from_dict(m["config"])
    out = output or tempfile.mkdtemp(prefix="loggas-replay-")
    cfg = cfg.replace(seed=int(m["seed"]), output=str(out))
    record = run_experiment(cfg)
    want = {f["name"]: f["sha256"] for f in m["files"]}
    got = record.checksums
    divergent = sorted(n for n in set(want) | set(got) if want.get(n) != got.get(n))
    if divergent:
        raise ReproducibilityError(f"{len(divergent)} file(s) differ from the manifest", divergent)
    return record
