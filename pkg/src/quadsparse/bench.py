"""Monte-Carlo experiment harness.

A sweep is a grid of cells (m, s, SNR, ...) times ``trials`` independent
repetitions. Trial ``t`` of cell ``c`` draws everything from the master seed
``derive_master(master_seed, c, t)``: stream 0 for the ensemble, 1 for the
signal, 2 for the noise. Any single trial can therefore be replayed on its
own, and results never depend on execution order or worker count.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from ._rng import RngSeed, derive_master
from .baselines import BaselineConfig, iht_solve, tsi_init, wf_solve
from .ensemble import NoiseSpec, gen_ensemble, gen_signal, measure
from .metrics import SUCCESS_THRESHOLD, TrialOutcome, rel_error
from .sgn import SolverConfig, solve
from .spectral import initialize

log = logging.getLogger(__name__)

EXPERIMENTS = ("init_compare", "phase_map", "convergence", "iteration_count", "noise_sweep")
SOLVER_METHODS = ("sgn", "wf", "iht")

# Materialize ensembles up to this size; stream beyond it.
AUTO_MATERIALIZE_BYTES = 256 * 2**20


def _ratios(lo, hi, step):
    count = int(round((hi - lo) / step)) + 1
    return [round(lo + k * step, 10) for k in range(count)]


@dataclass
class SweepSpec:
    experiment: str
    n: int
    m_values: Optional[list] = None
    m_ratios: Optional[list] = None
    s_values: Optional[list] = None
    s_ratios: Optional[list] = None
    snr_values: Optional[list] = None
    trials: int = 100
    master_seed: int = 0
    methods: list = field(default_factory=lambda: ["sgn"])
    solver: dict = field(default_factory=dict)
    baseline: dict = field(default_factory=dict)
    noise_kind: str = "none"
    noise_sigma: float = 0.0
    success_threshold: float = SUCCESS_THRESHOLD
    storage: str = "auto"
    phi_convention: str = "mean"
    log_base: str = "e"  # base of the log in m = floor(10 s log n)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.trials < 1:
            raise ValueError("trials must be positive")
        if self.experiment == "init_compare":
            for meth in self.methods:
                _init_method(meth)
        else:
            bad = [meth for meth in self.methods if meth not in SOLVER_METHODS]
            if bad:
                raise ValueError(f"unknown solver methods {bad}; use {SOLVER_METHODS}")
        if self.experiment == "noise_sweep" and not self.snr_values:
            raise ValueError("noise_sweep needs snr_values")
        NoiseSpec(self.noise_kind, self.noise_sigma)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown sweep fields: {sorted(unknown)}")
        return cls(**d)

    def _axis(self, values, ratios):
        if values:
            return [int(v) for v in values]
        if ratios:
            return [max(1, int(round(r * self.n))) for r in ratios]
        return None

    def cells(self) -> list:
        """Grid cells in a fixed order; the position in this list is the cell index."""
        ms = self._axis(self.m_values, self.m_ratios)
        ss = self._axis(self.s_values, self.s_ratios)
        if not ss:
            raise ValueError("sweep needs s_values or s_ratios")
        if self.experiment == "iteration_count":
            log_n = math.log(self.n) if self.log_base == "e" else math.log10(self.n)
            return [{"m": int(math.floor(10 * s * log_n)), "s": s} for s in ss]
        if not ms:
            raise ValueError("sweep needs m_values or m_ratios")
        if self.experiment == "noise_sweep":
            return [{"m": m, "s": s, "snr": float(snr)}
                    for m, s, snr in itertools.product(ms, ss, self.snr_values)]
        return [{"m": m, "s": s} for m, s in itertools.product(ms, ss)]


PRESETS = {
    "experiment1": dict(experiment="init_compare", n=500, m_ratios=_ratios(0.1, 1.0, 0.1),
                        s_values=[5], methods=["spectral", "tsi:0.5", "tsi:0.2"],
                        storage="streamed"),
    "experiment2": dict(experiment="phase_map", n=100, m_ratios=_ratios(0.2, 2.0, 0.2),
                        s_ratios=_ratios(0.1, 1.0, 0.1), methods=["sgn", "wf", "iht"],
                        solver={"max_iters": 2000}, baseline={"max_iters": 2000}),
    "experiment3": dict(experiment="convergence", n=200, m_values=[200], s_values=[40],
                        methods=["sgn", "iht"], solver={"max_iters": 1000},
                        baseline={"max_iters": 1000}),
    "experiment3-iterations": dict(experiment="iteration_count", n=100,
                                   s_values=list(range(6, 23, 2)), methods=["sgn", "iht"],
                                   solver={"max_iters": 1000}, baseline={"max_iters": 1000}),
    "experiment4": dict(experiment="noise_sweep", n=100, m_values=[200], s_values=[5],
                        snr_values=[float(v) for v in range(5, 51, 5)], trials=50,
                        methods=["sgn"], noise_kind="gaussian"),
}


def preset(name: str, **overrides) -> SweepSpec:
    try:
        base = dict(PRESETS[name])
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    base.update({k: v for k, v in overrides.items() if v is not None})
    return SweepSpec(**base)


def _init_method(name: str):
    if name == "spectral":
        return None
    if name.startswith("tsi:"):
        return float(name.split(":", 1)[1])
    raise ValueError(f"unknown initializer {name!r}; use 'spectral' or 'tsi:<alpha>'")


def trial_seed(spec: SweepSpec, cell: int, t: int) -> int:
    return derive_master(spec.master_seed, cell, t)


def _storage(spec, m):
    if spec.storage != "auto":
        return spec.storage
    return "materialized" if m * spec.n * spec.n * 8 <= AUTO_MATERIALIZE_BYTES else "streamed"


def _first_below(errors, threshold):
    hits = np.flatnonzero(np.asarray(errors) <= threshold)
    return int(hits[0]) if hits.size else None


def run_trial(spec: SweepSpec, cell_index: int, t: int) -> dict:
    """Run trial ``t`` of cell ``cell_index``; returns a JSON-ready record."""
    cell = spec.cells()[cell_index]
    m, s = cell["m"], cell["s"]
    master = trial_seed(spec, cell_index, t)
    ens = gen_ensemble(spec.n, m, RngSeed(master, 0), mode=_storage(spec, m))
    x = gen_signal(spec.n, s, RngSeed(master, 1)).values
    norm_x = float(np.linalg.norm(x))

    if spec.experiment == "noise_sweep":
        # SNR := ||x|| / sigma^2
        sigma = math.sqrt(norm_x / cell["snr"])
        noise = NoiseSpec(spec.noise_kind if spec.noise_kind != "none" else "gaussian", sigma)
    else:
        noise = NoiseSpec(spec.noise_kind, spec.noise_sigma)
    y = measure(ens, x, noise, RngSeed(master, 2)).y

    record = {"cell": cell_index, "trial": t, **cell, "sigma": noise.sigma,
              "norm_x": norm_x, "outcomes": {}}

    if spec.experiment == "init_compare":
        for meth in spec.methods:
            t0 = time.perf_counter()
            alpha = _init_method(meth)
            if alpha is None:
                res = initialize(ens, y, s, convention=spec.phi_convention)
            else:
                res = tsi_init(ens, y, alpha, convention=spec.phi_convention)
            out = TrialOutcome.evaluate(res.x0, x, 0, time.perf_counter() - t0, "init",
                                        spec.success_threshold)
            record["outcomes"][meth] = {**out.to_dict(), "support_size": int(res.support_hat.size)}
        return record

    init = initialize(ens, y, s, convention=spec.phi_convention)
    record["init_rel_error"] = rel_error(init.x0, x)
    for meth in spec.methods:
        t0 = time.perf_counter()
        if meth == "sgn":
            cfg = SolverConfig(s, **spec.solver)
            xhat, trace = solve(ens, y, init.x0, cfg, x_true=x)
        else:
            cfg = BaselineConfig(method=meth, s=s, **spec.baseline)
            runner = wf_solve if meth == "wf" else iht_solve
            xhat, trace = runner(ens, y, init.x0, cfg, x_true=x)
        elapsed = time.perf_counter() - t0
        out = TrialOutcome.evaluate(xhat, x, trace.iterations, elapsed, trace.status,
                                    spec.success_threshold)
        errors = trace.rel_errors()
        entry = {**out.to_dict(),
                 "iters_to_success": _first_below(errors, spec.success_threshold)}
        if spec.experiment == "convergence":
            entry["curve"] = errors.tolist()
        record["outcomes"][meth] = entry
    return record


def _limit_threads():
    # one BLAS thread per worker: keeps reductions (and hence results)
    # independent of the worker count
    threadpool_limits(1)


def _run_item(args):
    spec_dict, cell, t = args
    return run_trial(SweepSpec.from_dict(spec_dict), cell, t)


def run_records(spec: SweepSpec, jobs: int = 1, cells=None) -> list:
    """All trial records for the sweep (or for a subset of cell indices), sorted."""
    indices = range(len(spec.cells())) if cells is None else cells
    items = [(spec.to_dict(), c, t) for c in indices for t in range(spec.trials)]
    if jobs <= 1:
        with threadpool_limits(1):
            records = [_run_item(it) for it in items]
    else:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_limit_threads) as pool:
            records = list(pool.map(_run_item, items, chunksize=max(1, len(items) // (8 * jobs))))
    records.sort(key=lambda r: (r["cell"], r["trial"]))
    return records


def _mean(values):
    values = [v for v in values if v is not None and np.isfinite(v)]
    return float(np.mean(values)) if values else float("nan")


def aggregate(spec: SweepSpec, records: list) -> "SweepResult":
    cells = spec.cells()
    rows = []
    curves = []
    for c, cell in enumerate(cells):
        recs = [r for r in records if r["cell"] == c]
        for meth in spec.methods:
            outs = [r["outcomes"][meth] for r in recs]
            succ = [o for o in outs if o["success"]]
            errs = [o["rel_error"] for o in outs]
            row = {
                **cell,
                "m_ratio": cell["m"] / spec.n,
                "s_ratio": cell["s"] / spec.n,
                "method": meth,
                "trials": len(outs),
                "successes": len(succ),
                "success_rate": len(succ) / len(outs) if outs else float("nan"),
                "mean_rel_error": _mean(errs),
                "median_rel_error": float(np.median(errs)) if errs else float("nan"),
                "mean_log10_rel_error": _mean([math.log10(e) if e > 0 else -math.inf for e in errs]),
                "mean_iterations": _mean([o["iterations"] for o in outs]),
                "mean_iters_to_success": _mean([o.get("iters_to_success") for o in succ]),
                "numerical_failures": sum(o["status"] == "numerical_failure" for o in outs),
            }
            if spec.experiment == "noise_sweep":
                row["mean_sigma"] = _mean([r["sigma"] for r in recs])
            rows.append(row)
            if spec.experiment == "convergence":
                length = max(len(o["curve"]) for o in outs)
                padded = np.array([o["curve"] + [o["curve"][-1]] * (length - len(o["curve"]))
                                   for o in outs])
                for k, v in enumerate(padded.mean(axis=0)):
                    curves.append({"cell": c, "method": meth, "iteration": k,
                                   "mean_rel_error": float(v)})
    timing = {meth: _mean([r["outcomes"][meth]["wall_time"] for r in records])
              for meth in spec.methods}
    return SweepResult(spec, rows, curves, records, timing)


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list
    curves: list
    records: list
    mean_wall_time: dict

    def table(self, method: str) -> list:
        return [r for r in self.rows if r["method"] == method]

    def cell(self, method: str, **where) -> dict:
        for r in self.table(method):
            if all(r.get(k) == v for k, v in where.items()):
                return r
        raise KeyError(f"no row for {method} with {where}")

    @staticmethod
    def _csv(rows) -> str:
        if not rows:
            return ""
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        return buf.getvalue()

    def to_csv(self) -> str:
        """Aggregates only; wall times are kept out so the file is reproducible."""
        return self._csv(self.rows)

    def curves_csv(self) -> str:
        return self._csv(self.curves)

    def manifest(self) -> dict:
        return {
            "package": "quadsparse",
            "version": __version__,
            "spec": self.spec.to_dict(),
            "cells": self.spec.cells(),
            "seed_derivation": "trial master = derive_master(master_seed, cell, trial); "
                               "streams 0/1/2 = ensemble/signal/noise",
            "mean_wall_time": self.mean_wall_time,
        }

    def write(self, out_dir, stem: str = "sweep", raw: bool = False) -> dict:
        from pathlib import Path
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"csv": out / f"{stem}.csv", "manifest": out / f"{stem}_manifest.json"}
        paths["csv"].write_text(self.to_csv())
        paths["manifest"].write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n")
        if self.curves:
            paths["curves"] = out / f"{stem}_curves.csv"
            paths["curves"].write_text(self.curves_csv())
        if raw:
            paths["raw"] = out / f"{stem}_trials.jsonl"
            with open(paths["raw"], "w") as fh:
                for r in self.records:
                    fh.write(json.dumps(r, sort_keys=True) + "\n")
        return paths


def run_sweep(spec: SweepSpec, jobs: int = 1) -> SweepResult:
    t0 = time.perf_counter()
    records = run_records(spec, jobs=jobs)
    log.info("%s: %d trials in %.1fs", spec.experiment, len(records), time.perf_counter() - t0)
    return aggregate(spec, records)


def _check(spec, experiment):
    if spec.experiment != experiment:
        raise ValueError(f"expected a {experiment} spec, got {spec.experiment}")


def sweep_phase(spec: SweepSpec, jobs: int = 1) -> SweepResult:
    _check(spec, "phase_map")
    return run_sweep(spec, jobs)


def sweep_init(spec: SweepSpec, jobs: int = 1) -> SweepResult:
    _check(spec, "init_compare")
    return run_sweep(spec, jobs)


def sweep_convergence(spec: SweepSpec, jobs: int = 1) -> SweepResult:
    _check(spec, "convergence")
    return run_sweep(spec, jobs)


def sweep_iterations(spec: SweepSpec, jobs: int = 1) -> SweepResult:
    _check(spec, "iteration_count")
    return run_sweep(spec, jobs)


def sweep_noise(spec: SweepSpec, jobs: int = 1) -> SweepResult:
    _check(spec, "noise_sweep")
    return run_sweep(spec, jobs)
