"""Command-line front end: ``quadsparse {solve,sweep,probe}``.

Exit codes: 0 success (converged, or injective / no collision found),
1 probe positive (collision or injectivity violation), 2 no convergence
(max_iters, stagnated), 3 numerical failure, 64 usage error.

Every flag can also come from ``--config FILE`` (a JSON object keyed by the
flag name, dashes or underscores); flags on the command line win. Output goes
to ``--out`` or, if that is omitted, to ``$QUADSPARSE_OUT`` (default
``./quadsparse_out``).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK = 0
EXIT_PROBE_POSITIVE = 1
EXIT_NOT_CONVERGED = 2
EXIT_NUMERICAL = 3
EXIT_USAGE = 64

STATUS_EXIT = {
    "converged": EXIT_OK,
    "max_iters": EXIT_NOT_CONVERGED,
    "stagnated": EXIT_NOT_CONVERGED,
    "numerical_failure": EXIT_NUMERICAL,
    "diverged": EXIT_NUMERICAL,
}

log = logging.getLogger("quadsparse")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _common(p):
    p.add_argument("--config", help="JSON file with flag values")
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--seed", type=int, default=0, help="master seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="quadsparse", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"quadsparse {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("solve", help="recover one synthetic signal")
    _common(p)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--m", type=int, default=200)
    p.add_argument("--s", type=int, default=5)
    p.add_argument("--noise", choices=("none", "gaussian", "laplace"), default="none")
    p.add_argument("--sigma", type=float, default=0.0, help="noise standard deviation")
    p.add_argument("--method", choices=("sgn", "wf", "iht"), default="sgn")
    p.add_argument("--init", choices=("alg1", "tsi"), default="alg1")
    p.add_argument("--alpha", type=float, default=0.5, help="TSI threshold factor")
    p.add_argument("--phi", choices=("mean", "half_mean"), default="mean",
                   help="norm estimate: (sum y^2 / m)^(1/4) or (sum y^2 / 2m)^(1/4)")
    p.add_argument("--mu", default=None,
                   help="normalized step (times 1/||x0||^2); 'auto' for sgn")
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-12, help="objective tolerance")
    p.add_argument("--storage", choices=("materialized", "streamed"), default="materialized")
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("sweep", help="run a Monte-Carlo sweep")
    _common(p)
    p.add_argument("--preset", help="experiment1..experiment4 or experiment3-iterations")
    p.add_argument("--experiment", choices=("init_compare", "phase_map", "convergence",
                                            "iteration_count", "noise_sweep"))
    p.add_argument("--n", type=int)
    p.add_argument("--m-values", type=_int_list)
    p.add_argument("--m-ratios", type=_float_list)
    p.add_argument("--s-values", type=_int_list)
    p.add_argument("--s-ratios", type=_float_list)
    p.add_argument("--snr-values", type=_float_list)
    p.add_argument("--methods", type=lambda t: [v for v in t.split(",") if v])
    p.add_argument("--trials", type=int)
    p.add_argument("--noise", choices=("none", "gaussian", "laplace"))
    p.add_argument("--sigma", type=float)
    p.add_argument("--max-iters", type=int, help="iteration cap for every solver")
    p.add_argument("--tol", type=float, help="objective tolerance for every solver")
    p.add_argument("--storage", choices=("auto", "materialized", "streamed"))
    p.add_argument("--phi", choices=("mean", "half_mean"))
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--raw", action="store_true", help="also write per-trial JSONL")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("probe", help="identifiability probes")
    _common(p)
    p.add_argument("--mode", choices=("s1-check", "collision"), required=True)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--s", type=int, default=1)
    p.add_argument("--budget", type=int, default=50)
    p.add_argument("--collision-tol", type=float, default=1e-8)
    p.add_argument("--sep-tol", type=float, default=1e-3)
    p.set_defaults(handler=cmd_probe)
    return parser


def _apply_config(parser, argv):
    """Parse twice: config file values become defaults, explicit flags override."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        config = json.loads(Path(args.config).read_text())
    except (OSError, ValueError) as exc:
        raise UsageError(f"--config: cannot read {args.config}: {exc}")
    if not isinstance(config, dict):
        raise UsageError("--config: expected a JSON object")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    config = {k.replace("-", "_"): v for k, v in config.items()}
    unknown = sorted(set(config) - known - {"command"})
    if unknown:
        raise UsageError(f"--config: unknown keys {unknown}")
    config.pop("command", None)
    sub.set_defaults(**config)
    return parser.parse_args(argv)


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get("QUADSPARSE_OUT", "quadsparse_out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(args, **extra) -> dict:
    config = {k: v for k, v in vars(args).items()
              if k not in ("handler", "config", "verbose", "argv")}
    return {
        "tool": "quadsparse",
        "version": __version__,
        "command": args.command,
        "config": config,
        "argv": args.argv,
        "python": platform.python_version(),
        "numpy": np.__version__,
        **extra,
    }


def _write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _require(cond, flag, message):
    if not cond:
        raise UsageError(f"{flag}: {message}")


def cmd_solve(args) -> int:
    from .baselines import BaselineConfig, iht_solve, tsi_init, wf_solve
    from .ensemble import (NoiseSpec, gen_ensemble, gen_signal, measure, save_observations_csv,
                           save_vector_csv)
    from .metrics import TrialOutcome
    from .sgn import SolverConfig, solve
    from .spectral import initialize

    _require(args.n >= 1, "--n", "must be positive")
    _require(args.m >= 1, "--m", "must be positive")
    _require(1 <= args.s <= args.n, "--s", f"must satisfy 1 <= s <= n, got {args.s}")
    _require(args.sigma >= 0, "--sigma", "must be non-negative")
    _require(args.alpha > 0, "--alpha", "must be positive")
    mu = args.mu
    if mu is None:
        mu = "auto" if args.method == "sgn" else 0.1
    elif mu != "auto":
        try:
            mu = float(mu)
        except ValueError:
            raise UsageError(f"--mu: expected a number or 'auto', got {args.mu!r}")
        _require(mu > 0, "--mu", "must be positive")
    _require(mu != "auto" or args.method == "sgn", "--mu", "'auto' only applies to sgn")
    max_iters = args.max_iters or (200 if args.method == "sgn" else 2000)
    _require(max_iters >= 1, "--max-iters", "must be positive")

    ens = gen_ensemble(args.n, args.m, (args.seed, 0), mode=args.storage)
    truth = gen_signal(args.n, args.s, (args.seed, 1))
    noise = NoiseSpec(args.noise, args.sigma if args.noise != "none" else 0.0)
    obs = measure(ens, truth.values, noise, (args.seed, 2))

    t0 = time.perf_counter()
    if args.init == "alg1":
        init = initialize(ens, obs.y, args.s, convention=args.phi)
    else:
        init = tsi_init(ens, obs.y, args.alpha, convention=args.phi)
    if args.method == "sgn":
        cfg = SolverConfig(args.s, step_mu=mu, max_iters=max_iters, tol_residual=args.tol)
        xhat, trace = solve(ens, obs.y, init.x0, cfg, x_true=truth.values)
    else:
        cfg = BaselineConfig(method=args.method, step_mu=mu, max_iters=max_iters, s=args.s,
                             alpha=args.alpha, tol_residual=args.tol)
        runner = wf_solve if args.method == "wf" else iht_solve
        xhat, trace = runner(ens, obs.y, init.x0, cfg, x_true=truth.values)
    elapsed = time.perf_counter() - t0

    outcome = TrialOutcome.evaluate(xhat, truth.values, trace.iterations, elapsed, trace.status)
    out = _out_dir(args)
    save_vector_csv(out / "solution.csv", xhat)
    save_vector_csv(out / "truth.csv", truth.values)
    save_vector_csv(out / "x0.csv", init.x0)
    save_observations_csv(out / "observations.csv", obs)
    trace.to_jsonl(out / "trace.jsonl")
    summary = {**trace.summary(), **outcome.to_dict(),
               "init_rel_error": TrialOutcome.evaluate(init.x0, truth.values).rel_error,
               "init_support": [int(j) for j in init.support_hat]}
    _write_json(out / "summary.json", summary)
    _write_json(out / "manifest.json", _manifest(
        args, seeds={"ensemble": [args.seed, 0], "signal": [args.seed, 1], "noise": [args.seed, 2]},
        resolved={"mu": mu, "max_iters": max_iters}))
    print(json.dumps({k: summary[k] for k in ("status", "iterations", "rel_error", "success")}))
    return STATUS_EXIT.get(trace.status, EXIT_NOT_CONVERGED)


_SWEEP_FIELDS = {
    "experiment": "experiment", "n": "n", "m_values": "m_values", "m_ratios": "m_ratios",
    "s_values": "s_values", "s_ratios": "s_ratios", "snr_values": "snr_values",
    "methods": "methods", "trials": "trials", "noise": "noise_kind", "sigma": "noise_sigma",
    "storage": "storage", "phi": "phi_convention",
}


def cmd_sweep(args) -> int:
    from .bench import PRESETS, SweepSpec, run_sweep

    _require(args.jobs >= 1, "--jobs", "must be positive")
    _require(args.trials is None or args.trials >= 1, "--trials", "must be positive")
    if args.preset:
        _require(args.preset in PRESETS, "--preset",
                 f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
        fields = dict(PRESETS[args.preset])
    else:
        _require(args.experiment is not None, "--experiment", "required without --preset")
        _require(args.n is not None, "--n", "required without --preset")
        fields = {}
    for flag, name in _SWEEP_FIELDS.items():
        value = getattr(args, flag)
        if value is not None:
            fields[name] = value
    fields["master_seed"] = args.seed
    if args.max_iters is not None:
        _require(args.max_iters >= 1, "--max-iters", "must be positive")
        fields["solver"] = {**fields.get("solver", {}), "max_iters": args.max_iters}
        fields["baseline"] = {**fields.get("baseline", {}), "max_iters": args.max_iters}
    if args.tol is not None:
        _require(args.tol >= 0, "--tol", "must be non-negative")
        fields["solver"] = {**fields.get("solver", {}), "tol_residual": args.tol}
        fields["baseline"] = {**fields.get("baseline", {}), "tol_residual": args.tol}
    try:
        spec = SweepSpec(**fields)
        spec.cells()
    except (TypeError, ValueError) as exc:
        raise UsageError(f"sweep: {exc}")

    result = run_sweep(spec, jobs=args.jobs)
    out = _out_dir(args)
    stem = args.preset or spec.experiment
    paths = result.write(out, stem=stem, raw=args.raw)
    manifest = json.loads(paths["manifest"].read_text())
    manifest["cli"] = _manifest(args)
    _write_json(paths["manifest"], manifest)
    print(json.dumps({k: str(v) for k, v in paths.items()}))
    return EXIT_OK


def cmd_probe(args) -> int:
    from .ensemble import gen_ensemble
    from .identifiability import collision_search, s1_injectivity_check

    _require(args.n >= 1, "--n", "must be positive")
    _require(args.m >= 1, "--m", "must be positive")
    _require(args.budget >= 1, "--budget", "must be positive")
    ens = gen_ensemble(args.n, args.m, (args.seed, 0))
    out = _out_dir(args)
    if args.mode == "s1-check":
        ok, cert = s1_injectivity_check(ens)
        payload = {"mode": "s1-check", **cert}
        positive = not ok
    else:
        _require(1 <= args.s <= args.n, "--s", f"must satisfy 1 <= s <= n, got {args.s}")
        report = collision_search(ens, args.s, seed=(args.seed, 1), budget=args.budget,
                                  collision_tol=args.collision_tol, sep_tol=args.sep_tol)
        payload = {"mode": "collision", **report.to_dict()}
        positive = report.found
    _write_json(out / "probe.json", payload)
    _write_json(out / "manifest.json", _manifest(
        args, seeds={"ensemble": [args.seed, 0], "search": [args.seed, 1]}))
    print(json.dumps({k: payload[k] for k in payload if k not in ("x", "z")}))
    return EXIT_PROBE_POSITIVE if positive else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        argv = sys.argv[1:] if argv is None else list(argv)
        args = _apply_config(parser, argv)
        args.argv = argv
        level = logging.WARNING - 10 * min(args.verbose, 2)
        logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
        return args.handler(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
