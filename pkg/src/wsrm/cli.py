"""Command-line front end: ``wsrm {solve,experiment,verify,bench}``.

Exit codes: 0 on success/convergence, 2 when an iteration cap was hit
(``solve``), 1 on any error including bad flags.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, harness, sca
from .baselines import wmmse, zero_forcing
from .network import ChannelSet, generate_rayleigh_channels, rng_stream, weighted_sum_rate

EXIT_OK, EXIT_ERROR, EXIT_CAP = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1 so that 2 keeps meaning "iteration cap"."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _algorithms(text: str) -> list[str]:
    names = [a.strip().upper() for a in text.split(",") if a.strip()]
    valid = [a.value for a in harness.Algorithm]
    for a in names:
        if a not in valid:
            raise argparse.ArgumentTypeError(f"unknown algorithm {a!r}; choose from {','.join(valid)}")
    if not names:
        raise argparse.ArgumentTypeError("empty algorithm list")
    return names


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {v}")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a number > 0, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wsrm", description="Weighted sum-rate maximization for multicell "
                "MISO downlinks: SCA solver, baselines and experiments.")
    p.add_argument("--version", action="version", version=f"wsrm {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0,
                   help="increase log verbosity (-v info, -vv debug)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def spec_source(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--preset", help="built-in experiment spec: "
                       + ", ".join(harness.preset_names()))
        g.add_argument("--spec", metavar="FILE", help="experiment spec file (JSON)")

    s = sub.add_parser("solve", help="solve one instance and write its result as JSON",
                       description="Solve one instance. The network comes from --preset or "
                       "--spec (first power point unless --power-db is given); channels come "
                       "from --channels or are drawn from --seed.")
    spec_source(s)
    s.add_argument("--channels", metavar="FILE", help="channel JSON file (kind 'channels')")
    s.add_argument("--seed", type=int, default=0, help="seed for channels and random starts (default 0)")
    s.add_argument("--power-db", type=float, help="override the power point in dB")
    s.add_argument("--algorithm", type=str.upper, default="SCA",
                   choices=[a.value for a in harness.Algorithm], help="algorithm to run (default SCA)")
    s.add_argument("--tol", type=_positive_float, default=1e-2,
                   help="stop when the WSR changes by less than this (default 1e-2)")
    s.add_argument("--max-iters", type=_positive_int, help="iteration cap (default 50 for SCA, "
                   "1000 for WMMSE)")
    s.add_argument("--out", metavar="FILE", default="wsrm-solve.json",
                   help="result JSON path (default wsrm-solve.json)")

    e = sub.add_parser("experiment", help="run a Monte Carlo experiment",
                       description="Run a seeded experiment and write results.csv, traces.json "
                       "and summary.json. WSRM_THREADS bounds the worker pool.")
    spec_source(e)
    e.add_argument("--seed", type=int, help="override the master seed")
    e.add_argument("--trials", type=_positive_int, help="override the number of trials")
    e.add_argument("--tol", type=_positive_float, help="override the stopping tolerance")
    e.add_argument("--max-iters", type=_positive_int, help="override the SCA iteration cap")
    e.add_argument("--algorithms", type=_algorithms, help="comma-separated subset of "
                   "SCA,SCA_EXACT,WMMSE,ZF")
    e.add_argument("--out", metavar="DIR", default="wsrm-out",
                   help="output directory (default wsrm-out)")
    e.add_argument("--timing", action="store_true",
                   help="record seconds per iteration (outputs are then not byte-reproducible)")

    v = sub.add_parser("verify", help="run the built-in property suites",
                       description="Run the property suites and print a pass/fail table.")
    v.add_argument("--filter", metavar="TEXT", help="run only suites whose name contains TEXT")

    b = sub.add_parser("bench", help="time SCA and WMMSE iterations",
                       description="Median wall-clock time per iteration on seeded instances.")
    spec_source(b)
    b.add_argument("--trials", type=_positive_int, default=5, help="instances to time (default 5)")
    b.add_argument("--seed", type=int, default=0, help="seed (default 0)")
    return p


def _spec_from_args(args, default: str) -> harness.ExperimentSpec:
    if getattr(args, "spec", None):
        return harness.load_spec(args.spec)
    return harness.load_preset(args.preset or default)


def _load_channels(path: str) -> ChannelSet:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"channel file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as err:
        raise ValueError(f"{p}: not valid JSON ({err})") from None
    if not isinstance(data, dict):
        raise ValueError(f"{p}: expected a JSON object")
    return ChannelSet.from_json(data)


def cmd_solve(args) -> int:
    spec = _spec_from_args(args, "single-cell")
    power_db = spec.power_grid[0] if args.power_db is None else args.power_db
    cfg = spec.config_at(power_db)
    if args.channels:
        ch = _load_channels(args.channels)
        ch.check(cfg)
    else:
        ch = generate_rayleigh_channels(cfg, rng_stream(args.seed, 0, 0))
    alg = args.algorithm
    init_seed = rng_stream(args.seed, 0, 1)
    if alg in ("SCA", "SCA_EXACT"):
        sc = sca.ScaConfig(stop_tol=args.tol, max_outer_iters=args.max_iters or 50)
        fn = sca.run if alg == "SCA" else sca.run_exact_variant
        res = fn(cfg, ch, sc, seed=init_seed)
        payload = res.to_json()
    elif alg == "WMMSE":
        res = wmmse(cfg, ch, stop_tol=args.tol, max_iters=args.max_iters or 1000,
                    seed=init_seed, init=spec.wmmse_init)
        payload = res.to_json()
    else:
        beams = zero_forcing(cfg, ch)
        wsr = weighted_sum_rate(cfg, ch, beams)
        payload = {"converged": True, "iterations": 0, "trace": [wsr],
                   "beams": beams.to_json(), "kkt_residual": None}
    if payload.get("kkt_residual") is None and alg != "ZF":
        payload["kkt_residual"] = sca.kkt_residual(cfg, ch, res)
    payload.update(algorithm=alg, power_db=power_db, seed=args.seed,
                   network=cfg.to_dict())
    harness.atomic_write_text(args.out, json.dumps(payload, sort_keys=True, indent=2) + "\n")
    print(f"{alg}: WSR = {payload['trace'][-1]:.6f} bits/s/Hz after "
          f"{payload['iterations']} iterations "
          f"({'converged' if payload['converged'] else 'iteration cap reached'})")
    if payload.get("kkt_residual") is not None:
        print(f"KKT residual = {payload['kkt_residual']:.3e}")
    print(f"result written to {args.out}")
    return EXIT_OK if payload["converged"] else EXIT_CAP


def cmd_experiment(args) -> int:
    spec = _spec_from_args(args, "paper-fig1")
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.trials is not None:
        changes["num_trials"] = args.trials
    if args.tol is not None:
        changes["stop_tol"] = args.tol
    if args.max_iters is not None:
        changes["max_iters"] = args.max_iters
    if args.algorithms is not None:
        changes["algorithms"] = tuple(args.algorithms)
    if args.timing:
        changes["record_timing"] = True
    if changes:
        spec = spec.replace(**changes)
    result = harness.run_experiment(spec)
    paths = harness.write_outputs(result, args.out)
    rows = []
    for a in spec.algorithms:
        for p in spec.power_grid:
            recs = result.select(a, p)
            rows.append({"algorithm": a.value, "power_db": p,
                         "mean_wsr": result.mean_wsr(a, p),
                         "failed": sum(r.failed for r in recs)})
    print(harness.format_table(rows, ["algorithm", "power_db", "mean_wsr", "failed"]))
    comp = harness.iteration_comparison(result)
    if comp:
        print()
        print(harness.format_table(comp, ["algorithm", "runs", "median", "q1", "q3",
                                          "not_converged", "failed"]))
    print()
    for name, path in paths.items():
        print(f"{name}: {path}")
    if all(r.failed for r in result.records):
        print("error: every trial failed", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_suites

    results = run_suites(args.filter)
    if not results:
        print(f"error: no suite matches {args.filter!r}", file=sys.stderr)
        return EXIT_ERROR
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name.ljust(width)}  {r.seconds:6.2f}s  {r.detail}")
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} suites passed")
    return EXIT_ERROR if failed else EXIT_OK


def cmd_bench(args) -> int:
    spec = _spec_from_args(args, "paper-fig2")
    sca_t, wm_t = [], []
    for trial in range(args.trials):
        cfg = spec.config_at(spec.power_grid[-1])
        ch = generate_rayleigh_channels(cfg, rng_stream(args.seed, trial, 0))
        sca_t += sca.run(cfg, ch).seconds_per_iter
        wm_t += wmmse(cfg, ch).seconds_per_iter
    print(f"network: B={cfg.num_bs}, N={cfg.num_antennas}, K={cfg.num_users}, "
          f"{spec.power_grid[-1]} dB, {args.trials} instances")
    print(f"SCA   median seconds per iteration: {np.median(sca_t):.4g} ({len(sca_t)} iterations)")
    print(f"WMMSE median seconds per iteration: {np.median(wm_t):.4g} ({len(wm_t)} iterations)")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "experiment": cmd_experiment, "verify": cmd_verify,
            "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        code = COMMANDS[args.command](args)
    except (OSError, ValueError, KeyError, TypeError, RuntimeError, np.linalg.LinAlgError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
    logging.getLogger(__name__).info("%s finished in %.2fs", args.command, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
