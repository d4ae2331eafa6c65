"""
Command-line entry point for robust spectrally sparse signal recovery.

Subcommands:
    recover   recover a `re,im` CSV signal and write x_hat, s_hat and a JSON report
    pt        phase-transition sweep over (r, m)
    eff       runtime sweep over n, ASAP against SAP
    noise     output SNR sweep
    impulse   large impulsive corruptions, ASAP against SAP, with power spectra
    gen       write a generated corrupted instance for use with `recover`

Exit codes: 0 success, 2 non-convergence, 3 parse/config error, 4 I/O error.
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

from src.asap import DEFAULT_EPSILON, DEFAULT_GAMMA, DEFAULT_MAX_ITER
from src.errors import LanczosConvergenceError, NumericalBreakdownError, RecoveryError
from src.harness import DEFAULT_BASE_SEED, ExperimentConfig, make_instance, recover_file, run_experiment, write_instance
from src.simgen import NOISELESS, CorruptionSpec


EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_CONFIG = 3
EXIT_IO = 4

# Environment overrides (flags still win):
#   ASAP_THREADS     worker count for sweeps
#   ASAP_OUTPUT_DIR  default output directory
#   ASAP_LOG_LEVEL   logging level name (INFO, DEBUG, ...)
ENV_THREADS = "ASAP_THREADS"
ENV_OUTPUT_DIR = "ASAP_OUTPUT_DIR"
ENV_LOG_LEVEL = "ASAP_LOG_LEVEL"

SWEEP_KINDS = {"pt": "phase_transition", "eff": "efficiency", "noise": "noise", "impulse": "impulse"}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="Base seed")
    parser.add_argument("--threads", type=int, default=None, help="Worker count (env ASAP_THREADS)")
    parser.add_argument("--out", type=str, default=None, help="Output directory (env ASAP_OUTPUT_DIR)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Robust recovery of spectrally sparse signals (ASAP).")
    sub = parser.add_subparsers(dest="command", required=True)

    rec = sub.add_parser("recover", help="Recover a signal stored as a re,im CSV file")
    rec.add_argument("input", help="Path to the observed signal")
    rec.add_argument("-r", "--rank", type=int, required=True, help="Model order r")
    rec.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)
    rec.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    rec.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    rec.add_argument("--beta", type=float, default=None, help="Override the estimated beta")
    rec.add_argument("--beta-init", type=float, default=None, help="Override the estimated beta_init")
    rec.add_argument("--beta-rule", choices=["experiment", "theory"], default=None)
    rec.add_argument("--x-inf-bound", type=float, default=None, help="Known bound on max |x[t]|")
    _add_common(rec)

    for name, kind in SWEEP_KINDS.items():
        sweep = sub.add_parser(name, help=f"Run a {kind.replace('_', ' ')} experiment")
        sweep.add_argument("--config", type=str, default=None, help="YAML experiment file")
        sweep.add_argument("--trials", type=int, default=None)
        sweep.add_argument("--algorithm", choices=["asap", "sap", "both"], default=None)
        _add_common(sweep)

    gen = sub.add_parser("gen", help="Write a generated corrupted instance")
    gen.add_argument("-n", type=int, required=True, help="Signal length")
    gen.add_argument("-r", "--rank", type=int, required=True)
    group = gen.add_mutually_exclusive_group()
    group.add_argument("-m", type=int, default=None, help="Number of corruptions")
    group.add_argument("--alpha", type=float, default=None, help="Corruption rate")
    gen.add_argument("-c", type=float, default=1.0, help="Corruption magnitude scale")
    gen.add_argument("--snr-db", type=float, default=NOISELESS)
    gen.add_argument("--separation", type=float, default=None)
    gen.add_argument("--damped", action="store_true")
    _add_common(gen)
    return parser


def load_sweep_config(kind: str, args: argparse.Namespace) -> ExperimentConfig:
    """Defaults < YAML file < environment < flags."""
    data = {"kind": kind}
    if args.config:
        config = ExperimentConfig.from_yaml(args.config)
        if config.kind != kind:
            raise ValueError(f"Config {args.config} is a '{config.kind}' experiment, not '{kind}'")
        data = config.to_dict()
    if os.getenv(ENV_THREADS):
        data["threads"] = int(os.getenv(ENV_THREADS))
    if os.getenv(ENV_OUTPUT_DIR):
        data["out"] = os.getenv(ENV_OUTPUT_DIR)
    config = ExperimentConfig.from_dict(data)
    return config.with_overrides(seed=args.seed, threads=args.threads, out=args.out,
                                 trials=args.trials, algorithm=args.algorithm)


def _output_dir(args: argparse.Namespace) -> str:
    return args.out or os.getenv(ENV_OUTPUT_DIR) or "results"


def run_recover(args: argparse.Namespace) -> int:
    result, _ = recover_file(
        args.input,
        _output_dir(args),
        args.rank,
        gamma=args.gamma,
        epsilon=args.epsilon,
        max_iter=args.max_iter,
        beta=args.beta,
        beta_init=args.beta_init,
        beta_rule=args.beta_rule,
        x_inf_bound=args.x_inf_bound,
    )
    if not result.converged:
        logging.warning(f"Recovery did not converge (err={result.errors[-1]:.3e}); outputs written anyway")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def run_gen(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else DEFAULT_BASE_SEED
    m = 0
    if args.m is not None or args.alpha is not None:
        m = CorruptionSpec(scale=args.c, count=args.m, rate=args.alpha).resolve_count(args.n)
    inst = make_instance(args.n, args.rank, m, args.c, args.snr_db, seed, args.separation, args.damped)
    paths = write_instance(inst, _output_dir(args))
    logging.info(f"[gen] wrote {', '.join(paths)}")
    return EXIT_OK


def dispatch(args: argparse.Namespace) -> int:
    if args.command == "recover":
        return run_recover(args)
    if args.command == "gen":
        return run_gen(args)
    config = load_sweep_config(SWEEP_KINDS[args.command], args)
    output = run_experiment(config)
    logging.info(f"[{config.kind}] wrote {', '.join(output.paths)}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        level=getattr(logging, os.getenv(ENV_LOG_LEVEL, "INFO").upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(message)s",
    )
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on bad usage; 2 is reserved for non-convergence here
        return EXIT_OK if e.code in (0, None) else EXIT_CONFIG
    try:
        return dispatch(args)
    except (LanczosConvergenceError, NumericalBreakdownError) as e:
        logging.error(f"Numerical failure: {e}")
        return EXIT_NOT_CONVERGED
    except OSError as e:
        logging.error(f"I/O error: {e}")
        return EXIT_IO
    except (RecoveryError, ValueError) as e:
        logging.error(f"Invalid input or configuration: {e}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
