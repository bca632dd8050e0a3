"""Command-line entry point: ``ladpfl {run,sweep,bound,gen-data}``.

Exit codes: 0 success, 2 configuration or argument error, 3 runtime error.
``LADP_THREADS`` caps the number of client worker threads; results do not
depend on it.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from ..errors import ConfigError, LadpError
from ..privacy_accountant import ConvergenceConstants, convergence_bound, eta_window
from .config import load_config
from .datasets import generate_synthetic, write_csv_labeled
from .experiment import compare_strategies, format_comparison, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _csv_list(kind):
    def parse(text: str):
        try:
            return [kind(item) for item in text.split(",") if item.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a comma-separated list of {kind.__name__}: {text!r}") from None

    return parse


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ladpfl", description="Layer-wise adaptive local-DP federated learning bench")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("--config", required=True)
    run.add_argument("--output", help="output directory (overrides output_path)")
    run.add_argument("--seed", type=_u64)

    sweep = sub.add_parser("sweep", help="compare strategies over epsilons and seeds")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--strategies", type=_csv_list(str), required=True)
    sweep.add_argument("--epsilons", type=_csv_list(float), required=True)
    sweep.add_argument("--seeds", type=_csv_list(_u64), required=True)

    bound = sub.add_parser("bound", help="evaluate the convergence bound and learning-rate window")
    bound.add_argument("--L", type=float, required=True)
    bound.add_argument("--mu", type=float, required=True)
    bound.add_argument("--gc", type=float, required=True)
    bound.add_argument("--nc", type=float, required=True)
    bound.add_argument("--J", type=int, required=True)
    bound.add_argument("--eta", type=float, required=True)
    bound.add_argument("--t", type=int, required=True)
    bound.add_argument("--gap", type=float, required=True)

    gen = sub.add_parser("gen-data", help="write a synthetic blob dataset as labelled CSV")
    gen.add_argument("--classes", type=int, required=True)
    gen.add_argument("--per-class", type=int, required=True)
    gen.add_argument("--dim", type=int, required=True)
    gen.add_argument("--separation", type=float, required=True)
    gen.add_argument("--seed", type=_u64, required=True)
    gen.add_argument("--out", required=True)
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_run(seed=args.seed)
    if args.output is not None:
        cfg = replace(cfg, output_path=args.output)
    result = run_experiment(cfg)
    print(json.dumps(result.summary, indent=2))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    cells = compare_strategies(cfg, args.strategies, args.epsilons, args.seeds)
    print(format_comparison(cells))
    return EXIT_OK


def _cmd_bound(args) -> int:
    consts = ConvergenceConstants(L=args.L, mu=args.mu, G_c=args.gc, N_c=args.nc, J=args.J, eta=args.eta)
    window = eta_window(consts)
    if window is None:
        print("eta window: empty")
    else:
        print(f"eta window: ({window.lower!r}, {window.upper!r})")
    result = convergence_bound(consts, args.t, args.gap)
    print(f"psi: {result.psi!r}")
    print(f"phi: {result.phi!r}")
    print(f"ratio: {result.ratio!r}{'' if result.ratio_valid else ' (outside (0, 1): bound does not contract)'}")
    print(f"bound: {result.bound!r}")
    return EXIT_OK


def _cmd_gen_data(args) -> int:
    data = generate_synthetic(args.classes, args.per_class, args.dim, args.separation, args.seed)
    write_csv_labeled(data, args.out)
    print(f"wrote {len(data)} samples to {args.out}")
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "bound": _cmd_bound, "gen-data": _cmd_gen_data}

# argument-level mistakes in these commands are configuration errors
_ARGUMENT_COMMANDS = {"bound", "gen-data"}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LadpError as exc:
        if args.command in _ARGUMENT_COMMANDS:
            print(f"invalid arguments: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - the exit code is the contract
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
