"""Command-line interface: kernel, rate, simulate, crossing and table1.

Exit codes: 0 success, 1 usage error, 2 numeric failure, 3 configuration error.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import math
import secrets
import sys

import numpy as np

from .asymptotics import BridgeAsymptotics, speed_exponents
from .conditioning import ConditionedKernel, Observations
from .config import RunConfig, load_config, make_spec
from .errors import ConfigError, DomainError, InvalidStartError, ParameterError, PinnedGPError, UnsupportedFamilyError
from .exit_rates import ExitProblem, rate_double, rate_lower, rate_upper
from .montecarlo import estimate_crossing, table1_harness, write_csv
from .simulate import PathSampler

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _family_args(p: argparse.ArgumentParser):
    p.add_argument("--family", help="fbm, bm, cheridito, mfold, ibm, ifbm")
    p.add_argument("--hurst", type=float)
    p.add_argument("--c", type=float, help="Brownian weight (cheridito)")
    p.add_argument("--c-h", dest="c_h", type=float, help="fBm weight (cheridito)")
    p.add_argument("--m", type=int, help="integration count (mfold)")


def _run_args(p: argparse.ArgumentParser):
    _family_args(p)
    p.add_argument("--config", help="YAML file of run settings")
    p.add_argument("--step", type=float)
    p.add_argument("--horizon", type=float)
    p.add_argument("--upper", help="level or schedule 'L0;t1:L1;...'")
    p.add_argument("--lower", help="level or schedule 'L0;t1:L1;...'")
    p.add_argument("--start", type=float)
    p.add_argument("--paths", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--chunk-size", dest="chunk_size", type=int)
    p.add_argument("--output", "-o", help="CSV destination (default stdout)")
    p.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")


def _parse_pins(text):
    if not text:
        return Observations()
    times, values = [], []
    try:
        for item in text.split(","):
            t, x = item.split(":")
            times.append(float(t))
            values.append(float(x))
    except ValueError as exc:
        raise ConfigError(f"pins must look like 'T1:x1,T2:x2', got {text!r}") from exc
    try:
        return Observations(tuple(times), tuple(values))
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pinnedgp", description="Pinned Gaussian process asymptotics and barrier crossing")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("kernel", help="evaluate k(t, s), optionally conditioned on pins")
    _family_args(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--pins", help="past observations 'T1:x1,T2:x2'")

    p = sub.add_parser("rate", help="bridge crossing rate(s) for one step")
    _family_args(p)
    p.add_argument("--x", type=float, required=True, help="value at the step start")
    p.add_argument("--y", type=float, required=True, help="value at the step end")
    p.add_argument("--upper", type=float)
    p.add_argument("--lower", type=float)
    p.add_argument("--eps", type=float, help="step length; also print exp(-I/eps^q)")
    p.add_argument("--pins", help="past observations 'T1:x1,...' (default for integrated families: 1:x)")

    p = sub.add_parser("simulate", help="dump sampled paths as CSV (path_id,t,value)")
    _run_args(p)

    p = sub.add_parser("crossing", help="Monte Carlo crossing probability (one CSV row)")
    _run_args(p)
    p.add_argument("--method", choices=["crude", "corrected"])

    p = sub.add_parser("table1", help="fBm upper-barrier crossing table (15 CSV rows)")
    p.add_argument("--paths", type=int, default=100000)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--output", "-o")
    return parser


def _spec_from(args):
    if args.family is None:
        raise ConfigError("--family is required")
    return make_spec(args.family, args.hurst, args.c, args.c_h, args.m)


@contextlib.contextmanager
def _out(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _seed(seed):
    if seed is None:
        seed = secrets.randbits(32)
        print(f"seed: {seed}", file=sys.stderr)
    return seed


def _fmt(v: float) -> str:
    # 15 significant digits hide last-bit rounding noise
    return repr(float(f"{float(v):.15g}"))


def cmd_kernel(args) -> int:
    spec = _spec_from(args)
    obs = _parse_pins(args.pins)
    val = ConditionedKernel(spec, obs).cov(args.t, args.s)
    print(_fmt(val))
    return EXIT_OK


def cmd_rate(args) -> int:
    if args.upper is None and args.lower is None:
        raise ConfigError("rate needs --upper and/or --lower")
    spec = _spec_from(args)
    obs = _parse_pins(args.pins)
    if spec.is_integrated and obs.n == 0:
        obs = Observations((1.0,), (args.x,))
    ba = BridgeAsymptotics(spec, obs)
    ep = ExitProblem(ba, args.x, args.y, upper=args.upper, lower=args.lower)
    rates = {}
    if args.upper is not None:
        rates["upper"] = rate_upper(ep)
    if args.lower is not None:
        rates["lower"] = rate_lower(ep)
    if args.upper is not None and args.lower is not None:
        rates["double"] = rate_double(ep)
    q = speed_exponents(spec).bridge_exp
    probs = {}
    if args.eps is not None:
        probs = {k: math.exp(-v / args.eps**q) for k, v in rates.items()}
        if "double" in probs:
            # same two-sided rule as the Monte Carlo walk
            probs["double"] = 1.0 - (1.0 - probs["upper"]) * (1.0 - probs["lower"])
    for name, val in rates.items():
        print(f"{name} {_fmt(val)}")
        if name in probs:
            print(f"p_{name} {_fmt(probs[name])}")
    return EXIT_OK


def _resolve(args) -> RunConfig:
    cfg = load_config(args.config, validate=False) if args.config else RunConfig()
    overrides = {k: getattr(args, k) for k in RunConfig.keys() if getattr(args, k, None) is not None}
    if args.verbose:
        overrides["verbosity"] = args.verbose
    cfg = RunConfig.from_mapping(overrides, cfg)
    cfg.seed = _seed(cfg.seed)
    return cfg


def cmd_simulate(args) -> int:
    cfg = _resolve(args)
    if args.dump_config:
        sys.stdout.write(cfg.dump())
        return EXIT_OK
    K = int(round(cfg.horizon / cfg.step))
    if abs(cfg.horizon / cfg.step - K) > 1e-9 * K or K < 1:
        raise ConfigError("horizon/step must be a positive integer")
    grid = cfg.horizon * np.arange(1, K + 1) / K
    sampler = PathSampler(cfg.spec(), grid, seed=cfg.seed)
    with _out(cfg.output) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_id", "t", "value"])
        for pid in range(cfg.paths):
            x = cfg.start + sampler.sample_path(pid)
            w.writerow([pid, repr(0.0), repr(float(cfg.start))])
            for t, v in zip(grid, x):
                w.writerow([pid, repr(float(t)), repr(float(v))])
    return EXIT_OK


def cmd_crossing(args) -> int:
    cfg = _resolve(args)
    if args.dump_config:
        sys.stdout.write(cfg.dump())
        return EXIT_OK
    res = estimate_crossing(cfg.to_run())
    with _out(cfg.output) as fh:
        write_csv([res], fh)
    return EXIT_OK


def cmd_table1(args) -> int:
    if args.paths < 1:
        raise ConfigError("--paths must be positive")
    from .config import default_workers

    seed = _seed(args.seed)
    workers = args.workers or default_workers()
    log = logging.getLogger("pinnedgp")
    results = table1_harness(seed, args.paths, workers=workers,
                             progress=lambda r: log.info("H=%s %s step=%s: %.5f", r.H, r.method.value, r.step, r.estimate))
    with _out(args.output) as fh:
        write_csv(results, fh)
    return EXIT_OK


COMMANDS = {"kernel": cmd_kernel, "rate": cmd_rate, "simulate": cmd_simulate, "crossing": cmd_crossing,
            "table1": cmd_table1}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ParameterError, DomainError, InvalidStartError, UnsupportedFamilyError) as exc:
        parser.print_usage(sys.stderr)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PinnedGPError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
