"""Command line front end: single runs, the full suite, report merging and
the backend micro-benchmark.

Exit codes: 0 success, 1 configuration error, 2 run (numerical) failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import (
    CSV_HEADER,
    ConfigError,
    ExperimentConfig,
    METHODS,
    REGISTRY,
    SYNTHETIC_IDS,
    VIRTUAL_COUNTS,
    collect_report,
    emit_artifacts,
    metrics_row,
    run_experiment,
    run_suite,
)

_INT_KEYS = {"n_virtual", "n_samples", "burn_in", "seed", "fit_max_iter"}
_FLOAT_KEYS = {"fit_lr"}
_STR_KEYS = {"experiment", "method", "out_dir"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS


def load_config(path) -> dict:
    """Flat key=value file; '#' starts a comment, blank lines ignored."""
    out = {}
    for ln, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _ALL_KEYS:
            raise ConfigError(f"{path}:{ln}: unknown key {key!r}")
        try:
            if key in _INT_KEYS:
                out[key] = int(val)
            elif key in _FLOAT_KEYS:
                out[key] = float(val)
            else:
                out[key] = val
        except ValueError as e:
            raise ConfigError(f"{path}:{ln}: bad value for {key}: {e}") from e
    return out


def _merged_config(args) -> ExperimentConfig:
    vals = {}
    if args.config:
        vals.update(load_config(args.config))
    for key in _ALL_KEYS:
        flag = getattr(args, key.replace("-", "_"), None)
        if flag is not None:
            vals[key] = flag
    if "experiment" not in vals or "method" not in vals:
        raise ConfigError("experiment and method must be given "
                          "(via --config or flags)")
    return ExperimentConfig(**vals)


def _add_run_flags(p, require_exp: bool):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--experiment", choices=sorted(REGISTRY),
                   required=False)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--n-virtual", dest="n_virtual", type=int)
    p.add_argument("--samples", dest="n_samples", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", dest="out_dir")
    p.add_argument("--fit-lr", dest="fit_lr", type=float)
    p.add_argument("--fit-max-iter", dest="fit_max_iter", type=int)


def _cmd_run(args) -> int:
    cfg = _merged_config(args)
    res = run_experiment(cfg)
    if cfg.out_dir:
        out = emit_artifacts(res, cfg.out_dir)
        print(f"artifacts written to {out}")
    print(CSV_HEADER)
    print(metrics_row(res))
    return 0


def _cmd_suite(args) -> int:
    vals = {}
    if args.config:
        vals.update(load_config(args.config))
    for key in ("n_samples", "burn_in", "seed", "out_dir",
                "fit_lr", "fit_max_iter"):
        flag = getattr(args, key, None)
        if flag is not None:
            vals[key] = flag
    vals.setdefault("experiment", SYNTHETIC_IDS[0])
    vals.setdefault("method", "unconstrained")
    vals.setdefault("n_virtual", VIRTUAL_COUNTS[0])
    base = ExperimentConfig(**vals)
    experiments = args.experiments.split(",") if args.experiments else None
    methods = args.methods.split(",") if args.methods else None
    counts = [int(v) for v in args.virtual_counts.split(",")] \
        if args.virtual_counts else None
    rows, failures = run_suite(base, experiments, methods, counts,
                               out_dir=base.out_dir,
                               progress=lambda s: print(s, file=sys.stderr))
    print(CSV_HEADER)
    for r in rows:
        print(r)
    if failures:
        for rid, msg in failures:
            print(f"FAILED {rid}: {msg}", file=sys.stderr)
        return 2
    return 0


def _cmd_report(args) -> int:
    sys.stdout.write(collect_report(args.in_dir, args.format))
    return 0


def _cmd_bench(args) -> int:
    from .accel import HAVE_NUMBA, jitted, pure

    if not HAVE_NUMBA:
        print("numba unavailable; nothing to compare", file=sys.stderr)
        return 1
    m = args.size
    reps = args.reps
    rng = np.random.default_rng(0)
    C = rng.standard_normal((m, m))
    cov = C @ C.T + m * np.eye(m)
    prec = np.linalg.inv(cov)
    mu = np.zeros(m)
    x0 = np.ones(m)
    jitted.gibbs_truncated(prec, mu, x0, 10, 10, 1)  # compile outside timing
    print(f"gibbs sweep benchmark: m={m}, {args.iters} kept draws, "
          f"best of {reps}")
    for name, kern in (("numpy", pure), ("numba", jitted)):
        best = np.inf
        for _ in range(reps):
            t0 = time.perf_counter()
            kern.gibbs_truncated(prec, mu, x0, args.iters, 100, 1)
            best = min(best, time.perf_counter() - t0)
        print(f"  {name:6s} {best:.4f} s  "
              f"({args.iters / best:.0f} draws/s)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="monogp",
                                description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="run one experiment/method combination")
    _add_run_flags(pr, require_exp=True)
    pr.set_defaults(func=_cmd_run)

    ps = sub.add_parser("suite", help="run the full experiment grid")
    ps.add_argument("--config")
    ps.add_argument("--experiments", help="comma separated experiment ids")
    ps.add_argument("--methods", help="comma separated method names")
    ps.add_argument("--virtual-counts", dest="virtual_counts",
                    help="comma separated virtual point counts")
    ps.add_argument("--samples", dest="n_samples", type=int)
    ps.add_argument("--burn-in", dest="burn_in", type=int)
    ps.add_argument("--seed", type=int)
    ps.add_argument("--out", dest="out_dir")
    ps.add_argument("--fit-lr", dest="fit_lr", type=float)
    ps.add_argument("--fit-max-iter", dest="fit_max_iter", type=int)
    ps.set_defaults(func=_cmd_suite)

    pp = sub.add_parser("report", help="merge per-run metrics into one table")
    pp.add_argument("--in", dest="in_dir", required=True)
    pp.add_argument("--format", choices=("csv", "json"), default="csv")
    pp.set_defaults(func=_cmd_report)

    pb = sub.add_parser("bench", help="compare numba and numpy backends")
    pb.add_argument("--size", type=int, default=32)
    pb.add_argument("--iters", type=int, default=2000)
    pb.add_argument("--reps", type=int, default=3)
    pb.set_defaults(func=_cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors already; version/help exit 0
        raise e
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
