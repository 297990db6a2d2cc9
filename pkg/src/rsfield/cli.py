"""Command-line driver.

    rsfield run <config>... [--out PATH] [--dt STEP] [--jobs K] [--gnuplot]
    rsfield scenario <name> [--param k=v ...] [--out PATH] [--dt STEP]
    rsfield oracle-check <config> --cutoff N [--tol X] [--dt STEP]

Exit codes: 0 success, 2 configuration error, 3 numerical failure or failed check.
RSFIELD_JOBS sets the default number of worker threads for ``run``.
"""
from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import yaml

from .core import RSFError
from .library import LIBRARY, make_scenario
from .scenario import (ConfigError, emit_csv, format_csv, gnuplot_script, load_scenario,
                       oracle_check, run_scenario)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
JOBS_ENV = "RSFIELD_JOBS"


def _default_jobs() -> int:
    v = os.environ.get(JOBS_ENV, "1")
    try:
        return max(1, int(v))
    except ValueError:
        return 1


def _positive(x):
    v = float(x)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def _parser():
    p = argparse.ArgumentParser(prog="rsfield", description="Reduced-state field simulations.")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run scenario config files")
    r.add_argument("configs", nargs="+")
    r.add_argument("--out", help="CSV path (one config) or directory (several)")
    r.add_argument("--dt", type=_positive)
    r.add_argument("--jobs", type=int, default=None, help=f"threads (default ${JOBS_ENV} or 1)")
    r.add_argument("--gnuplot", action="store_true", help="write a .gp script next to each CSV")

    s = sub.add_parser("scenario", help="run a named scenario from the built-in library")
    s.add_argument("name", choices=sorted(LIBRARY))
    s.add_argument("--param", action="append", default=[], metavar="K=V")
    s.add_argument("--out")
    s.add_argument("--dt", type=_positive)
    s.add_argument("--gnuplot", action="store_true")

    o = sub.add_parser("oracle-check", help="compare against the truncated Fock-space oracle")
    o.add_argument("config")
    o.add_argument("--cutoff", type=int, required=True)
    o.add_argument("--tol", type=_positive, default=1e-6)
    o.add_argument("--dt", type=_positive)
    return p


def _write(table, out, gnuplot):
    if out is None:
        sys.stdout.write(format_csv(table))
        return
    emit_csv(table, out)
    if gnuplot:
        with open(os.path.splitext(out)[0] + ".gp", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(gnuplot_script(table, os.path.basename(out)))


def _params(items):
    out = {}
    for it in items:
        if "=" not in it:
            raise ConfigError(f"--param {it!r}: expected k=v")
        k, v = it.split("=", 1)
        try:
            out[k.strip()] = yaml.safe_load(v)
        except yaml.YAMLError:
            raise ConfigError(f"--param {it!r}: cannot read value") from None
    return out


def _run_one(path, dt):
    return run_scenario(load_scenario(path), dt=dt)


def _cmd_run(a):
    jobs = a.jobs if a.jobs is not None else _default_jobs()
    scen = [load_scenario(c) for c in a.configs]        # config errors before any work
    if len(scen) > 1 and a.out and not os.path.isdir(a.out):
        raise ConfigError(f"--out {a.out}: several configs need an existing directory")
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as ex:
        tables = list(ex.map(lambda s: run_scenario(s, dt=a.dt), scen))
    for path, table in zip(a.configs, tables):
        out = a.out
        if len(scen) > 1 and a.out:
            out = os.path.join(a.out, os.path.splitext(os.path.basename(path))[0] + ".csv")
        _write(table, out, a.gnuplot)
    return EXIT_OK


def _cmd_scenario(a):
    s = make_scenario(a.name, **_params(a.param))
    _write(run_scenario(s, dt=a.dt), a.out, a.gnuplot)
    return EXIT_OK


def _cmd_oracle(a):
    if a.cutoff < 1:
        raise ConfigError("--cutoff must be >= 1")
    rep = oracle_check(load_scenario(a.config), a.cutoff, a.tol, dt=a.dt)
    print(rep.format())
    return EXIT_OK if rep.passed else EXIT_NUMERIC


def main(argv=None) -> int:
    a = _parser().parse_args(argv)
    try:
        with np.errstate(all="ignore"):
            return {"run": _cmd_run, "scenario": _cmd_scenario,
                    "oracle-check": _cmd_oracle}[a.cmd](a)
    except ConfigError as e:
        print(f"rsfield: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"rsfield: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (RSFError, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"rsfield: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
