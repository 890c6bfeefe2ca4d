"""Command-line experiment runner.

    afosim run --config path.json [--out-dir DIR] [--override key=value ...]
               [--quiet] [--threads N]
    afosim list-experiments

Exit codes: 0 success, 2 configuration/validation error, 3 numerical
failure.  `--override` takes dot-paths into the config document
(`params.K=1e6`, `integrator.output_step=1e-3`, `horizon=5`); values are
parsed as JSON when possible, else kept as strings.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from .errors import AfosimError, ConfigurationError, DomainError
from .experiments import run_experiment, validate_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

BUNDLED = {
    "fig2": "single oscillator, pure cosine input at very strong coupling",
    "fig3": "single oscillator, periodic three-cosine input with four sign changes per period",
    "fig4": "single oscillator at small coupling entering its lock region",
    "fig5": "synchronization-region sweep against the three-cosine periodic input",
    "lorenz": "frequency extraction from the centered z component of a chaotic Lorenz run",
    "aperiodic": "incommensurate three-cosine input at very strong coupling (no convergence)",
    "freqresp": "frequency response of the adaptation mechanism to a modulated input",
    "pool1": "single oscillator with feedback and amplitude adaptation",
    "pool3": "three-oscillator pool decomposing a discrete spectrum",
    "pool50": "fifty-oscillator pool with amplitude-weighted frequency distribution",
    "timevarying": "hundred-oscillator pool tracking chirps and transient bursts",
}


def bundled_config_path(name: str) -> Path:
    ref = resources.files("afosim").joinpath(f"configs/{name}.json")
    return Path(str(ref))


def load_config(path) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"malformed JSON in {path}: {exc}") from exc


def apply_override(cfg: dict, assignment: str):
    if "=" not in assignment:
        raise ConfigurationError(f"override must look like key=value: {assignment!r}")
    path, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    keys = path.split(".")
    node = cfg
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            node[k] = {}
        node = node[k]
    node[keys[-1]] = value


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="afosim",
        description="Adaptive frequency oscillator experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("--config", required=True,
                       help="path to a config JSON, or a bundled name")
    p_run.add_argument("--out-dir", default="out")
    p_run.add_argument("--override", action="append", default=[],
                       metavar="KEY=VALUE", help="dot-path override into the config")
    p_run.add_argument("--quiet", action="store_true")
    p_run.add_argument("--threads", type=int, default=None,
                       help="cap sweep concurrency (default: machine parallelism)")

    sub.add_parser("list-experiments", help="list bundled experiment configs")

    args = parser.parse_args(argv)

    if args.command == "list-experiments":
        for name, desc in BUNDLED.items():
            print(f"{name:12s} {desc}")
        return EXIT_OK

    try:
        cfg_path = Path(args.config)
        if not cfg_path.exists() and args.config in BUNDLED:
            cfg_path = bundled_config_path(args.config)
        cfg = load_config(cfg_path)
        for assignment in args.override:
            apply_override(cfg, assignment)
        validate_config(cfg)
    except AfosimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        run_experiment(cfg, args.out_dir, threads=args.threads, quiet=args.quiet)
    except (ConfigurationError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AfosimError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
