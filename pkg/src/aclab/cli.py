"""Command line runner: ``aclab run <experiment> <config> [--out DIR] [--seed N]``.

The config is an INI file. Every key is optional::

    [run]
    potential = quartic          # or a path to a kind=table|poly file
    epsilons = 0.1, 0.05, 0.025  # scaling scans
    epsilon = 0.05               # single-eps experiments
    cells_per_eps = 10           # h = eps / cells_per_eps, at least 8
    margin = 10                  # window margin in units of eps

    [tolerances]
    newton residual = 1e-12      # overrides by check name

    [interaction]
    T_list = 4, 6, 8

Exit status is 0 when every check passes, 1 on a tolerance failure and 2 on
a configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import inspect
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .experiments import EXPERIMENTS, Settings, result_json
from .potential import load_potential, make_quartic

MIN_CELLS_PER_EPS = 8


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    potential: str = "quartic"
    epsilons: tuple[float, ...] = (0.1, 0.05, 0.025)
    epsilon: float = 0.05
    cells_per_eps: int = 10
    margin: float = 10.0
    tolerances: dict[str, float] = field(default_factory=dict)
    options: dict[str, object] = field(default_factory=dict)
    out: str = "results"
    seed: int = 0

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        for e in (*self.epsilons, self.epsilon):
            if not (0.0 < e <= 0.5):
                raise ConfigError(f"epsilon {e} outside (0, 0.5]")
        if self.cells_per_eps < MIN_CELLS_PER_EPS:
            raise ConfigError(f"cells_per_eps = {self.cells_per_eps} gives h > eps / {MIN_CELLS_PER_EPS}")
        if self.margin <= 0:
            raise ConfigError("margin must be positive")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def settings(self) -> Settings:
        if self.potential == "quartic":
            pot = make_quartic()
        else:
            try:
                pot = load_potential(self.potential)
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot load potential: {exc}") from exc
        return Settings(pot, tuple(self.epsilons), self.epsilon, self.cells_per_eps, self.margin, self.seed,
                        dict(self.tolerances))

    def to_json(self) -> dict:
        return {
            "experiment": self.experiment,
            "potential": self.potential,
            "epsilons": list(self.epsilons),
            "epsilon": self.epsilon,
            "cells_per_eps": self.cells_per_eps,
            "margin": self.margin,
            "tolerances": self.tolerances,
            "options": {k: list(v) if isinstance(v, tuple) else v for k, v in self.options.items()},
            "seed": self.seed,
        }


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(",", " ").split())


def _option(value: str):
    vals = _floats(value)
    return vals[0] if len(vals) == 1 else vals


def load_config(path: str | Path, experiment: str, out: str, seed: int | None) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # check names are case sensitive
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    cfg = ExperimentConfig(experiment, out=out)
    try:
        if cp.has_section("run"):
            sec = cp["run"]
            cfg.potential = sec.get("potential", cfg.potential)
            if "epsilons" in sec:
                cfg.epsilons = _floats(sec["epsilons"])
            cfg.epsilon = sec.getfloat("epsilon", cfg.epsilon)
            cfg.cells_per_eps = sec.getint("cells_per_eps", cfg.cells_per_eps)
            cfg.margin = sec.getfloat("margin", cfg.margin)
            cfg.seed = sec.getint("seed", cfg.seed)
        if cp.has_section("tolerances"):
            cfg.tolerances = {k: float(v) for k, v in cp["tolerances"].items()}
        if cp.has_section(experiment):
            cfg.options = {k: _option(v) for k, v in cp[experiment].items()}
    except ValueError as exc:
        raise ConfigError(f"bad value in config: {exc}") from exc
    if seed is not None:
        cfg.seed = seed
    if len(cfg.epsilons) < 2 and experiment in ("two-layer", "verify-all"):
        raise ConfigError("the separation fit needs at least two epsilons")
    cfg.validate()
    cfg.settings()  # an unreadable potential file is a config error, not a crash mid-run
    fn = EXPERIMENTS[experiment]
    allowed = set(inspect.signature(fn).parameters) - {"s", "out"}
    unknown = set(cfg.options) - allowed
    if unknown:
        raise ConfigError(f"unknown options for {experiment}: {', '.join(sorted(unknown))}")
    return cfg


def run(cfg: ExperimentConfig) -> int:
    """Run one experiment, print its checks and write outputs plus manifest.json."""
    out = Path(cfg.out) / cfg.experiment
    fn = EXPERIMENTS[cfg.experiment]
    result = fn(cfg.settings(), out, **cfg.options)
    print(result.report())
    print(f"{cfg.experiment}: {'PASS' if result.passed else 'FAIL'} ({sum(c.passed for c in result.checks)}/{len(result.checks)} checks)")
    manifest = {"config": cfg.to_json(), "version": __version__, **result_json(result), "files": result.files}
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return 0 if result.passed else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aclab", description="Allen-Cahn layered-solution verification runner")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a named experiment")
    r.add_argument("experiment", help=f"one of: {', '.join(EXPERIMENTS)}")
    r.add_argument("config", help="INI config file (may be empty)")
    r.add_argument("--out", default="results", help="output root; results go to <out>/<experiment>/")
    r.add_argument("--seed", type=int, default=None, help="seed for the random-field checks")
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config, args.experiment, args.out, args.seed)
    except ConfigError as exc:
        ap.print_usage(sys.stderr)
        print(f"aclab: error: {exc}", file=sys.stderr)
        return 2
    threads = os.environ.get("ACLAB_THREADS")
    if threads:
        try:
            n = int(threads)
        except ValueError:
            print(f"aclab: error: ACLAB_THREADS={threads!r} is not an integer", file=sys.stderr)
            return 2
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=n):
            return run(cfg)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
