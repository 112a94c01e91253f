"""Command line entry point: ``onlineltl {synth-reg,synth-cls,ratings,certify}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields

from .experiment import ConfigError, ExperimentConfig, coerce_value, read_config_file, run_experiment

log = logging.getLogger("onlineltl")

# flag name -> config key
_FLAGS = {
    "--seed": "seed",
    "--runs": "runs",
    "--t-train": "t_train",
    "--t-val": "t_val",
    "--t-test": "t_test",
    "--methods": "methods",
    "--lambda-grid": "lambda_grid",
    "--gamma-grid": "gamma_grid",
    "--out": "out",
    "--threads": "threads",
    "--eval-every": "eval_every",
    "--metric": "metric",
    "--bias-estimate": "bias_estimate",
    "--d": "d",
    "--n-train": "n_train",
    "--n-test": "n_test",
    "--task-mean": "task_mean",
    "--task-std": "task_std",
    "--snr": "snr",
    "--margin-threshold": "margin_threshold",
    "--logistic-scale": "logistic_scale",
    "--max-iters": "max_iters",
    "--gap-tolerance": "gap_tolerance",
}
_RATINGS_FLAGS = {"--data": "data", "--task": "ratings_task", "--threshold": "threshold"}


def _add_experiment_args(p: argparse.ArgumentParser, env: str) -> None:
    defaults = ExperimentConfig.defaults_for(env)
    p.add_argument("--config", help="flat 'key = value' config file or a run manifest.json; flags override it")
    flags = dict(_FLAGS, **(_RATINGS_FLAGS if env == "ratings" else {}))
    for flag, key in flags.items():
        p.add_argument(flag, dest=key, default=None, metavar=key.upper(),
                       help=f"(default: {getattr(defaults, key)!r})")


def parse_config(env: str, args: argparse.Namespace) -> ExperimentConfig:
    """Defaults for ``env`` < config file < command-line flags."""
    values = ExperimentConfig.defaults_for(env).to_dict()
    if getattr(args, "config", None):
        from_file = read_config_file(args.config)
        if from_file.get("environment", env) != env:
            raise ConfigError(f"config file is for environment {from_file['environment']!r}, not {env!r}")
        values.update(from_file)
    for f in fields(ExperimentConfig):
        raw = getattr(args, f.name, None)
        if raw is not None:
            values[f.name] = coerce_value(f.name, raw)
    values["environment"] = env
    return ExperimentConfig(**values).validate()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="onlineltl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for env, help_ in (
        ("synth-reg", "synthetic regression tasks, absolute loss"),
        ("synth-cls", "synthetic classification tasks, hinge loss"),
        ("ratings", "ratings CSV (task_id,x1..xp,rating), regression or classification"),
    ):
        _add_experiment_args(sub.add_parser(env, help=help_), env)
    cert = sub.add_parser("certify", help="check certificates and invariants on random instances")
    cert.add_argument("--instances", type=int, default=50)
    cert.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "certify":
        from .certify import run_all

        return 0 if run_all(args.instances, args.seed) else 1
    try:
        config = parse_config(args.command, args)
    except (ConfigError, OSError) as exc:
        parser.error(str(exc))
    log.info("running %s with %d repetition(s)", config.environment, config.runs)
    try:
        curves = run_experiment(config)
    except ConfigError as exc:
        parser.error(str(exc))
    for method, curve in curves.items():
        print(f"{method:12s} t={int(curve.t[-1]):4d}  mean_error={curve.mean_error[-1]:.4f}  "
              f"std={curve.std_error[-1]:.4f}")
    print(f"wrote {len(curves)} curve file(s) and manifest.json to {config.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
