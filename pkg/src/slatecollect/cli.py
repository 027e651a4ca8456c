"""Command-line entry point: ``slatecollect run | eval | report``.

Exit codes: 0 success, 2 configuration or usage error, 3 data error.  Every
failure prints a single line ``error[<CODE>]: <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config
from .evaluation import (
    Policy,
    ZeroPropensityError,
    best_empirical_policy,
    fixed_item_policy,
    ips_value,
    item_order,
    mapping_policy,
    per_slot_ips,
    slate_policy,
    uniform_policy,
)
from .logs import LogDataset, LogFormatError, LogMetadata, read_log, write_log
from .report import MissingResultsError, log_name, report_from_dir
from .runner import STOCHASTIC_LOGGING_KINDS, run_many

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


class CLIError(Exception):
    def __init__(self, code: str, message: str, status: int):
        self.code = code
        self.status = status
        super().__init__(message)


def _fail(exc: CLIError) -> int:
    message = " ".join(str(exc).split())
    print(f"error[{exc.code}]: {message}", file=sys.stderr)
    return exc.status


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def execute(config: ExperimentConfig, out_dir: Path, figures: bool = True) -> Path:
    """Run every strategy/replicate, write logs, then the report."""
    env = config.environment.build(config.seed)
    digest = config.digest

    def metadata_for(strategy, replicate):
        return LogMetadata(
            experiment_id=config.experiment_id,
            seed=strategy.seed if strategy.seed is not None else config.seed,
            config_digest=digest,
            extra={
                "strategy": strategy.label,
                "kind": strategy.kind,
                "replicate": replicate,
                "n": strategy.n,
                "propensities_exact": strategy.kind in STOCHASTIC_LOGGING_KINDS,
            },
        )

    comparison = run_many(
        env,
        config.strategies,
        config.horizon,
        config.replicates,
        seed=config.seed,
        log=True,
        log_prob_vector=config.log_prob_vector,
        max_workers=config.workers,
        metadata_for=metadata_for,
        windows=config.windows,
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "config.json", config.raw)
    _write_json(out_dir / "environment.json", env.to_dict())
    for summary, strategy in zip(comparison.summaries, config.strategies):
        for result in summary.results:
            write_log(result.log, out_dir / "logs" / log_name(strategy.label, result.replicate))
    report_from_dir(out_dir, figures=figures)
    return out_dir


def cmd_run(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config = config.with_seed(args.seed)
    except ConfigError as exc:
        raise CLIError("E_CONFIG", str(exc), EXIT_CONFIG) from None
    out_dir = config.resolve_output_dir(args.out)
    execute(config, out_dir, figures=not args.no_figures)
    print(f"wrote results to {out_dir}")
    print((out_dir / "report.txt").read_text(encoding="utf-8"), end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def parse_policy(spec: str, dataset: LogDataset) -> Policy:
    """Policy from a CLI spec.

    ``fixed:<item>``, ``slate:<a>,<b>,...``, ``best-empirical``, ``uniform``,
    or ``mapping:<file.json>`` holding ``{"<context>": <item>, ...}``.
    """
    kind, _, arg = spec.partition(":")
    if kind == "fixed" and arg:
        return fixed_item_policy(_item(arg))
    if kind == "slate" and arg:
        return slate_policy([_item(a) for a in arg.split(",")])
    if kind == "best-empirical":
        return best_empirical_policy(dataset)
    if kind == "uniform":
        items = set()
        for rec in dataset:
            items.update(rec.chosen_items)
            if rec.full_prob_vector is not None:
                items.update(rec.full_prob_vector)
        return uniform_policy(sorted(items, key=item_order))
    if kind == "mapping" and arg:
        try:
            raw = json.loads(Path(arg).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CLIError("E_CONFIG", f"cannot read policy mapping {arg}: {exc}", EXIT_CONFIG) from None
        if not isinstance(raw, dict):
            raise CLIError("E_CONFIG", f"policy mapping {arg} must be a JSON object", EXIT_CONFIG)
        return mapping_policy({_item(k): _item(v) if isinstance(v, str) else v for k, v in raw.items()}, name=f"mapping:{arg}")
    raise CLIError(
        "E_CONFIG",
        f"unknown policy spec {spec!r}; use fixed:<item>, slate:<items>, best-empirical, uniform or mapping:<file>",
        EXIT_CONFIG,
    )


def _item(text: str):
    try:
        return int(text)
    except ValueError:
        return text


def cmd_eval(args: argparse.Namespace) -> int:
    try:
        dataset = read_log(args.log)
    except OSError as exc:
        raise CLIError("E_DATA", f"cannot read log {args.log}: {exc.strerror}", EXIT_DATA) from None
    except LogFormatError as exc:
        code = "E_ZERO_PROPENSITY" if exc.zero_propensity else "E_DATA"
        raise CLIError(code, f"{args.log}: {exc}", EXIT_DATA) from None
    if len(dataset) == 0:
        raise CLIError("E_DATA", f"{args.log}: log holds no records", EXIT_DATA)
    policy = parse_policy(args.policy, dataset)
    estimator = args.estimator
    if estimator == "auto":
        estimator = "ips" if all(r.slate_size == 1 for r in dataset) else "per-slot"
    try:
        if estimator == "ips":
            est = ips_value(dataset, policy, slot=args.slot)
        else:
            est = per_slot_ips(dataset, policy)
    except ZeroPropensityError as exc:
        raise CLIError("E_ZERO_PROPENSITY", str(exc), EXIT_DATA) from None
    except (KeyError, ValueError) as exc:
        raise CLIError("E_DATA", str(exc), EXIT_DATA) from None
    out = {"log": str(args.log), "policy": policy.name, "estimator": estimator, **est.to_dict()}
    exact = dataset.metadata.extra.get("propensities_exact")
    if exact is False:
        out["warning"] = "logging strategy does not record exact selection probabilities; estimate is not unbiased"
    if est.heuristic:
        out["note"] = "per-slot flattening of slate logs is a heuristic and is biased for N > 1"
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def cmd_report(args: argparse.Namespace) -> int:
    result_dir = Path(args.result_dir or args.out or "")
    if not str(result_dir):
        raise CLIError("E_USAGE", "report needs a result directory (positional or --out)", EXIT_CONFIG)
    try:
        written = report_from_dir(result_dir, figures=not args.no_figures)
    except MissingResultsError as exc:
        raise CLIError("E_DATA", str(exc), EXIT_DATA) from None
    except ConfigError as exc:
        raise CLIError("E_CONFIG", f"{result_dir / 'config.json'}: {exc}", EXIT_CONFIG) from None
    except LogFormatError as exc:
        raise CLIError("E_DATA", str(exc), EXIT_DATA) from None
    print(written["text"].read_text(encoding="utf-8"), end="")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slatecollect",
        description="Simulate Thompson-sampling data collection, evaluate policies offline, report exposure statistics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the experiment described by a config file")
    p.add_argument("--config", required=True, help="experiment config (JSON)")
    p.add_argument("--out", help="output directory (default: config output_dir, then $SLATECOLLECT_OUT, then ./results)")
    p.add_argument("--seed", type=int, help="override the config's seed")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="estimate a policy's value from a log with inverse propensity scoring")
    p.add_argument("--log", required=True, help="JSON Lines log written by 'run'")
    p.add_argument("--policy", default="best-empirical", help="fixed:<item> | slate:<a,b> | best-empirical | uniform | mapping:<file>")
    p.add_argument("--estimator", choices=("auto", "ips", "per-slot"), default="auto")
    p.add_argument("--slot", type=int, default=0, help="slate position scored by the ips estimator")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="rebuild report tables, plot data and figures from a result directory")
    p.add_argument("result_dir", nargs="?", help="directory written by 'run'")
    p.add_argument("--out", help="same as the positional result directory")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CLIError as exc:
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
