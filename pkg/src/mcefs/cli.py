"""Run, resume and report metacognitive few-shot sentiment experiments.

Exit codes: 0 success, 1 usage or config error, 2 data error,
3 backend exhaustion or an incomplete run.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import types
import typing
from pathlib import Path

from .config import RunConfig
from .corpus import PUBLISHED_COUNTS, Corpus, corpus_stats, format_stats, load_corpus
from .errors import BackendError, ConfigError, DataError, MCeFSError
from .protocol import Templates, elicit_praises

log = logging.getLogger("mcefs")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BACKEND = 0, 1, 2, 3


def _add_config_flags(parser: argparse.ArgumentParser, only: set[str] | None = None) -> None:
    hints = typing.get_type_hints(RunConfig)
    group = parser.add_argument_group("config overrides (same names as config-file keys)")
    for f in dataclasses.fields(RunConfig):
        if only is not None and f.name not in only:
            continue
        flag = "--" + f.name.replace("_", "-")
        hint = hints[f.name]
        if typing.get_origin(hint) in (typing.Union, types.UnionType):
            hint = next(a for a in typing.get_args(hint) if a is not type(None))
        base = hint
        if typing.get_origin(base) is list:
            group.add_argument(flag, dest=f.name, nargs="+", type=typing.get_args(base)[0])
        elif base is bool:
            group.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction)
        else:
            group.add_argument(flag, dest=f.name, type=base)


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {f.name: getattr(args, f.name, None) for f in dataclasses.fields(RunConfig)}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if args.config:
        return RunConfig.load(args.config, **overrides)
    return RunConfig.from_dict(overrides)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mcefs", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a config file")
    run.add_argument("--config", help="YAML or JSON config file")
    _add_config_flags(run)

    res = sub.add_parser("resume", help="continue an interrupted run")
    res.add_argument("output_dir")
    res.add_argument("--config", help="refuse to resume unless this config matches the stored one")

    rep = sub.add_parser("report", help="print the comparison against published values")
    rep.add_argument("output_dir", nargs="?", help="run directory holding results.json")
    rep.add_argument("--results", help="explicit results.json path")
    rep.add_argument("--plot", help="also write a reinforcement bar chart to this PNG")

    st = sub.add_parser("stats", help="corpus counts vs the published split sizes")
    st.add_argument("--config")
    st.add_argument("--strict", action="store_true", help="exit 2 if counts differ")
    _add_config_flags(st, {"dataset", "train_path", "test_path"})

    el = sub.add_parser("elicit-praises", help="ask the model for a praise pool")
    el.add_argument("--config")
    el.add_argument("--seed", type=int, default=13)
    el.add_argument("--out", help="write the pool as JSON here")
    _add_config_flags(el, {
        "backend", "scripted_behavior", "scripted_script", "endpoint", "model", "temperature",
        "retry_budget", "per_minute_cap", "api_key_env", "timeout", "praise_n",
        "template_path", "cache", "cache_dir", "output_dir",
    })
    return p


def cmd_run(args) -> int:
    from .runner import run
    config = _config_from_args(args)
    report = run(config)
    print((Path(config.output_dir) / "report.txt").read_text(encoding="utf-8"), end="")
    return EXIT_OK if report.runs else EXIT_BACKEND


def cmd_resume(args) -> int:
    from .runner import resume
    config = RunConfig.load(args.config) if args.config else None
    resume(args.output_dir, config)
    print((Path(args.output_dir) / "report.txt").read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import compare_to_paper, plot_reinforcement, render_runs
    from .runner import load_report
    target = args.results or args.output_dir
    if not target:
        raise ConfigError("give a run directory or --results FILE")
    report = load_report(target)
    print(render_runs(report))
    print()
    print(compare_to_paper(report))
    if args.plot:
        print(f"\nwrote {plot_reinforcement(report, args.plot)}")
    return EXIT_OK


def cmd_stats(args) -> int:
    config = _config_from_args(args)
    if not (config.train_path and config.test_path):
        raise ConfigError("stats needs --train-path and --test-path")
    corpus = load_corpus(config.dataset, config.train_path, config.test_path)
    print(format_stats(corpus))
    stats = corpus_stats(corpus)
    expected = PUBLISHED_COUNTS[config.dataset]
    if args.strict and (stats.train_count, stats.test_count) != expected:
        return EXIT_DATA
    return EXIT_OK


def cmd_elicit(args) -> int:
    from .records import write_json
    from .runner import build_backend
    config = _config_from_args(args)
    templates = Templates.load(config.template_path)
    backend = build_backend(config, Corpus(config.dataset), templates)
    pool, turns = elicit_praises(backend, config.praise_n, args.seed, templates=templates)
    for i, praise in enumerate(pool.praises):
        print(f"{i}. {praise}")
    if args.out:
        write_json(args.out, {"pool": pool.to_record(),
                              "elicitation": [t.to_record() for t in turns]})
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "resume": cmd_resume,
    "report": cmd_report,
    "stats": cmd_stats,
    "elicit-praises": cmd_elicit,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except MCeFSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
