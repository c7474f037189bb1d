"""Command-line entry point: ``qualitymine <command> [options]``.

Exit status is 0 on success, 1 when a stage fails, 2 for configuration or
usage errors and 3 when ``reproduce-paper`` finds a cell out of tolerance.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

from . import bundled
from .data import split_train_test
from .doe import build_ccf_design, design_from_csv, design_to_csv, fit_response_surface, predict_mlr
from .ensembles import (TrainConfig, fit_baseline, fit_boosted_trees, fit_random_forest, load_model,
                        model_summary, predict_model, save_model)
from .errors import ConfigError, QualityMineError
from .pipeline import (BUNDLED_PREFIX, OUTPUT_ENV, PipelineConfig, PipelineError, RunReport,
                       _design_section, _levels_from_csv, _read_rankings, _risk_block,
                       _stage_seed, _surface_sections, dump_csv, generate_synthetic, load_config,
                       prepare_dataset, reproduce_paper, run_pipeline)
from .screening import OverrideRule, apply_overrides, screen_predictors, vote_rankings

EXIT_OK, EXIT_STAGE, EXIT_CONFIG, EXIT_ACCEPTANCE = 0, 1, 2, 3

PAPER_CONFIG = BUNDLED_PREFIX + "paper_config.json"


def _out_dir(args):
    return args.out or os.environ.get(OUTPUT_ENV)


def _emit(report: RunReport, args, extra_files=None):
    """Print the report and, when an output directory is set, write it there."""
    out = _out_dir(args)
    if out:
        report.write(out)
        for name, text in (extra_files or {}).items():
            Path(out, name).write_text(text, encoding="utf-8")
    sys.stdout.write(report.to_json() if args.format == "structured" else report.to_text())


def _config(args, **defaults) -> PipelineConfig:
    """Pipeline config from ``--config`` (if any) with flag overrides applied."""
    raw = {}
    if args.config:
        base = load_config(args.config)
        raw = {k: v for k, v in asdict(base).items() if k not in ("output_dir",)}
    for k, v in defaults.items():
        if v is not None:
            raw[k] = v
    if getattr(args, "input", None):
        raw.pop("synthetic", None)
        raw["input"] = args.input
        raw["base_dir"] = "."
        if getattr(args, "response", None):
            raw["response"] = args.response
        if getattr(args, "ignore", None):
            raw["schema"] = {n: "ignored" for n in args.ignore}
    if args.seed is not None:
        raw["seed"] = args.seed
    if "input" not in raw and "synthetic" not in raw:
        raise ConfigError("give --input or --config")
    return load_config(raw)


def _cmd_pipeline(args):
    cfg = load_config(args.config or PAPER_CONFIG, seed=args.seed)
    out = args.out or os.environ.get(OUTPUT_ENV) or cfg.path(cfg.output_dir)
    try:
        report = run_pipeline(cfg, out_dir=out, n_jobs=args.jobs)
    except PipelineError as exc:
        sys.stdout.write(exc.report.to_json() if args.format == "structured" else exc.report.to_text())
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    sys.stdout.write(report.to_json() if args.format == "structured" else report.to_text())
    return EXIT_OK


def _split(cfg, data):
    return split_train_test(data, cfg.test_fraction, _stage_seed(cfg.seed, "split"))


def _repro(cfg):
    return {"seed": cfg.seed, "config_digest": cfg.digest(), "toolkit_version": _version()}


def _version():
    from . import __version__
    return __version__


def _cmd_screen(args):
    # screening alone keeps any k; final_count only constrains the full flow
    cfg = _config(args, screening={"k": args.k, "n_trees": args.trees} if args.k else None,
                  final_count=1)
    report = RunReport("screen", reproducibility=_repro(cfg))
    data = prepare_dataset(cfg, report.sections)
    sc = cfg.screening
    conf = TrainConfig.forest(n_trees=int(sc.get("n_trees", 200)), seed=_stage_seed(cfg.seed, "screening"))
    res = screen_predictors(data, int(sc["k"]), config=conf, n_jobs=args.jobs)
    report.sections["screening"] = {"k": int(sc["k"]), "n_inputs": len(data.input_names),
                                    "ranking": [[n, v] for n, v in res.ranking.entries]}
    _emit(report, args)
    return EXIT_OK


def _cmd_train(args):
    cfg = _config(args)
    report = RunReport("train", reproducibility=_repro(cfg))
    data = prepare_dataset(cfg, report.sections)
    train, test = _split(cfg, data)
    report.sections["split"] = {"n_train": train.n_rows, "n_test": test.n_rows,
                                "test_fraction": cfg.test_fraction}
    if args.model == "forest":
        model = fit_random_forest(train, TrainConfig.forest(
            **{"seed": _stage_seed(cfg.seed, "forest"), **cfg.forest}), n_jobs=args.jobs)
    elif args.model == "boosted":
        model = fit_boosted_trees(train, TrainConfig.boosting(
            **{"seed": _stage_seed(cfg.seed, "boosting"), **cfg.boosting}))
    else:
        model = fit_baseline(train, args.model, cfg.baselines.get(args.model, {}))
    sec = {"risk": _risk_block(model, train, test)}
    if args.model in ("forest", "boosted"):
        sec.update({k: v for k, v in model_summary(model).items() if k != "kind"})
    report.sections["models"] = {args.model: sec}
    extra = {}
    if args.model in ("forest", "boosted"):
        text = save_model(model, args.save)
        extra["model.json"] = text
    _emit(report, args, extra)
    return EXIT_OK


def _parse_override(text):
    parts = text.split(":", 2)
    if len(parts) != 3:
        raise ConfigError(f"override {text!r} must look like REMOVE:INSERT:JUSTIFICATION")
    return OverrideRule(*[p.strip() for p in parts])


def _cmd_vote(args):
    cfg = load_config(args.config) if args.config else None
    source = args.rankings or (cfg.vote.get("rankings") if cfg else None)
    if not source:
        raise ConfigError("give --rankings or a config with vote.rankings")
    reader = cfg or PipelineConfig(input=source, base_dir=".")
    columns = args.columns or (cfg.vote.get("columns") if cfg else None)
    lists = _read_rankings(reader, source, columns)
    m = args.m or (int(cfg.vote.get("m", 4)) if cfg else 4)
    voted = vote_rankings(list(lists.values()), m, list(lists))
    if args.override:
        rules = [_parse_override(t) for t in args.override]
    elif cfg:
        rules = [OverrideRule(**r) for r in cfg.overrides]
    else:
        rules = []
    final_count = args.final_count or (cfg.final_count if cfg else 3)
    report = RunReport("vote", reproducibility={"seed": None, "config_digest": cfg.digest() if cfg else None,
                                                "toolkit_version": _version()})
    report.sections["vote"] = {"m": m, "source": source,
                               "rankings": {k: list(v)[:m] for k, v in lists.items()},
                               "voted": list(voted.variables), "provenance": voted.provenance}
    report.sections["overrides"] = {"rules": [asdict(r) for r in rules], "final_count": final_count,
                                    "factors": apply_overrides(voted, rules, final_count)}
    _emit(report, args)
    return EXIT_OK


def _read(ref):
    if ref.startswith(BUNDLED_PREFIX):
        return bundled.read_text(ref[len(BUNDLED_PREFIX):])
    try:
        with open(ref, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {ref}: {exc.strerror}") from None


def _cmd_doe_gen(args):
    factors = _levels_from_csv(_read(args.levels))
    design = build_ccf_design(factors, args.n_center)
    text = design_to_csv(design)
    report = RunReport("doe-gen", reproducibility={"seed": None, "config_digest": None,
                                                   "toolkit_version": _version()})
    report.sections["design"] = _design_section(design, None)
    out = _out_dir(args)
    if out:
        report.write(out)
        Path(out, "design.csv").write_text(text, encoding="utf-8")
    if args.format == "structured":
        sys.stdout.write(report.to_json())
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_doe_fit(args):
    text = _read(args.design)
    factors = _levels_from_csv(_read(args.levels)) if args.levels else None
    design, y = design_from_csv(text, factors, args.response)
    if y is None:
        raise ConfigError("the design file has no response column; name it with --response")
    fit = fit_response_surface(design, y)
    report = RunReport("doe-fit", reproducibility={"seed": None, "config_digest": None,
                                                   "toolkit_version": _version()})
    report.sections["design"] = _design_section(design, y)
    report.sections["surface"], report.sections["optimum"] = _surface_sections(fit, None)
    _emit(report, args)
    return EXIT_OK


def _parse_settings(pairs):
    out = {}
    for p in pairs:
        name, sep, value = p.partition("=")
        if not sep:
            raise ConfigError(f"setting {p!r} must look like NAME=VALUE")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"setting {p!r} has a non-numeric value") from None
    return out


def _cmd_predict(args):
    if args.mlr:
        value = predict_mlr(*args.mlr)
        what = "equation"
    elif args.model:
        value = predict_model(load_model(args.model), _parse_settings(args.set or []))
        what = args.model
    else:
        raise ConfigError("give --model or --mlr")
    if args.format == "structured":
        print(json.dumps({"model": what, "prediction": float(value)}, sort_keys=True))
    else:
        print(f"{float(value):.6f}")
    return EXIT_OK


def _cmd_synth(args):
    seed = 0 if args.seed is None else args.seed
    d = generate_synthetic(args.rows, args.noise_vars, args.noise_sd, seed)
    names = d.column_names
    rows = zip(*(d[n].values for n in names))
    text = dump_csv([[repr(float(v)) for v in row] for row in rows], names)
    out = _out_dir(args)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        Path(out, "synthetic.csv").write_text(text, encoding="utf-8")
        print(f"wrote {Path(out, 'synthetic.csv')}", file=sys.stderr)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_reproduce(args):
    report = reproduce_paper(_read(args.design) if args.design else None)
    out = _out_dir(args)
    if out:
        report.write(out)
    if args.format == "structured":
        sys.stdout.write(report.to_json())
    else:
        sys.stdout.write(report.to_text())
    if not report.ok:
        print(f"error: {report.error}", file=sys.stderr)
        return EXIT_ACCEPTANCE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (path or bundled:<file>)")
    common.add_argument("--seed", type=int, help="replaces the configured seed")
    common.add_argument("--out", help=f"output directory (else ${OUTPUT_ENV}, else the config)")
    common.add_argument("--format", choices=("text", "structured"), default="text")
    common.add_argument("-v", "--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--input", help="CSV file; replaces the configured data source")
    data.add_argument("--response", help="response column of --input")
    data.add_argument("--ignore", nargs="*", help="columns of --input to ignore")
    data.add_argument("--jobs", type=int, default=1, help="forest worker threads")

    p = argparse.ArgumentParser(prog="qualitymine", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("pipeline", parents=[common], help="run every stage from a config")
    c.add_argument("--jobs", type=int, default=1)
    c.set_defaults(func=_cmd_pipeline)

    c = sub.add_parser("screen", parents=[common, data], help="rank inputs with a screening forest")
    c.add_argument("--k", type=int)
    c.add_argument("--trees", type=int, default=200)
    c.set_defaults(func=_cmd_screen)

    c = sub.add_parser("train", parents=[common, data], help="fit one model and report its risk")
    c.add_argument("--model", choices=("forest", "boosted", "knn", "ols"), default="forest")
    c.add_argument("--save", help="write the fitted ensemble to this JSON file")
    c.set_defaults(func=_cmd_train)

    c = sub.add_parser("vote", parents=[common], help="vote on rank lists and apply overrides")
    c.add_argument("--rankings", help="CSV with one rank list per column")
    c.add_argument("--columns", nargs="*")
    c.add_argument("--m", type=int)
    c.add_argument("--final-count", type=int)
    c.add_argument("--override", action="append", metavar="REMOVE:INSERT:WHY")
    c.set_defaults(func=_cmd_vote)

    c = sub.add_parser("doe-gen", parents=[common], help="generate the blocked face-centered design")
    c.add_argument("--levels", default=BUNDLED_PREFIX + "factor_levels.csv")
    c.add_argument("--n-center", type=int, default=3)
    c.set_defaults(func=_cmd_doe_gen)

    c = sub.add_parser("doe-fit", parents=[common], help="fit a design file: effects, ANOVA, optimum")
    c.add_argument("--design", default=BUNDLED_PREFIX + bundled.DESIGN_FILE)
    c.add_argument("--levels")
    c.add_argument("--response", default=bundled.RESPONSE_NAME)
    c.set_defaults(func=_cmd_doe_fit)

    c = sub.add_parser("predict", parents=[common], help="predict from a saved model or the equation")
    c.add_argument("--model", help="saved model JSON")
    c.add_argument("--set", nargs="*", metavar="NAME=VALUE")
    c.add_argument("--mlr", nargs=3, type=float, metavar=("PF", "MP", "PW"))
    c.set_defaults(func=_cmd_predict)

    c = sub.add_parser("synth", parents=[common], help="write a synthetic production table")
    c.add_argument("--rows", type=int, default=2000)
    c.add_argument("--noise-vars", type=int, default=68)
    c.add_argument("--noise-sd", type=float, default=0.01)
    c.set_defaults(func=_cmd_synth)

    c = sub.add_parser("reproduce-paper", parents=[common],
                       help="check the bundled design results against the published tables")
    c.add_argument("--design", help="design CSV to check instead of the bundled one")
    c.set_defaults(func=_cmd_reproduce)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QualityMineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
