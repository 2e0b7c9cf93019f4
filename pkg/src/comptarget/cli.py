"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 search
refused by the candidate budget.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import yaml

from .core import DataError, ProfitParams, StructuralError, UniverseConfig, build_universe, eval_sentence, parse_sentence, render_sentence
from .dataio import write_dataset_csv
from .expost import load_external_policy, project_down, save_policy
from .pipeline import ConfigError, RunConfig, StageError, load_dataset, run_pipeline, write_bundle
from .profit import ipw_profit
from .search import BudgetExceeded, search, search_space_size
from .stats import analytic_se, bootstrap_ci, estimate_alpha_gamma, greedy_guarantee
from .synth import SyntheticSpec, generate
from .treemap import sentence_to_tree

EXIT_CONFIG, EXIT_DATA, EXIT_BUDGET = 2, 3, 4


def _common(p: argparse.ArgumentParser, search_opts: bool = False) -> None:
    p.add_argument("--config", help="YAML/JSON run configuration")
    p.add_argument("--data", help="dataset CSV")
    p.add_argument("--e", type=float, help="constant propensity (instead of an 'e' column)")
    p.add_argument("--propensity", help="name of the propensity column")
    p.add_argument("--margin", type=float, help="profit margin m")
    p.add_argument("--cost", type=float, help="treatment cost c")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    if search_opts:
        p.add_argument("--l", type=int, action="append", help="number of clauses (repeatable)")
        p.add_argument("--algo", choices=("greedy", "brute"))
        p.add_argument("--max-candidates", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="comptarget", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="draw a synthetic experiment")
    p.add_argument("--config", required=True, help="synthetic spec (YAML/JSON)")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="CSV file to write")

    p = sub.add_parser("clauses", help="list the clause universe")
    _common(p)

    p = sub.add_parser("optimize", help="direct sentence search")
    _common(p, search_opts=True)

    p = sub.add_parser("project", help="project a black-box policy onto a sentence")
    _common(p, search_opts=True)
    p.add_argument("--policy", required=True, help="black-box policy CSV (header 'd')")

    p = sub.add_parser("evaluate", help="IPW profit and bootstrap CI of a policy")
    _common(p)
    p.add_argument("--policy", help="policy CSV (header 'd')")
    p.add_argument("--sentence", help="sentence text to evaluate instead of a file")
    p.add_argument("--boot", type=int, default=1000)
    p.add_argument("--level", type=float, default=0.95)

    p = sub.add_parser("tree", help="export a sentence as a decision tree")
    _common(p)
    p.add_argument("--sentence", required=True)
    p.add_argument("--format", choices=("text", "dot", "json"), default="text")

    p = sub.add_parser("bounds", help="greedy worst-case guarantee")
    _common(p, search_opts=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float)

    p = sub.add_parser("run", help="full cost-of-explanation pipeline")
    _common(p, search_opts=True)
    p.add_argument("--boot", type=int)
    p.add_argument("--blackbox", help="'knn', 'oracle', 'none' or a policy CSV")
    return parser


def _run_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {
        "data": getattr(args, "data", None),
        "e": getattr(args, "e", None),
        "propensity": getattr(args, "propensity", None),
        "m": getattr(args, "margin", None),
        "c": getattr(args, "cost", None),
        "seed": getattr(args, "seed", None),
        "out": getattr(args, "out", None),
        "algorithm": getattr(args, "algo", None),
        "max_candidates": getattr(args, "max_candidates", None),
        "boot": getattr(args, "boot", None),
        "blackbox": getattr(args, "blackbox", None),
    }
    if getattr(args, "l", None):
        overrides["l_values"] = tuple(args.l)
    cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    if cfg.data is not None:
        cfg.synthetic = None
    if cfg.data is not None and cfg.propensity is None and cfg.e is None:
        cfg.propensity = "e"
    return cfg


def _emit(obj, out: Optional[str], name: str) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / name).write_text(text + "\n", encoding="utf-8")
    print(text)


def _load(cfg: RunConfig):
    cfg.validate()
    data = load_dataset(cfg)
    universe = build_universe(data.covariates, UniverseConfig(cfg.zero_share_threshold))
    return data, universe, ProfitParams(cfg.m, cfg.c)


def cmd_generate(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if isinstance(raw, dict) and "synthetic" in raw:
        raw = raw["synthetic"]
    spec = SyntheticSpec.from_dict(raw)
    if args.n is not None:
        spec = spec.with_n(args.n)
    if args.seed is not None:
        spec = spec.with_seed(args.seed)
    data = generate(spec)
    write_dataset_csv(data, args.out)
    print(f"wrote {data.n} rows to {args.out}")
    return 0


def cmd_clauses(args) -> int:
    cfg = _run_config(args)
    data, universe, _ = _load(cfg)
    _emit({"k": universe.k, "n": data.n, "clauses": universe.describe()}, args.out, "clauses.json")
    return 0


def cmd_optimize(args) -> int:
    cfg = _run_config(args)
    data, universe, params = _load(cfg)
    results = []
    for l in cfg.l_values:
        res = search(data, params, universe, l, cfg.algorithm, cfg.max_candidates)
        rec = res.to_dict(universe)
        rec["evaluations_formula"] = search_space_size(universe.k, l, cfg.algorithm)
        rec["evaluations_published_greedy"] = search_space_size(universe.k, l, "greedy-published")
        results.append(rec)
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            save_policy(Path(args.out) / f"policy_l{l}.csv", eval_sentence(res.best, universe))
    _emit(results, args.out, "optimize.json")
    return 0


def cmd_project(args) -> int:
    cfg = _run_config(args)
    data, universe, params = _load(cfg)
    bb = load_external_policy(args.policy, data.n)
    out = []
    for l in cfg.l_values:
        proj = project_down(data, params, bb, universe, l, cfg.algorithm, cfg.max_candidates)
        out.append(
            {
                "l": l,
                "sentence": render_sentence(proj.policy, universe),
                "loss": proj.loss,
                "agreement": proj.agreement,
                "profit_mean": proj.profit.mean,
                "blackbox_profit_mean": ipw_profit(data, params, bb.assignment).mean,
            }
        )
    _emit(out, args.out, "project.json")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _run_config(args)
    data, universe, params = _load(cfg)
    if args.sentence:
        d = eval_sentence(parse_sentence(args.sentence, universe), universe)
    elif args.policy:
        d = load_external_policy(args.policy, data.n).assignment
    else:
        raise ConfigError("evaluate needs --policy or --sentence")
    report = ipw_profit(data, params, d)
    ci = bootstrap_ci(data, params, d, B=args.boot, level=args.level, seed=cfg.seed)
    rec = report.to_record("evaluated", analytic_se(data, params, d))
    rec.update({"bootstrap": ci.to_dict(), "targeting_pct": float(d.mean()) * 100})
    _emit(rec, args.out, "evaluate.json")
    return 0


def cmd_tree(args) -> int:
    cfg = _run_config(args)
    _, universe, _ = _load(cfg)
    tree = sentence_to_tree(parse_sentence(args.sentence, universe))
    if args.format == "text":
        print(tree.to_text(universe), end="")
    elif args.format == "dot":
        print(tree.to_dot(universe), end="")
    else:
        print(tree.to_json(universe))
    return 0


def cmd_bounds(args) -> int:
    if args.alpha is not None or args.gamma is not None:
        if args.alpha is None or args.gamma is None:
            raise ConfigError("give both --alpha and --gamma")
        _emit({"alpha": args.alpha, "gamma": args.gamma, "guarantee": greedy_guarantee(args.alpha, args.gamma)}, None, "")
        return 0
    cfg = _run_config(args)
    data, universe, params = _load(cfg)
    l = max(cfg.l_values)
    res = search(data, params, universe, l, "greedy")
    est = estimate_alpha_gamma(data, params, universe, res).to_dict()
    est["sentence"] = render_sentence(res.best, universe)
    _emit(est, args.out, "bounds.json")
    return 0


def cmd_run(args) -> int:
    cfg = _run_config(args)
    bundle = run_pipeline(cfg)
    out = write_bundle(bundle, cfg.out)
    print(f"report bundle written to {out}")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "clauses": cmd_clauses,
    "optimize": cmd_optimize,
    "project": cmd_project,
    "evaluate": cmd_evaluate,
    "tree": cmd_tree,
    "bounds": cmd_bounds,
    "run": cmd_run,
}


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        return _exit_code(exc.cause)
    if isinstance(exc, BudgetExceeded):
        return EXIT_BUDGET
    if isinstance(exc, (ConfigError, StructuralError, ValueError)) and not isinstance(exc, DataError):
        return EXIT_CONFIG
    if isinstance(exc, (DataError, OSError)):
        return EXIT_DATA
    return 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DataError, StructuralError, BudgetExceeded, StageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    raise SystemExit(main())
