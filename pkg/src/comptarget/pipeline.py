"""End-to-end cost-of-explanation run and its report bundle."""
from __future__ import annotations

import csv
import json
import platform
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

import numpy as np
import yaml

from . import __version__
from .core import (
    DataError,
    ProfitParams,
    RctDataset,
    UniverseConfig,
    build_universe,
    eval_sentence,
    render_sentence,
)
from .dataio import IngestConfig, ingest_csv
from .expost import BlackBoxPolicy, cost_of_explanation, knn_blackbox, load_external_policy, project_down
from .profit import blanket_policy, ipw_profit, oracle_policy
from .search import DEFAULT_MAX_CANDIDATES, search, search_space_size
from .stats import analytic_se, balance_diagnostics, bootstrap_ci, estimate_alpha_gamma
from .synth import SyntheticSpec, ate_estimate, generate
from .treemap import sentence_to_tree


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")


@contextmanager
def stage(name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


@dataclass
class RunConfig:
    data: Optional[str] = None
    synthetic: Optional[Mapping[str, Any]] = None
    treatment: str = "W"
    outcome: str = "Y"
    propensity: Optional[str] = None
    e: Optional[float] = None
    kinds: Mapping[str, str] = field(default_factory=dict)
    drop: Sequence[str] = ("id",)
    trim_cap: Optional[float] = None
    m: float = 0.45
    c: float = 0.37
    l_values: Sequence[int] = (1, 2, 3)
    algorithm: str = "greedy"
    expost_method: Optional[str] = None
    blackbox: str = "knn"
    k_neighbors: int = 50
    splits: Sequence[float] = (0.4, 0.4, 0.2)
    seed: int = 0
    boot: int = 1000
    level: float = 0.95
    zero_share_threshold: float = 0.5
    max_candidates: int = DEFAULT_MAX_CANDIDATES
    out: str = "report"

    def validate(self) -> None:
        if (self.data is None) == (self.synthetic is None):
            raise ConfigError("set exactly one of 'data' and 'synthetic'")
        if self.data is not None and (self.propensity is None) == (self.e is None):
            raise ConfigError("set exactly one of 'propensity' (column) and 'e' (constant)")
        if len(self.splits) != 3 or any(f <= 0 for f in self.splits) or abs(sum(self.splits) - 1) > 1e-9:
            raise ConfigError(f"splits must be three positive fractions summing to 1, got {list(self.splits)}")
        if not self.l_values or any(int(v) < 1 for v in self.l_values):
            raise ConfigError("l_values must be positive integers")
        if self.algorithm not in ("greedy", "brute"):
            raise ConfigError(f"algorithm must be greedy or brute, got {self.algorithm!r}")
        if self.expost_method not in (None, "greedy", "brute"):
            raise ConfigError(f"expost_method must be greedy or brute, got {self.expost_method!r}")
        if self.boot < 2:
            raise ConfigError("boot must be >= 2")
        if self.m <= 0 or self.c < 0:
            raise ConfigError("need m > 0 and c >= 0")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        cfg = cls(**data)
        cfg.l_values = tuple(int(v) for v in cfg.l_values)
        cfg.splits = tuple(float(v) for v in cfg.splits)
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = yaml.safe_load(fh) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, Mapping):
            raise ConfigError("config file must hold a mapping")
        return cls.from_mapping(raw)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["l_values"] = list(self.l_values)
        out["splits"] = list(self.splits)
        out["drop"] = list(self.drop)
        out["kinds"] = dict(self.kinds)
        return out


def load_dataset(cfg: RunConfig) -> RctDataset:
    if cfg.synthetic is not None:
        return generate(SyntheticSpec.from_dict(cfg.synthetic))
    return ingest_csv(
        cfg.data,
        IngestConfig(
            treatment=cfg.treatment,
            outcome=cfg.outcome,
            propensity=cfg.propensity,
            e=cfg.e,
            kinds=cfg.kinds,
            drop=tuple(cfg.drop),
            trim_cap=cfg.trim_cap,
        ),
    )


def split_indices(n: int, fractions: Sequence[float], seed: int) -> list[np.ndarray]:
    """Seeded permutation cut into consecutive blocks; each block is sorted."""
    perm = np.random.default_rng(seed).permutation(n)
    cuts = np.floor(np.cumsum(fractions)[:-1] * n).astype(int)
    return [np.sort(block) for block in np.split(perm, cuts)]


def _profit_record(policy_id, data, params, d, split, stage_name, seed, cfg) -> dict:
    report = ipw_profit(data, params, d)
    rec = report.to_record(policy_id, analytic_se(data, params, d) if data.n >= 2 else None)
    ci = bootstrap_ci(data, params, d, B=cfg.boot, level=cfg.level, seed=seed)
    rec.update(
        {
            "ci_lower": ci.lower,
            "ci_upper": ci.upper,
            "boot_se": ci.se,
            "boot_B": ci.B,
            "level": ci.level,
            "targeting_pct": float(np.mean(d)) * 100.0,
            "stage": stage_name,
            "seed": seed,
            "split": split,
        }
    )
    return rec


def run_pipeline(cfg: RunConfig) -> dict:
    """Execute every stage and return the report bundle as a dict."""
    cfg.validate()
    params = ProfitParams(cfg.m, cfg.c)
    seeds = {
        "split": cfg.seed,
        "bootstrap": cfg.seed + 1,
    }
    with stage("load"):
        data = load_dataset(cfg)
    with stage("split"):
        a_idx, b_idx, c_idx = split_indices(data.n, cfg.splits, seeds["split"])
        train_idx = np.sort(np.concatenate([a_idx, b_idx]))
        train, fit_a, proj_b, evaluation = (data.take(i) for i in (train_idx, a_idx, b_idx, c_idx))
    with stage("universe"):
        universe = build_universe(train.covariates, UniverseConfig(cfg.zero_share_threshold))
        uni_b = universe.bind(proj_b.covariates)
        uni_c = universe.bind(evaluation.covariates)
    with stage("blackbox"):
        bb_b, bb_c = _blackbox(cfg, data, fit_a, proj_b, evaluation, params, b_idx, c_idx)

    boot_seed = seeds["bootstrap"]
    profits: list[dict] = []
    direct_rows, expost_rows, coe_rows, targeting_rows = [], [], [], []
    trees: dict[str, dict] = {}
    direct_results = {}

    with stage("baselines"):
        profits.append(
            _profit_record("blanket", evaluation, params, blanket_policy(evaluation.n), "C", "baselines", boot_seed, cfg)
        )
        if bb_c is not None:
            profits.append(
                _profit_record(
                    f"blackbox:{bb_c.provenance}", evaluation, params, bb_c.assignment, "C", "baselines", boot_seed, cfg
                )
            )
    blanket_rep = ipw_profit(evaluation, params, blanket_policy(evaluation.n))
    bb_rep = ipw_profit(evaluation, params, bb_c.assignment) if bb_c is not None else None

    for l in cfg.l_values:
        with stage(f"direct l={l}"):
            res = search(train, params, universe, l, cfg.algorithm, cfg.max_candidates)
            direct_results[l] = res
            d_c = eval_sentence(res.best, uni_c)
            rec = _profit_record(f"direct l={l}", evaluation, params, d_c, "C", "direct", boot_seed, cfg)
            rec.update(
                {
                    "l": l,
                    "algorithm": res.algorithm,
                    "sentence": render_sentence(res.best, universe),
                    "in_sample_total": res.best_profit,
                    "in_sample_mean": res.best_mean,
                    "in_sample_split": "A+B",
                    "evaluations": res.evaluations,
                    "evaluations_formula": search_space_size(universe.k, l, res.algorithm),
                    "evaluations_published_greedy": search_space_size(universe.k, l, "greedy-published") if l > 1 else None,
                    "redundant_clauses": res.best.reuses_clause,
                    "monotone": res.monotone,
                }
            )
            direct_rows.append(rec)
            tree = sentence_to_tree(res.best)
            trees[f"direct_l{l}"] = {
                "text": tree.to_text(universe),
                "dot": tree.to_dot(universe),
                "nodes": tree.to_records(universe),
                "depth": tree.depth,
            }
        if bb_b is not None:
            with stage(f"expost l={l}"):
                method = cfg.expost_method or cfg.algorithm
                proj = project_down(proj_b, params, bb_b, uni_b, l, method, cfg.max_candidates)
                d_c_ex = eval_sentence(proj.policy, uni_c)
                rec_ex = _profit_record(f"expost l={l}", evaluation, params, d_c_ex, "C", "expost", boot_seed, cfg)
                rec_ex.update(
                    {
                        "l": l,
                        "algorithm": method,
                        "sentence": render_sentence(proj.policy, universe),
                        "projection_loss": proj.loss,
                        "projection_agreement": proj.agreement,
                        "projection_split": "B",
                        "in_sample_total_B": proj.profit.total,
                    }
                )
                expost_rows.append(rec_ex)
        with stage(f"cost l={l}"):
            direct_rep = ipw_profit(evaluation, params, d_c)
            row = {
                "l": l,
                "direct_mean": direct_rep.mean,
                "coe_vs_blanket_direct": cost_of_explanation(blanket_rep, direct_rep),
                "stage": "cost",
                "seed": boot_seed,
                "split": "C",
            }
            if bb_rep is not None:
                ex_rep = ipw_profit(evaluation, params, d_c_ex)
                row.update(
                    {
                        "blackbox_mean": bb_rep.mean,
                        "expost_mean": ex_rep.mean,
                        "coe_direct": cost_of_explanation(bb_rep, direct_rep),
                        "coe_expost": cost_of_explanation(bb_rep, ex_rep),
                    }
                )
            coe_rows.append(row)
            t_row = {"l": l, "direct_pct": float(np.mean(d_c)) * 100, "split": "C", "stage": "targeting", "seed": cfg.seed}
            if bb_c is not None:
                t_row["expost_pct"] = float(np.mean(d_c_ex)) * 100
                t_row["blackbox_pct"] = float(np.mean(bb_c.assignment)) * 100
            targeting_rows.append(t_row)

    with stage("bounds"):
        l_max = max(cfg.l_values)
        bound = estimate_alpha_gamma(train, params, universe, direct_results[l_max]).to_dict()
        bound.update({"l": l_max, "stage": "bounds", "split": "A+B", "seed": cfg.seed})

    with stage("diagnostics"):
        ate, ate_se = ate_estimate(data)
        balance = balance_diagnostics(data)

    return {
        "version": __version__,
        "config": cfg.to_dict(),
        "seeds": seeds,
        "splits": {"A": len(a_idx), "B": len(b_idx), "C": len(c_idx), "n": data.n},
        "universe": {"k": universe.k, "clauses": universe.describe(), "fit_split": "A+B"},
        "blackbox": None if bb_c is None else {"provenance": bb_c.provenance, "fit_split": "A"},
        "profits": profits + direct_rows + expost_rows,
        "direct": [{"l": l, **direct_results[l].to_dict(universe)} for l in cfg.l_values],
        "cost_of_explanation": coe_rows,
        "targeting": targeting_rows,
        "trees": trees,
        "bounds": bound,
        "diagnostics": {"ate": ate, "ate_se": ate_se, "balance": balance, "split": "all"},
    }


def _blackbox(cfg, data, fit_a, proj_b, evaluation, params, b_idx, c_idx):
    kind = cfg.blackbox
    if kind in (None, "", "none"):
        return None, None
    if kind == "knn":
        return (
            knn_blackbox(fit_a, proj_b, params, cfg.k_neighbors),
            knn_blackbox(fit_a, evaluation, params, cfg.k_neighbors),
        )
    if kind == "oracle":
        if not data.has_potential:
            raise DataError("oracle black box needs potential outcomes")
        full = BlackBoxPolicy(oracle_policy(data, params), "oracle")
        return full.take(b_idx), full.take(c_idx)
    full = load_external_policy(kind, data.n)
    return full.take(b_idx), full.take(c_idx)


_TABLE_COLUMNS = {
    "table_profits.csv": ["policy_id", "n", "mean", "se", "ci_lower", "ci_upper", "targeting_pct", "stage", "split", "seed"],
    "table_cost_of_explanation.csv": [
        "l", "blackbox_mean", "direct_mean", "expost_mean", "coe_direct", "coe_expost", "coe_vs_blanket_direct", "stage", "split", "seed",
    ],
    "series_targeting_by_l.csv": ["l", "direct_pct", "expost_pct", "blackbox_pct", "stage", "split", "seed"],
    "series_profit_by_l.csv": ["l", "policy_id", "in_sample_mean", "mean", "se", "ci_lower", "ci_upper", "stage", "split", "seed"],
}


def write_bundle(bundle: dict, out_dir) -> Path:
    """Write report.json, flat CSV tables and tree exports; timestamps go to metadata.json."""
    out = Path(out_dir)
    (out / "trees").mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(bundle, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
    by_l = [r for r in bundle["profits"] if r["policy_id"].startswith(("direct", "expost"))]
    tables = {
        "table_profits.csv": bundle["profits"],
        "table_cost_of_explanation.csv": bundle["cost_of_explanation"],
        "series_targeting_by_l.csv": bundle["targeting"],
        "series_profit_by_l.csv": by_l,
    }
    for name, rows in tables.items():
        _write_rows(out / name, _TABLE_COLUMNS[name], rows)
    for key, tree in bundle["trees"].items():
        (out / "trees" / f"{key}.txt").write_text(tree["text"], encoding="utf-8")
        (out / "trees" / f"{key}.dot").write_text(tree["dot"], encoding="utf-8")
    meta = {
        "created_unix": time.time(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "version": __version__,
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def _write_rows(path: Path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(["" if row.get(c) is None else _cell(row.get(c)) for c in columns])


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)
