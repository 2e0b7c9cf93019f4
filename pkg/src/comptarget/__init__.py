"""Learn, evaluate and explain comprehensible targeting policies from experiments."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    Atom,
    Clause,
    ClauseUniverse,
    ColumnKind,
    CovariateTable,
    DataError,
    LogicOp,
    ProfitParams,
    RctDataset,
    SentencePolicy,
    StructuralError,
    UniverseConfig,
    build_universe,
    eval_sentence,
    parse_sentence,
    render_sentence,
)
from .profit import ipw_profit, omega_weights, oracle_profit, policy_loss  # noqa: E402
from .search import BudgetExceeded, brute_force, greedy, search_space_size  # noqa: E402

__all__ = [
    "Atom",
    "BudgetExceeded",
    "Clause",
    "ClauseUniverse",
    "ColumnKind",
    "CovariateTable",
    "DataError",
    "LogicOp",
    "ProfitParams",
    "RctDataset",
    "SentencePolicy",
    "StructuralError",
    "UniverseConfig",
    "brute_force",
    "build_universe",
    "eval_sentence",
    "greedy",
    "ipw_profit",
    "omega_weights",
    "oracle_profit",
    "parse_sentence",
    "policy_loss",
    "render_sentence",
    "search_space_size",
]
