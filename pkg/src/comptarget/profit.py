"""Inverse-propensity profit estimation and simple reference policies."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DataError, ProfitParams, RctDataset


@dataclass(frozen=True)
class ProfitReport:
    """Per-row profit scores with their total and per-person mean."""

    per_row: np.ndarray
    total: float
    mean: float

    @classmethod
    def from_scores(cls, scores: np.ndarray) -> "ProfitReport":
        scores = np.asarray(scores, dtype=np.float64)
        total = math.fsum(scores)
        return cls(scores, total, total / len(scores))

    @property
    def n(self) -> int:
        return len(self.per_row)

    def to_record(self, policy_id: str, se: Optional[float] = None) -> dict:
        rec = {"policy_id": policy_id, "n": self.n, "total": self.total, "mean": self.mean}
        if se is not None:
            rec["se"] = se
        return rec


def _check_assignment(d, n: int) -> np.ndarray:
    d = np.asarray(d)
    if d.shape != (n,):
        raise DataError(f"assignment has shape {d.shape}, expected ({n},)")
    if not np.all(np.isin(d, (0, 1))):
        raise DataError("assignment must be 0/1")
    return d.astype(np.float64)


def _check_propensity(data: RctDataset) -> None:
    if not np.all((data.e > 0) & (data.e < 1)):
        raise DataError("propensity must lie strictly inside (0, 1)")


def ipw_scores(data: RctDataset, params: ProfitParams, d) -> np.ndarray:
    _check_propensity(data)
    d = _check_assignment(d, data.n)
    W = data.W.astype(np.float64)
    treated = W / data.e * (params.m * data.Y - params.c) * d
    control = (1.0 - W) / (1.0 - data.e) * (params.m * data.Y) * (1.0 - d)
    return treated + control


def ipw_profit(data: RctDataset, params: ProfitParams, d) -> ProfitReport:
    """IPW profit of assignment ``d``; ``mean`` is the per-person figure."""
    return ProfitReport.from_scores(ipw_scores(data, params, d))


def oracle_profit(data: RctDataset, params: ProfitParams, d) -> ProfitReport:
    """True profit of ``d`` computed from the stored potential outcomes."""
    if not data.has_potential:
        raise DataError("oracle profit needs potential outcomes")
    d = _check_assignment(d, data.n)
    pi1 = params.m * data.y1 - params.c
    pi0 = params.m * data.y0
    return ProfitReport.from_scores(pi1 * d + pi0 * (1.0 - d))


def oracle_policy(data: RctDataset, params: ProfitParams) -> np.ndarray:
    """Treat exactly the rows whose treated profit beats untreated profit."""
    if not data.has_potential:
        raise DataError("oracle policy needs potential outcomes")
    return (params.m * (data.y1 - data.y0) > params.c).astype(np.int8)


@dataclass(frozen=True)
class OmegaWeights:
    """Profit decomposition: total IPW profit = ``constant`` + sum(omega * d)."""

    omega: np.ndarray
    constant: float


def omega_weights(data: RctDataset, params: ProfitParams) -> OmegaWeights:
    _check_propensity(data)
    W = data.W.astype(np.float64)
    pi1 = params.m * data.Y - params.c
    pi0 = params.m * data.Y
    untreated = (1.0 - W) / (1.0 - data.e) * pi0
    omega = W / data.e * pi1 - untreated
    return OmegaWeights(omega, math.fsum(untreated))


def policy_loss(data: RctDataset, params: ProfitParams, d, d_prime) -> float:
    """Sum of |omega_i| over rows where the two assignments disagree."""
    d = _check_assignment(d, data.n)
    d_prime = _check_assignment(d_prime, data.n)
    omega = omega_weights(data, params).omega
    return math.fsum(np.abs(omega[d != d_prime]))


def profit_gap(data: RctDataset, params: ProfitParams, d, d_prime) -> float:
    """Raw |IPW(d) - IPW(d')|; never exceeds :func:`policy_loss`."""
    return abs(ipw_profit(data, params, d).total - ipw_profit(data, params, d_prime).total)


def plugin_policy(beta_hat, params: ProfitParams) -> np.ndarray:
    """Target rows whose estimated lift strictly exceeds c/m."""
    beta_hat = np.asarray(beta_hat, dtype=np.float64)
    return (beta_hat > params.c / params.m).astype(np.int8)


def blanket_policy(n: int) -> np.ndarray:
    if n < 1:
        raise DataError("blanket policy needs n >= 1")
    return np.ones(n, dtype=np.int8)
