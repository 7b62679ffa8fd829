"""Benchmark trajectories (GCA, iACV, NCA), risk level and risk profiles.

Indexing used throughout: balances are indexed t = 0..T (t = 0 is
origination); the expected loss ``R[k]`` (0-based array position k) belongs
to the period running from k to k+1 and is deducted from CF_{k+1}. The
absolute risk profile is then ``r_k = R[k] / GCA_k`` and a neutral profile
has ``R[k] = r * GCA_k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cashflow import (
    LoanContract,
    discount_factors,
    expected_flows,
    solve_effective_rate,
    solve_risk_adjusted_rate,
)
from .errors import DegenerateShapeError, InconsistentContractError, InputError

TERMINAL_TOL = 1e-6
TRUNCATE_TOL = 1e-9
NORMED_TOL = 1e-12

EL_CONVENTIONS = ("annualized", "next_period")


@dataclass(frozen=True)
class RiskProfile:
    """Expected losses per period plus, when normalized, the relative profile."""

    expected_losses: tuple[float, ...]
    relative: tuple[float, ...] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        losses = tuple(float(x) for x in self.expected_losses)
        if any(x < 0 for x in losses):
            raise InputError("expected losses must be non-negative")
        object.__setattr__(self, "expected_losses", losses)

    def __len__(self) -> int:
        return len(self.expected_losses)

    def padded(self, term: int) -> np.ndarray:
        if len(self) > term:
            raise InputError(f"profile has {len(self)} periods, contract only {term}")
        out = np.zeros(term)
        out[: len(self)] = self.expected_losses
        return out

    def absolute(self, gca: Sequence[float]) -> np.ndarray:
        """``r_k = R[k] / GCA_k`` for each period start k (0 where GCA_k is 0)."""
        g = np.asarray(gca, dtype=float)[:-1]
        losses = np.zeros(g.size)
        m = min(len(self), g.size)
        losses[:m] = self.expected_losses[:m]
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(g > 0, losses / np.where(g > 0, g, 1.0), 0.0)

    def relative_to(self, gca: Sequence[float], r: float) -> np.ndarray:
        """``p_k = r_k / r``."""
        if r == 0:
            raise InputError("relative profile undefined for zero risk level")
        return self.absolute(gca) / r


def _recursion(principal: float, rate: float, flows: np.ndarray, label: str) -> np.ndarray:
    values = np.empty(flows.size + 1)
    values[0] = principal
    growth = 1.0 + rate
    for t, cf in enumerate(flows):
        values[t + 1] = growth * values[t] - cf
    if abs(values[-1]) > TERMINAL_TOL * principal:
        raise InconsistentContractError(
            f"{label}: terminal balance {values[-1]:.6g} after the final flow is not zero "
            f"(tolerance {TERMINAL_TOL:g} x principal)"
        )
    small = np.nonzero(np.abs(values[1:]) <= TRUNCATE_TOL * principal)[0]
    if small.size:
        values = values[: small[0] + 2]
    return values


def gca_trajectory(contract: LoanContract, i: float) -> np.ndarray:
    """GCA_t for t = 0..T via ``GCA_{t+1} = (1+i) GCA_t - CF_{t+1}``."""
    flows = np.asarray(contract.cash_flows, dtype=float)
    return _recursion(contract.principal, i, flows, f"contract {contract.id}")


def iacv_trajectory(contract: LoanContract, profile: RiskProfile, i_ed: float) -> np.ndarray:
    """iACV_t for t = 0..T via ``iACV_{t+1} = (1+i_ED) iACV_t - (CF_{t+1} - R_{t+1})``."""
    flows = expected_flows(contract, profile.expected_losses)
    return _recursion(contract.principal, i_ed, flows, f"contract {contract.id} (expected flows)")


def risk_level(i: float, i_ed: float) -> float:
    return i - i_ed


def discount_to_origination(series: Sequence[float], rate: float) -> np.ndarray:
    values = np.asarray(series, dtype=float)
    return values * discount_factors(rate, values.size)


def normalize_profile(
    shape: Sequence[float],
    target_r: float,
    gca0: Sequence[float],
    discount_rate: float,
) -> RiskProfile:
    """Scale a loss-timing shape so that its risk level equals ``target_r``.

    The norming condition is ``sum p_k GCA_k^0 = sum GCA_k^0``, which makes
    the discounted expected losses equal to those of the neutral profile.
    ``gca0`` holds GCA_k discounted at ``discount_rate``; the nominal
    balances are recovered from it to build ``R[k] = r p_k GCA_k``.

    An input that already satisfies the norming condition is returned with
    its relative profile unchanged, so renormalizing is a fixed point.
    """
    weights = np.asarray(shape, dtype=float)
    g0 = np.asarray(gca0, dtype=float)[: weights.size]
    if weights.size == 0 or g0.size < weights.size:
        raise InputError("shape and gca0 must cover the same periods")
    if np.any(weights < 0):
        raise InputError("shape weights must be non-negative")
    weighted = float(np.dot(weights, g0))
    if not weighted > 0:
        raise DegenerateShapeError("shape carries no weight on outstanding balances")
    total = float(np.sum(g0))
    ratio = weighted / total
    relative = weights if abs(ratio - 1.0) <= NORMED_TOL else weights / ratio
    gca = g0 / discount_factors(discount_rate, g0.size)
    losses = target_r * relative * gca
    return RiskProfile(tuple(losses.tolist()), relative=tuple(relative.tolist()))


def norming_sum(relative: Sequence[float], gca0: Sequence[float]) -> float:
    """``sum p_k GCA_k^0 / sum GCA_k^0``; equals 1 for a profile at the neutral risk level."""
    p = np.asarray(relative, dtype=float)
    g0 = np.asarray(gca0, dtype=float)[: p.size]
    return float(np.dot(p, g0) / np.sum(g0))


def conservatism_delta(iacv0_t, nca0_t):
    """Static calibration test ``iACV_t^0 - NCA_t^0``; >= 0 is conservative."""
    return np.subtract(iacv0_t, nca0_t)


def is_conservative(delta) -> bool | np.ndarray:
    return np.asarray(delta) >= 0


def gca_iacv_gap(r: float, r_t: Sequence[float], gca0: Sequence[float], horizon: int, rate: float) -> float:
    """Cumulative gap ``GCA_T^0 - iACV_T^0`` from the risk-level/profile mismatch.

    Sums ``(r - r_k) GCA_k^0`` over k = 0..T-1. The loss of period k falls due
    at k+1, so each term is discounted one further period at ``rate`` (i_ED).
    """
    r_arr = np.asarray(r_t, dtype=float)
    g0 = np.asarray(gca0, dtype=float)
    if horizon < 0 or horizon > min(r_arr.size, g0.size):
        raise IndexError(f"horizon {horizon} exceeds schedule of {min(r_arr.size, g0.size)} periods")
    terms = (r - r_arr[:horizon]) * g0[:horizon]
    return float(np.sum(terms) / (1.0 + rate))


def gca_iacv_gap_series(r: float, r_t: Sequence[float], gca0: Sequence[float], rate: float) -> np.ndarray:
    """``gca_iacv_gap`` for every horizon T = 0..len(r_t)."""
    r_arr = np.asarray(r_t, dtype=float)
    g0 = np.asarray(gca0, dtype=float)[: r_arr.size]
    return np.concatenate([[0.0], np.cumsum((r - r_arr) * g0)]) / (1.0 + rate)


@dataclass(frozen=True)
class ExposureTrajectory:
    """Aligned per-period series for one exposure, t = 0..T."""

    id: str
    i: float
    i_ed: float
    gca: np.ndarray
    iacv: np.ndarray
    nca: np.ndarray
    provision: np.ndarray
    el_12m: np.ndarray
    el_lifetime: np.ndarray
    bucket: np.ndarray
    gca0: np.ndarray  # discounted at i
    gca0_ed: np.ndarray  # discounted at i_ED
    iacv0: np.ndarray
    nca0: np.ndarray

    @property
    def r(self) -> float:
        return risk_level(self.i, self.i_ed)

    @property
    def delta(self) -> np.ndarray:
        return conservatism_delta(self.iacv0, self.nca0)

    @property
    def periods(self) -> np.ndarray:
        return np.arange(self.gca.size)


def lifetime_el(losses: np.ndarray, i: float, n: int) -> np.ndarray:
    """Remaining expected losses discounted at i to each date t = 0..n-1."""
    out = np.zeros(n)
    for t in range(n):
        rest = losses[t:]
        out[t] = float(np.dot(rest, discount_factors(i, rest.size, start=1)))
    return out


def twelve_month_el(
    losses: np.ndarray,
    gca: np.ndarray,
    i: float,
    r: float,
    periods_per_year: int = 1,
    convention: str = "annualized",
) -> np.ndarray:
    """12-month expected loss at each date.

    ``annualized``: r * GCA_t scaled to a year; ``next_period``: the expected
    losses of the next year discounted at i.
    """
    n = gca.size
    if convention == "annualized":
        return r * periods_per_year * gca
    if convention == "next_period":
        out = np.zeros(n)
        for t in range(n):
            nxt = losses[t : t + periods_per_year]
            out[t] = float(np.dot(nxt, discount_factors(i, nxt.size, start=1)))
        return out
    raise InputError(f"unknown EL convention {convention!r}; expected one of {EL_CONVENTIONS}")


def build_trajectory(
    contract: LoanContract,
    profile: RiskProfile,
    bucket: int | Sequence[int] = 1,
    el_convention: str = "annualized",
) -> ExposureTrajectory:
    """Solve i and i_ED and assemble GCA/iACV/NCA with provisions per bucket."""
    i = solve_effective_rate(contract).rate
    i_ed = solve_risk_adjusted_rate(contract, profile.expected_losses).rate
    gca = gca_trajectory(contract, i)
    iacv = iacv_trajectory(contract, profile, i_ed)
    n = min(gca.size, iacv.size)
    gca, iacv = gca[:n], iacv[:n]
    losses = profile.padded(contract.term)
    r = risk_level(i, i_ed)

    buckets = np.broadcast_to(np.asarray(bucket, dtype=int), (n,)).copy()
    if not np.isin(buckets, (1, 2, 3)).all():
        raise InputError("bucket must be 1, 2 or 3")
    el_life = lifetime_el(losses, i, n)
    # the undiscounted annualized figure can exceed what is left to lose near maturity
    el_12 = np.minimum(twelve_month_el(losses, gca, i, r, contract.periods_per_year, el_convention), el_life)
    provision = np.where(buckets == 1, el_12, el_life)
    nca = gca - provision

    return ExposureTrajectory(
        id=contract.id,
        i=i,
        i_ed=i_ed,
        gca=gca,
        iacv=iacv,
        nca=nca,
        provision=provision,
        el_12m=el_12,
        el_lifetime=el_life,
        bucket=buckets,
        gca0=discount_to_origination(gca, i),
        gca0_ed=discount_to_origination(gca, i_ed),
        iacv0=discount_to_origination(iacv, i_ed),
        nca0=discount_to_origination(nca, i_ed),
    )


def neutral_profile(contract: LoanContract, r: float) -> RiskProfile:
    """Constant-hazard profile ``R[k] = r GCA_k`` on the contract's GCA path."""
    gca = gca_trajectory(contract, solve_effective_rate(contract).rate)
    losses = r * gca[:-1]
    return RiskProfile(tuple(losses.tolist()), relative=tuple([1.0] * losses.size))


def named_shape(name: str, term: int) -> np.ndarray:
    """Loss-timing shapes: ``neutral``, ``delayed-k`` (no risk for k periods), ``bullet``."""
    if name == "neutral":
        return np.ones(term)
    if name.startswith("delayed"):
        _, _, k = name.partition("-")
        k = int(k) if k else 1
        if not 0 <= k < term:
            raise InputError(f"delay {k} must be shorter than term {term}")
        shape = np.ones(term)
        shape[:k] = 0.0
        return shape
    if name == "bullet":
        shape = np.ones(term)
        shape[-1] = float(term)
        return shape
    raise InputError(f"unknown profile shape {name!r}")


def profile_from_shape(
    contract: LoanContract,
    shape: Sequence[float] | str,
    r: float,
    norming: str = "i_ed",
) -> RiskProfile:
    """Normalized profile with risk level r for a contract.

    ``norming="i_ed"`` discounts at i - r, which reproduces i_ED of the
    neutral profile exactly; ``norming="i"`` uses the effective rate.
    """
    i = solve_effective_rate(contract).rate
    gca = gca_trajectory(contract, i)
    weights = named_shape(shape, gca.size - 1) if isinstance(shape, str) else np.asarray(shape, dtype=float)
    if norming == "i_ed":
        rate = i - r
    elif norming == "i":
        rate = i
    else:
        raise InputError(f"norming must be 'i_ed' or 'i', got {norming!r}")
    return normalize_profile(weights, r, discount_to_origination(gca[: weights.size], rate), rate)


def aggregate_delta(trajectories: Sequence[ExposureTrajectory]) -> dict[str, np.ndarray]:
    """Portfolio Δ_t as a plain sum and as a GCA-weighted mean per period."""
    if not trajectories:
        return {"t": np.arange(0), "sum": np.zeros(0), "weighted_mean": np.zeros(0)}
    n = max(tr.gca.size for tr in trajectories)
    total = np.zeros(n)
    weighted = np.zeros(n)
    weights = np.zeros(n)
    for tr in trajectories:
        k = tr.gca.size
        total[:k] += tr.delta
        weighted[:k] += tr.delta * tr.gca
        weights[:k] += tr.gca
    with np.errstate(divide="ignore", invalid="ignore"):
        mean = np.where(weights > 0, weighted / np.where(weights > 0, weights, 1.0), 0.0)
    return {"t": np.arange(n), "sum": total, "weighted_mean": mean}
