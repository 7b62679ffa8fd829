"""Bucket assignment, provisioning, duration-based risk-level shocks and the
conservatism (hidden-reserve) measures for buckets 1 and 2."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cashflow import LoanContract, discount_factors, solve_effective_rate
from .errors import InconsistentELError, InputError, RatioUndefinedError
from .valuation import discount_to_origination, gca_trajectory

GROSS = "gross_GCA"
NET = "net_NCA"
_RATIO_TOL = 1e-12


@dataclass(frozen=True)
class StagingConfig:
    relative_threshold: float = 2.5
    dpd_backstop: int = 30
    rebut_dpd: bool = False
    rebutted_ids: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.relative_threshold <= 0:
            raise InputError("relative_threshold must be positive")
        if self.dpd_backstop < 0:
            raise InputError("dpd_backstop must be non-negative")
        object.__setattr__(self, "rebutted_ids", frozenset(self.rebutted_ids))


@dataclass(frozen=True)
class StageState:
    bucket: int
    lifetime_pd_origination: float
    lifetime_pd_current: float
    days_past_due: int = 0
    provision: float = 0.0
    interest_accrual_base: str | None = None
    defaulted: bool = False
    id: str | None = None

    def __post_init__(self) -> None:
        if self.bucket not in (1, 2, 3):
            raise InputError(f"bucket must be 1, 2 or 3, got {self.bucket}")
        for name in ("lifetime_pd_origination", "lifetime_pd_current"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InputError(f"{name} must lie in [0, 1], got {value}")
        if self.days_past_due < 0:
            raise InputError("days_past_due must be non-negative")
        expected = NET if self.bucket == 3 else GROSS
        if self.interest_accrual_base is None:
            object.__setattr__(self, "interest_accrual_base", expected)
        elif self.interest_accrual_base != expected:
            raise InputError(f"bucket {self.bucket} accrues interest on {expected}, not {self.interest_accrual_base}")


def assess_stage(state: StageState, config: StagingConfig = StagingConfig()) -> int:
    """Bucket from default flag, relative lifetime-PD increase and the dpd backstop.

    Raises RatioUndefinedError when the origination PD is zero but the
    current PD is not.
    """
    if state.defaulted:
        return 3
    pd0, pd1 = state.lifetime_pd_origination, state.lifetime_pd_current
    if pd0 == 0.0:
        if pd1 > 0.0:
            raise RatioUndefinedError(
                f"exposure {state.id or '?'}: origination PD is zero, relative change undefined"
            )
        ratio = 1.0
    else:
        ratio = pd1 / pd0
    significant = ratio >= config.relative_threshold * (1.0 - _RATIO_TOL)
    rebutted = config.rebut_dpd or (state.id is not None and state.id in config.rebutted_ids)
    past_due = state.days_past_due >= config.dpd_backstop and not rebutted
    return 2 if significant or past_due else 1


def provision_amount(stage: int, el_12m: float, el_lifetime: float) -> float:
    """12-month EL in bucket 1, lifetime EL in buckets 2 and 3."""
    if el_12m > el_lifetime:
        raise InconsistentELError(f"12-month EL {el_12m} exceeds lifetime EL {el_lifetime}")
    if stage == 1:
        return el_12m
    if stage in (2, 3):
        return el_lifetime
    raise InputError(f"bucket must be 1, 2 or 3, got {stage}")


@dataclass(frozen=True)
class DurationResult:
    macaulay: float
    modified: float
    discount_rate_used: float


def modified_duration(series0: Sequence[float], rate: float, principal: float) -> DurationResult:
    """Durations from balances already discounted to origination.

    ``series0`` is GCA_t^0 (or iACV_t^0) for t = 0, 1, ...; the Macaulay
    duration is their sum over the initial value, the modified duration
    that divided by ``1 + rate``.
    """
    values = np.asarray(series0, dtype=float)
    if values.size == 0:
        raise InputError("empty balance series")
    if principal <= 0:
        raise InputError("principal must be positive")
    mac = float(np.sum(values) / principal)
    return DurationResult(macaulay=mac, modified=mac / (1.0 + rate), discount_rate_used=rate)


def macaulay_from_flows(cash_flows: Sequence[float], rate: float) -> float:
    """Cash-flow weighted Macaulay duration ``sum t CF_t^0 / sum CF_t^0``."""
    cf = np.asarray(cash_flows, dtype=float)
    pv = cf * discount_factors(rate, cf.size, start=1)
    t = np.arange(1, cf.size + 1)
    return float(np.dot(t, pv) / np.sum(pv))


def duration_at(balances: Sequence[float], rate: float, t: int) -> DurationResult:
    """Duration measured at date t from nominal balances ``X_t, X_{t+1}, ...``."""
    values = np.asarray(balances, dtype=float)[t:]
    if values.size == 0 or values[0] <= 0:
        raise InputError(f"no outstanding balance at t={t}")
    return modified_duration(discount_to_origination(values, rate), rate, values[0])


def shock_iacv(iacv0: float, d_mod: float, delta_r: float) -> float:
    """First-order value after a risk-level increase: ``iacv0 (1 - delta_r d_mod)``."""
    return iacv0 * (1.0 - delta_r * d_mod)


def conservatism_bound(el0_t: float, profile_gap: float, d_mod_t: float, gca0_t: float) -> float:
    """Largest risk-level increase that keeps Δ_t >= 0.

    A negative value means Δ_t is already negative at an unchanged level.
    """
    if gca0_t <= 0 or d_mod_t <= 0:
        raise InputError("gca0_t and d_mod_t must be positive")
    return (el0_t - profile_gap) / (d_mod_t * gca0_t)


def generalized_delta(delta_r: float, d_mod_t: float, gca0_t: float, el0_t: float, profile_gap: float) -> float:
    """Δ_t under a risk-level change: duration term plus remaining conservatism."""
    return -delta_r * d_mod_t * gca0_t + (el0_t - profile_gap)


def hidden_reserve_ratio(relative_increase_at_trigger: float) -> float:
    """Share of a bucket-2 provision that is potential hidden reserve.

    The originally expected lifetime loss is already priced into GCA, so only
    the increment is economic: ``1 / (1 + x)`` for a relative increase x.
    """
    if relative_increase_at_trigger < 0:
        raise InputError("relative increase must be non-negative")
    return 1.0 / (1.0 + relative_increase_at_trigger)


def threshold_sensitivity(increases: Sequence[float]) -> list[tuple[float, float]]:
    """Hidden-reserve ratio for a grid of bucket-2 thresholds (threshold = 1 + x)."""
    return [(1.0 + x, hidden_reserve_ratio(x)) for x in increases]


@dataclass(frozen=True)
class DriftPath:
    """NCA vs iACV under a risk level that drifts after origination."""

    t_years: np.ndarray
    risk_level: np.ndarray
    gca: np.ndarray
    iacv: np.ndarray
    nca: np.ndarray
    bucket: np.ndarray
    delta: np.ndarray  # discounted to origination at i_ED

    @property
    def transition_time(self) -> float | None:
        hits = np.nonzero(self.bucket >= 2)[0]
        return float(self.t_years[hits[0]]) if hits.size else None


def drift_path(
    contract: LoanContract,
    base_risk_level: float,
    drift_per_year: float,
    config: StagingConfig = StagingConfig(),
) -> DriftPath:
    """Revalue iACV and NCA each period while the annual risk level drifts linearly.

    At each date the neutral loss profile is rebased to the current level
    ``r(t) = r0 + drift * t``; iACV discounts the updated expected flows at
    the origination i_ED. The staging criterion compares r(t) with r0, which
    equals the lifetime-PD ratio when LGD is constant. Bucket 1 provisions
    the next year's expected losses, buckets 2+ the remaining lifetime losses,
    both discounted at i.
    """
    ppy = contract.periods_per_year
    i = solve_effective_rate(contract).rate
    gca = gca_trajectory(contract, i)
    n = gca.size
    flows = np.asarray(contract.cash_flows, dtype=float)
    i_ed = i - base_risk_level / ppy

    t_years = np.arange(n) / ppy
    level = base_risk_level + drift_per_year * t_years
    iacv = np.zeros(n)
    provision = np.zeros(n)
    bucket = np.ones(n, dtype=int)
    for t in range(n - 1):
        losses = level[t] / ppy * gca[t : n - 1]
        rest = flows[t : n - 1] - losses
        iacv[t] = float(np.dot(rest, discount_factors(i_ed, rest.size, start=1)))
        state = StageState(
            bucket=1,
            lifetime_pd_origination=min(base_risk_level, 1.0),
            lifetime_pd_current=min(level[t], 1.0),
        )
        bucket[t] = assess_stage(state, config)
        disc = discount_factors(i, losses.size, start=1)
        el_life = float(np.dot(losses, disc))
        el_12 = float(np.dot(losses[:ppy], disc[:ppy]))
        provision[t] = provision_amount(bucket[t], el_12, el_life)
    bucket[-1] = bucket[-2] if n > 1 else 1
    nca = gca - provision
    delta = discount_to_origination(iacv - nca, i_ed)
    return DriftPath(t_years, level, gca, iacv, nca, bucket, delta)


def sign_phases(delta: Sequence[float]) -> list[str]:
    """Run-length compressed sign pattern; zero counts as conservative (+)."""
    phases: list[str] = []
    for value in delta:
        s = "+" if value >= 0 else "-"
        if not phases or phases[-1] != s:
            phases.append(s)
    return phases
