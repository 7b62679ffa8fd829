"""Contractual cash-flow schedules, discounting and implicit-rate solving.

Time convention: integer periods, every flow at period end, flow ``t``
(1-based) discounted with exponent ``t``. A contract's ``principal`` is the
amount at origination (t = 0) net of fees.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import AmbiguousRootWarning, DomainError, InputError, NoRootError

PERIODS_PER_YEAR = {"year": 1, "month": 12}

RATE_LOWER = -0.99
RATE_UPPER = 10.0
SOLVER_TOL = 1e-12
SOLVER_MAX_ITER = 200
_SCAN_POINTS = 400


@dataclass(frozen=True)
class LoanContract:
    """A loan with contractual flows ``cash_flows[t-1] = CF_t`` for t = 1..T."""

    id: str
    principal: float
    cash_flows: tuple[float, ...]
    period_unit: str = "year"

    def __post_init__(self) -> None:
        object.__setattr__(self, "cash_flows", tuple(float(c) for c in self.cash_flows))
        object.__setattr__(self, "principal", float(self.principal))
        if self.period_unit not in PERIODS_PER_YEAR:
            raise InputError(f"period_unit must be one of {sorted(PERIODS_PER_YEAR)}, got {self.period_unit!r}")
        if not self.cash_flows:
            raise InputError(f"contract {self.id}: cash_flows must be non-empty")
        if not any(c > 0 for c in self.cash_flows):
            raise InputError(f"contract {self.id}: at least one cash flow must be positive")
        if not (self.principal > 0 and math.isfinite(self.principal)):
            raise InputError(f"contract {self.id}: principal must be positive")

    @property
    def term(self) -> int:
        return len(self.cash_flows)

    @property
    def periods_per_year(self) -> int:
        return PERIODS_PER_YEAR[self.period_unit]

    @classmethod
    def from_schedule(
        cls,
        id: str,
        principal: float,
        flows: Mapping[int, float],
        period_unit: str = "year",
    ) -> "LoanContract":
        """Build a contract from a sparse ``{t: cf}`` schedule.

        Missing periods are zero. A flow at t = 0 is netted into the
        principal (a fee received at origination lowers the net loan amount).
        """
        if not flows:
            raise InputError(f"contract {id}: empty schedule")
        if min(flows) < 0:
            raise InputError(f"contract {id}: negative period index")
        net = float(principal) - float(flows.get(0, 0.0))
        horizon = max(flows)
        cfs = [float(flows.get(t, 0.0)) for t in range(1, horizon + 1)]
        return cls(id=id, principal=net, cash_flows=tuple(cfs), period_unit=period_unit)


@dataclass(frozen=True)
class RateSolution:
    rate: float
    residual: float
    iterations: int
    warning: str | None = field(default=None, compare=False)


def annual_to_periodic(rate: float, periods_per_year: int) -> float:
    """Geometric conversion: ``(1 + i_p) ** n = 1 + i_a``."""
    if rate <= -1:
        raise DomainError("rate must be > -1")
    return (1.0 + rate) ** (1.0 / periods_per_year) - 1.0


def periodic_to_annual(rate: float, periods_per_year: int) -> float:
    if rate <= -1:
        raise DomainError("rate must be > -1")
    return (1.0 + rate) ** periods_per_year - 1.0


def discount_factors(rate: float, n: int, start: int = 0) -> np.ndarray:
    """``(1+rate)^-(t)`` for t = start..start+n-1."""
    if rate <= -1:
        raise DomainError(f"rate must be > -1, got {rate}")
    t = np.arange(start, start + n, dtype=float)
    with np.errstate(over="ignore"):
        return np.power(1.0 + rate, -t)


def present_value(cash_flows: Sequence[float], rate: float, horizon_offset: int = 0) -> float:
    """Value at ``horizon_offset`` of flows CF_1..CF_T.

    Returns ``sum CF_t / (1+rate)^(t - horizon_offset)``.
    """
    if rate <= -1:
        raise DomainError(f"rate must be > -1, got {rate}")
    cf = np.asarray(cash_flows, dtype=float)
    t = np.arange(1, cf.size + 1, dtype=float) - horizon_offset
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.sum(cf * np.power(1.0 + rate, -t)))


def _pv_and_derivative(cf: np.ndarray, rate: float) -> tuple[float, float]:
    t = np.arange(1, cf.size + 1, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        disc = np.power(1.0 + rate, -t)
        pv = float(np.sum(cf * disc))
        dpv = float(np.sum(-t * cf * disc) / (1.0 + rate))
    return pv, dpv


def sign_changes(values: Sequence[float]) -> int:
    signs = [math.copysign(1.0, v) for v in values if v != 0.0]
    return sum(1 for a, b in zip(signs, signs[1:]) if a != b)


def _first_bracket(cf: np.ndarray, principal: float, lo: float, hi: float) -> tuple[float, float] | None:
    # grid uniform in log(1 + rate); returns the lowest sub-interval with a sign change
    log_growth = np.linspace(math.log1p(lo), math.log1p(hi), _SCAN_POINTS)
    grid = np.expm1(log_growth)
    t = np.arange(1, cf.size + 1, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        f = np.exp(-np.outer(log_growth, t)) @ cf - principal
    exact = np.nonzero(f == 0.0)[0]
    pos = f > 0
    change = (pos[:-1] != pos[1:]) & (np.isfinite(f[:-1]) | np.isfinite(f[1:]))
    change &= ~np.isnan(f[:-1]) & ~np.isnan(f[1:])
    hits = np.nonzero(change)[0]
    first_exact = exact[0] if exact.size else None
    first_change = hits[0] if hits.size else None
    if first_exact is not None and (first_change is None or first_exact <= first_change + 1):
        return float(grid[first_exact]), float(grid[first_exact])
    if first_change is not None:
        return float(grid[first_change]), float(grid[first_change + 1])
    return None


def _solve(cf: np.ndarray, principal: float, label: str) -> RateSolution:
    if not np.any(cf > 0):
        raise NoRootError(f"{label}: no positive cash flow, present value cannot reach the principal")

    warning = None
    if sign_changes([-principal, *cf.tolist()]) > 1:
        warning = f"{label}: net flows change sign more than once; returning the lowest root in bracket"
        warnings.warn(warning, AmbiguousRootWarning, stacklevel=3)

    bracket = _first_bracket(cf, principal, RATE_LOWER, RATE_UPPER)
    if bracket is None:
        raise NoRootError(f"{label}: no rate in [{RATE_LOWER}, {RATE_UPPER}] equates PV and principal")
    lo, hi = bracket
    tol = SOLVER_TOL * principal
    f_lo = _pv_and_derivative(cf, lo)[0] - principal
    if lo == hi:
        return RateSolution(lo, abs(f_lo), 0, warning)

    # safeguarded Newton: keep a sign-changing bracket, fall back to bisection
    rate = 0.5 * (lo + hi)
    for it in range(1, SOLVER_MAX_ITER + 1):
        pv, dpv = _pv_and_derivative(cf, rate)
        f = pv - principal
        if abs(f) <= tol:
            return RateSolution(rate, abs(f), it, warning)
        if (f > 0) == (f_lo > 0):
            lo, f_lo = rate, f
        else:
            hi = rate
        step_ok = dpv != 0.0 and math.isfinite(dpv)
        candidate = rate - f / dpv if step_ok else math.nan
        if not (lo < candidate < hi):
            candidate = 0.5 * (lo + hi)
        if candidate == rate or hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(rate)):
            break
        rate = candidate

    residual = abs(_pv_and_derivative(cf, rate)[0] - principal)
    return RateSolution(rate, residual, it, warning)


def solve_effective_rate(contract: LoanContract) -> RateSolution:
    """Effective interest rate i: PV of contractual flows equals the principal."""
    cf = np.asarray(contract.cash_flows, dtype=float)
    return _solve(cf, contract.principal, f"contract {contract.id}")


def expected_flows(contract: LoanContract, expected_losses: Sequence[float]) -> np.ndarray:
    """``CF_t - R_t`` with R padded by zeros to the contract term."""
    losses = np.asarray(expected_losses, dtype=float)
    if losses.size > contract.term:
        raise InputError(
            f"contract {contract.id}: {losses.size} expected losses for a {contract.term}-period contract"
        )
    padded = np.zeros(contract.term)
    padded[: losses.size] = losses
    return np.asarray(contract.cash_flows, dtype=float) - padded


def solve_risk_adjusted_rate(contract: LoanContract, expected_losses: Sequence[float]) -> RateSolution:
    """Risk-adjusted rate i_ED: PV of expected flows ``CF_t - R_t`` equals the principal."""
    cf = expected_flows(contract, expected_losses)
    return _solve(cf, contract.principal, f"contract {contract.id} (expected flows)")
