"""Bucket-3 analytics: NCA decomposition, NPL Dashboard with unwinding
correction, static-pool TEL and vintage reports, moving-window monitoring."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .cashflow import annual_to_periodic, present_value
from .dashboards import check_cadence
from .errors import (
    DomainError,
    InputError,
    OverCollateralizedError,
    PoolViolationError,
    ReconciliationError,
)

NCA_TOL = 1e-9
TEL_TOL = 1e-9
STACK_TOL = 1e-6
RUN_LENGTH = 6

# Stack order of the vintage chart: the first three add up to TEL.
STACK_ORDER = ("wo", "el", "interest", "nca_unsec", "nca_gtee", "nca_coll", "nca_cure")


@dataclass(frozen=True)
class NcaDecomposition:
    coll: float
    unsec: float
    gtee: float
    cure: float
    el: float

    @property
    def nca(self) -> float:
        return self.coll + self.unsec + self.gtee + self.cure

    @property
    def gca(self) -> float:
        return self.nca + self.el


def split_nca(gca: float, coll: float, lgd_u: float, pd: float, cured: bool = False) -> NcaDecomposition:
    """Collateral / unsecured / guarantee split of a defaulted exposure's NCA.

    With ``U = gca - coll``: unsecured ``(1 - lgd_u) U``, guarantee
    ``(1 - pd) lgd_u U`` and EL ``pd lgd_u U``. For a cured exposure the same
    NCA is reported as a single cure amount.
    """
    if gca < 0 or coll < 0:
        raise InputError("gca and collateral value must be non-negative")
    if not 0.0 <= lgd_u <= 1.0:
        raise InputError(f"lgd_u must lie in [0, 1], got {lgd_u}")
    if not 0.0 <= pd <= 1.0:
        raise InputError(f"guarantor pd must lie in [0, 1], got {pd}")
    if coll > gca:
        raise OverCollateralizedError(f"collateral after haircut {coll} exceeds gca {gca}")
    unsecured = gca - coll
    # differences of products keep the identity exact to rounding
    lost = lgd_u * unsecured
    el = pd * lost
    unsec = unsecured - lost
    gtee = lost - el
    if cured:
        return NcaDecomposition(0.0, 0.0, 0.0, coll + unsec + gtee, el)
    return NcaDecomposition(coll, unsec, gtee, 0.0, el)


@dataclass(frozen=True)
class NplExposure:
    """A defaulted exposure with expected recoveries at the end of future periods.

    ``effective_rate`` is per period. When recoveries are given, the NCA
    implied by the collateral/LGD/PD parameters must equal their present value.
    """

    id: str
    gca: float
    expected_recoveries: tuple[float, ...] = ()
    collateral_value_after_haircut: float = 0.0
    lgd_u: float = 1.0
    guarantor_pd: float = 1.0
    cured: bool = False
    effective_rate: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "expected_recoveries", tuple(float(r) for r in self.expected_recoveries))
        if self.effective_rate <= -1:
            raise DomainError("effective_rate must be > -1")
        if any(r < 0 for r in self.expected_recoveries):
            raise InputError(f"exposure {self.id}: negative expected recovery")
        parts = self.decomposition()
        if self.expected_recoveries:
            pv = self.nca
            if abs(parts.nca - pv) > NCA_TOL * max(1.0, self.gca):
                raise InputError(
                    f"exposure {self.id}: parameters imply NCA {parts.nca}, recoveries discount to {pv}"
                )

    def decomposition(self) -> NcaDecomposition:
        return split_nca(
            self.gca, self.collateral_value_after_haircut, self.lgd_u, self.guarantor_pd, self.cured
        )

    @property
    def nca(self) -> float:
        if self.expected_recoveries:
            return present_value(self.expected_recoveries, self.effective_rate)
        return self.decomposition().nca

    @property
    def el(self) -> float:
        return self.gca - self.nca

    @classmethod
    def from_recoveries(
        cls,
        id: str,
        gca: float,
        recoveries: Sequence[float],
        rate: float,
        coll: float = 0.0,
        guarantor_pd: float = 1.0,
        cured: bool = False,
    ) -> "NplExposure":
        """Build an exposure whose lgd_u is backed out of its recoveries."""
        nca = present_value(recoveries, rate)
        lgd_u = implied_lgd_u(gca, nca, coll, guarantor_pd)
        return cls(id, gca, tuple(recoveries), coll, lgd_u, guarantor_pd, cured, rate)


def implied_lgd_u(gca: float, nca: float, coll: float = 0.0, pd: float = 1.0) -> float:
    """lgd_u such that the NCA split reproduces ``nca``."""
    unsecured = gca - coll
    if unsecured <= 0:
        return 0.0
    if pd <= 0:
        raise DomainError("guarantor pd must be positive to back out lgd_u")
    return min(1.0, max(0.0, (gca - nca) / (pd * unsecured)))


def decompose_nca(e: NplExposure) -> NcaDecomposition:
    return e.decomposition()


def unwinding_interest(nca_bop: float, recoveries: Sequence[float], rate: float, periods: int = 1) -> float:
    """Interest accreted on NCA over ``periods`` periods while ``recoveries`` are received.

    ``recoveries[k]`` falls at the end of period k + 1. With no recovery
    inside the window this is ``((1 + rate)^periods - 1) nca_bop``.
    """
    nca, total = nca_bop, 0.0
    for k in range(periods):
        interest = rate * nca
        total += interest
        nca += interest - (recoveries[k] if k < len(recoveries) else 0.0)
    return total


def roll_forward(e: NplExposure, periods: int = 1, gca_accrual: bool = False) -> tuple[NplExposure, float]:
    """Advance an exposure whose recoveries arrive exactly as expected.

    GCA falls by the recoveries received (and rises by unwinding interest when
    ``gca_accrual``). Once no recovery is left the remaining GCA is written
    off. Returns the new exposure and the write-off.
    """
    if periods < 1:
        raise InputError("periods must be at least 1")
    rec = e.expected_recoveries
    received = math.fsum(rec[:periods])
    gca = e.gca - received
    if gca_accrual:
        gca += unwinding_interest(e.nca, rec, e.effective_rate, periods)
    remaining = rec[periods:]
    wo = 0.0
    if not any(r > 0 for r in remaining):
        wo, gca, remaining = max(gca, 0.0), 0.0, ()
    # the rolled exposure carries an overall LGD: its collateral and guarantee
    # flows are not tracked separately
    if not remaining:
        return replace(e, gca=0.0, expected_recoveries=(), collateral_value_after_haircut=0.0, lgd_u=0.0, guarantor_pd=1.0), wo
    nca = present_value(remaining, e.effective_rate)
    lgd_u = implied_lgd_u(gca, nca)
    return replace(e, gca=gca, expected_recoveries=remaining, collateral_value_after_haircut=0.0, lgd_u=lgd_u, guarantor_pd=1.0), wo


def exposure_dashboard(bop: NplExposure, eop: NplExposure, wo: float) -> float:
    """``EL^EOP + wo - EL^BOP`` for a single exposure."""
    return eop.el + wo - bop.el


def unwinding_correction(raw_dashboard: float, i: float, nca_bop: float, gca_accrual: bool = False) -> float:
    """Add back unwinding interest; skipped when GCA already accrues it."""
    if gca_accrual:
        return raw_dashboard
    return raw_dashboard + i * nca_bop


# --- pool states -------------------------------------------------------------


@dataclass(frozen=True)
class PoolObservation:
    pool: str
    as_of: int
    id: str
    gca: float
    coll: float
    lgd_u: float
    guarantor_pd: float
    cured: bool = False
    wo: float = 0.0

    def __post_init__(self) -> None:
        if self.wo < 0:
            raise InputError(f"exposure {self.id}: negative write-off")
        split_nca(self.gca, self.coll, self.lgd_u, self.guarantor_pd, self.cured)

    def decomposition(self) -> NcaDecomposition:
        return split_nca(self.gca, self.coll, self.lgd_u, self.guarantor_pd, self.cured)


@dataclass(frozen=True)
class PoolState:
    """All observations of one date, keyed and ordered by exposure id."""

    as_of: int
    observations: tuple[PoolObservation, ...]
    parts: NcaDecomposition = field(init=False, repr=False)

    def __post_init__(self) -> None:
        obs = tuple(sorted(self.observations, key=lambda o: o.id))
        ids = [o.id for o in obs]
        if len(set(ids)) != len(ids):
            raise InputError(f"pool state {self.as_of}: duplicate exposure ids")
        if any(o.as_of != self.as_of for o in obs):
            raise InputError(f"pool state {self.as_of}: observation with a different as_of")
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "parts", _sum_parts(o.decomposition() for o in obs))

    @property
    def ids(self) -> frozenset[str]:
        return frozenset(o.id for o in self.observations)

    @property
    def gca(self) -> float:
        return math.fsum(o.gca for o in self.observations)

    @property
    def el(self) -> float:
        return self.parts.el

    @property
    def nca(self) -> float:
        return self.parts.nca

    @property
    def wo(self) -> float:
        return math.fsum(o.wo for o in self.observations)

    def restrict(self, ids: Iterable[str]) -> "PoolState":
        keep = set(ids)
        return PoolState(self.as_of, tuple(o for o in self.observations if o.id in keep))


def _sum_parts(parts: Iterable[NcaDecomposition]) -> NcaDecomposition:
    items = list(parts)
    return NcaDecomposition(
        *(math.fsum(getattr(p, k) for p in items) for k in ("coll", "unsec", "gtee", "cure", "el"))
    )


def npl_dashboard(bop: PoolState, eop: PoolState, wo: float | None = None) -> float:
    """``EL_oldNPL^EOP + wo_oldNPL - EL_NPL^BOP`` for a population without new defaults."""
    new = eop.ids - bop.ids
    if new:
        raise PoolViolationError(f"new defaults inside a static population: {sorted(new)[:5]}")
    return eop.el + (eop.wo if wo is None else wo) - bop.el


# --- static pools ------------------------------------------------------------


@dataclass(frozen=True)
class StaticPool:
    """A frozen cohort of defaults observed at consecutive dates.

    ``rate`` is the annual discount rate; pools observed more often than
    yearly unwind at the equivalent per-period rate. ``recovered`` optionally
    holds cash received per period (index 0 unused) for the GCA roll-forward
    check of the vintage report.
    """

    pool_id: str
    cohort_window: tuple[int, int]
    members: frozenset[str]
    history: tuple[PoolState, ...]
    rate: float = 0.0
    periods_per_year: int = 1
    gca_accrual: bool = False
    recovered: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "members", frozenset(self.members))
        object.__setattr__(self, "history", tuple(sorted(self.history, key=lambda s: s.as_of)))
        if not self.history:
            raise InputError(f"pool {self.pool_id}: empty history")
        check_cadence([s.as_of for s in self.history])
        for state in self.history:
            extra = state.ids - self.members
            if extra:
                raise PoolViolationError(
                    f"pool {self.pool_id}: exposures {sorted(extra)[:5]} joined after construction (as_of {state.as_of})"
                )
        if self.recovered is not None and len(self.recovered) != len(self.history):
            raise InputError(f"pool {self.pool_id}: recovered series must align with history")

    @property
    def period_rate(self) -> float:
        return annual_to_periodic(self.rate, self.periods_per_year)

    @property
    def gca0(self) -> float:
        return self.history[0].gca

    def dashboards(self) -> np.ndarray:
        """NPL Dashboard per period; element 0 is 0 by convention."""
        out = np.zeros(len(self.history))
        for t in range(1, len(self.history)):
            out[t] = npl_dashboard(self.history[t - 1], self.history[t])
        return out

    def interest(self) -> np.ndarray:
        """Unwinding interest per period on the previous date's NCA."""
        out = np.zeros(len(self.history))
        if not self.gca_accrual:
            i = self.period_rate
            for t in range(1, len(self.history)):
                out[t] = i * self.history[t - 1].nca
        return out


@dataclass(frozen=True)
class TelSeries:
    as_of: np.ndarray
    tel: np.ndarray
    tel_from_dashboards: np.ndarray
    el: np.ndarray
    cumulative_wo: np.ndarray
    cumulative_interest: np.ndarray
    dashboard: np.ndarray

    @property
    def drift(self) -> np.ndarray:
        return self.tel - self.tel[0]


def static_pool_tel(pool: StaticPool, horizon: int | None = None) -> TelSeries:
    """TEL^T = EL^T + cumulative write-offs + cumulative unwinding interest.

    Also built as EL^0 plus the cumulated corrected dashboards; the two forms
    must agree to 1e-9 of GCA^0.
    """
    n = len(pool.history) if horizon is None else horizon + 1
    if n > len(pool.history) or n < 1:
        raise InputError(f"pool {pool.pool_id}: history covers {len(pool.history) - 1} periods, not {horizon}")
    states = pool.history[:n]
    el = np.array([s.el for s in states])
    wo = np.array([0.0] + [s.wo for s in states[1:]])
    interest = pool.interest()[:n]
    dash = pool.dashboards()[:n]
    cum_wo = np.cumsum(wo)
    cum_int = np.cumsum(interest)
    tel = el + cum_wo + cum_int
    alt = el[0] + np.cumsum(dash + interest)
    gap = float(np.max(np.abs(tel - alt)))
    if gap > TEL_TOL * max(1.0, pool.gca0):
        raise ReconciliationError(f"pool {pool.pool_id}: TEL forms differ by {gap}")
    return TelSeries(np.array([s.as_of for s in states]), tel, alt, el, cum_wo, cum_int, dash)


@dataclass(frozen=True)
class VintageRow:
    as_of: int
    wo: float
    el: float
    interest: float
    nca_unsec: float
    nca_gtee: float
    nca_coll: float
    nca_cure: float
    recovered: float
    gca: float
    tel: float

    def stack(self) -> tuple[float, ...]:
        return tuple(getattr(self, k) for k in STACK_ORDER)


def vintage_report(pool: StaticPool) -> list[VintageRow]:
    """Cumulative write-offs, EL, cumulative interest and NCA parts per date.

    Each date's NCA parts plus EL must equal its GCA, and when recoveries are
    known GCA^0 must equal GCA + cumulative recoveries + cumulative write-offs
    (less accrued interest under GCA accrual); otherwise ReconciliationError.
    """
    tel = static_pool_tel(pool)
    gca0 = pool.gca0
    tol = STACK_TOL * max(1.0, gca0)
    accrued = np.cumsum([0.0] + [pool.period_rate * s.nca for s in pool.history[:-1]]) if pool.gca_accrual else None
    rec_cum = np.cumsum(pool.recovered) if pool.recovered is not None else None
    rows = []
    for t, state in enumerate(pool.history):
        p = state.parts
        gca = state.gca
        if abs(p.gca - gca) > tol:
            raise ReconciliationError(f"pool {pool.pool_id} as_of {state.as_of}: parts + EL = {p.gca}, GCA = {gca}")
        if rec_cum is not None:
            expected = gca + rec_cum[t] + tel.cumulative_wo[t] - (accrued[t] if accrued is not None else 0.0)
            if abs(expected - gca0) > tol:
                raise ReconciliationError(
                    f"pool {pool.pool_id} as_of {state.as_of}: GCA roll-forward gives {expected}, GCA^0 = {gca0}"
                )
        rows.append(
            VintageRow(
                as_of=state.as_of,
                wo=float(tel.cumulative_wo[t]),
                el=p.el,
                interest=float(tel.cumulative_interest[t]),
                nca_unsec=p.unsec,
                nca_gtee=p.gtee,
                nca_coll=p.coll,
                nca_cure=p.cure,
                recovered=float(rec_cum[t]) if rec_cum is not None else 0.0,
                gca=gca,
                tel=float(tel.tel[t]),
            )
        )
    return rows


# --- moving-window monitoring -------------------------------------------------


@dataclass(frozen=True)
class MonitorResult:
    as_of: np.ndarray
    dashboard: np.ndarray
    corrected: np.ndarray
    d_coll: np.ndarray
    d_unsec: np.ndarray
    d_gtee: np.ndarray
    d_cure: np.ndarray
    new_default_nca: np.ndarray
    flags: np.ndarray

    def peaks(self, k: float = 5.0, series: str = "corrected") -> np.ndarray:
        """Indices whose deviation from the median exceeds k median absolute deviations."""
        x = getattr(self, series)
        med = np.median(x)
        mad = np.median(np.abs(x - med))
        return np.nonzero(np.abs(x - med) > k * mad)[0]


def run_length_flags(values: Sequence[float], run_length: int = RUN_LENGTH) -> np.ndarray:
    """True where the last ``run_length`` values all share a strict sign."""
    x = np.sign(np.asarray(values, dtype=float))
    flags = np.zeros(x.size, dtype=bool)
    run, prev = 0, 0.0
    for k, s in enumerate(x):
        run = run + 1 if s != 0 and s == prev else (1 if s != 0 else 0)
        prev = s
        flags[k] = run >= run_length
    return flags


def moving_window_monitor(
    states: Sequence[PoolState],
    rate: float,
    window: int = 1,
    periods_per_year: int = 12,
    run_length: int = RUN_LENGTH,
    gca_accrual: bool = False,
) -> MonitorResult:
    """Per-date NPL Dashboard over the trailing ``window`` periods of an open book.

    Exposures that are new at the window's end are excluded from the
    dashboard and from the NCA movements and reported as inflow. Write-offs
    of the window-start population are summed over every date in the
    window. The correction adds the unwinding interest of the window-start population
    accumulated over every period inside the window.
    """
    if window < 1:
        raise InputError("window must be at least 1")
    states = sorted(states, key=lambda s: s.as_of)
    check_cadence([s.as_of for s in states])
    i = annual_to_periodic(rate, periods_per_year)
    cols: dict[str, list[float]] = {k: [] for k in ("dash", "corr", "coll", "unsec", "gtee", "cure", "new")}
    dates = []
    for t in range(window, len(states)):
        bop, eop = states[t - window], states[t]
        old = bop.ids
        eop_old = eop.restrict(old)
        new_part = eop.restrict(eop.ids - old)
        # exposures written off inside the window have left the book by its end
        wo = math.fsum(states[k].restrict(old).wo for k in range(t - window + 1, t + 1))
        raw = eop_old.el + wo - bop.el
        interest = 0.0
        if not gca_accrual:
            interest = math.fsum(i * states[k].restrict(old).nca for k in range(t - window, t))
        dates.append(eop.as_of)
        cols["dash"].append(raw)
        cols["corr"].append(raw + interest)
        for k in ("coll", "unsec", "gtee", "cure"):
            cols[k].append(getattr(eop_old.parts, k) - getattr(bop.parts, k))
        cols["new"].append(new_part.nca)
    corrected = np.array(cols["corr"])
    return MonitorResult(
        as_of=np.array(dates, dtype=int),
        dashboard=np.array(cols["dash"]),
        corrected=corrected,
        d_coll=np.array(cols["coll"]),
        d_unsec=np.array(cols["unsec"]),
        d_gtee=np.array(cols["gtee"]),
        d_cure=np.array(cols["cure"]),
        new_default_nca=np.array(cols["new"]),
        flags=run_length_flags(corrected, run_length),
    )
