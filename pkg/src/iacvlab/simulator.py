"""Synthetic books and canned scenarios that exercise every analytic.

Randomness comes from Philox streams keyed by ``SeedSequence(seed,
spawn_key=(k,))``: stream 0 drives the common factor, stream k + 1 exposure k.
Each exposure draws all of its periods from its own stream, so results do not
depend on the order or grouping in which exposures are processed.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np
from scipy import stats

from .cashflow import PERIODS_PER_YEAR, LoanContract, annual_to_periodic, solve_effective_rate
from .dashboards import ExposureRecord, PortfolioSnapshot
from .errors import InputError
from .npl import PoolObservation, PoolState, StaticPool
from .staging import DriftPath, StagingConfig, drift_path
from .valuation import (
    RiskProfile,
    build_trajectory,
    gca_trajectory,
    neutral_profile,
    profile_from_shape,
)

HAZARD_SHAPES = ("neutral", "delayed_k", "bullet")
_SUM_TOL = 1e-12


@dataclass(frozen=True)
class ScenarioConfig:
    """Parameters of a synthetic scenario.

    Rates and risk levels are annual; ``risk_level_drift`` is per period.
    ``pd`` is the 12-month PD of performing exposures in snapshot books.
    The NPL fields describe defaulted exposures: nominal recovery shares of
    GCA for collateral, unsecured and guarantee flows, their timing over
    ``npl_horizon`` periods, multiplicative recovery noise in
    ``[1 - noise, 1 + noise]`` and an optional one-time LGD method change.
    """

    name: str = "custom"
    seed: int = 0
    n_exposures: int = 100
    term: int = 5
    period_unit: str = "year"
    principal: float = 100.0
    rate: float = 0.05
    amortizing: bool = False
    hazard_shape: str = "neutral"
    delay: int = 1
    risk_level: float = 0.01
    risk_level_drift: float = 0.0
    staging_threshold: float = 2.5
    correlation: float = 0.0
    pd: float = 0.02
    lgd: float = 0.45
    lgd_bias: float = 1.0
    ead_drift: float = 0.0
    n_periods: int = 12
    npl_horizon: int = 6
    coll_share: float = 0.3
    unsec_share: float = 0.3
    gtee_share: float = 0.0
    cure_share: float = 0.0
    recovery_timing: tuple[float, ...] = (1.0,)
    coll_timing: tuple[float, ...] = (1.0,)
    recovery_noise: float = 0.0
    new_defaults_per_period: int = 0
    adjustment_period: int = -1
    adjustment_factor: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "recovery_timing", tuple(float(x) for x in self.recovery_timing))
        object.__setattr__(self, "coll_timing", tuple(float(x) for x in self.coll_timing))
        if self.hazard_shape not in HAZARD_SHAPES:
            raise InputError(f"hazard_shape must be one of {HAZARD_SHAPES}, got {self.hazard_shape!r}")
        if self.period_unit not in PERIODS_PER_YEAR:
            raise InputError(f"period_unit must be one of {sorted(PERIODS_PER_YEAR)}")
        if not 0.0 <= self.correlation < 1.0:
            raise InputError("correlation must lie in [0, 1)")
        if self.n_exposures < 0 or self.term < 1 or self.n_periods < 0 or self.npl_horizon < 1:
            raise InputError("counts must be non-negative and term, npl_horizon at least 1")
        if not 0.0 <= self.pd <= 1.0 or not 0.0 < self.lgd <= 1.0:
            raise InputError("pd must lie in [0, 1] and lgd in (0, 1]")
        if self.lgd_bias <= 0 or self.principal <= 0:
            raise InputError("lgd_bias and principal must be positive")
        for name in ("recovery_timing", "coll_timing"):
            timing = getattr(self, name)
            if not timing or any(x < 0 for x in timing) or abs(math.fsum(timing) - 1.0) > _SUM_TOL:
                raise InputError(f"{name} must be non-negative fractions summing to 1")
            if len(timing) > self.npl_horizon:
                raise InputError(f"{name} is longer than npl_horizon")
        shares = (self.coll_share, self.unsec_share, self.gtee_share)
        if any(s < 0 for s in shares) or not 0.0 <= self.cure_share <= 1.0:
            raise InputError("recovery shares must be non-negative and cure_share in [0, 1]")
        if not 0.0 <= self.recovery_noise <= 1.0:
            raise InputError("recovery_noise must lie in [0, 1]")
        # realized recoveries must never exceed the remaining balance
        if sum(shares) * (1.0 + self.recovery_noise) > 1.0 + _SUM_TOL:
            raise InputError("recovery shares times (1 + recovery_noise) must not exceed 1")
        if not 0.0 <= self.adjustment_factor < 1.0:
            raise InputError("adjustment_factor must lie in [0, 1)")

    @property
    def periods_per_year(self) -> int:
        return PERIODS_PER_YEAR[self.period_unit]

    @property
    def shape_name(self) -> str:
        return f"delayed-{self.delay}" if self.hazard_shape == "delayed_k" else self.hazard_shape

    def to_dict(self) -> dict:
        return asdict(self)


def exposure_stream(seed: int, k: int) -> np.random.Generator:
    """Substream for exposure k (k >= 0); the common factor uses ``common_stream``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(k + 1,))))


def common_stream(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(0,))))


def period_draws(seed: int, n_exposures: int, n_periods: int, offset: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Common-factor draws ``z[t]`` and idiosyncratic uniforms ``u[t, k]``."""
    z = common_stream(seed).standard_normal(n_periods)
    u = np.empty((n_periods, n_exposures))
    for k in range(n_exposures):
        u[:, k] = exposure_stream(seed, offset + k).random(n_periods)
    return z, u


def conditional_pd(pd: np.ndarray | float, correlation: float, z: float) -> np.ndarray:
    """Vasicek default probability given the common factor."""
    pd = np.asarray(pd, dtype=float)
    if correlation == 0.0:
        return pd
    with np.errstate(divide="ignore"):
        thr = stats.norm.ppf(pd)
    return stats.norm.cdf((thr - math.sqrt(correlation) * z) / math.sqrt(1.0 - correlation))


def default_indicator(pd: np.ndarray, correlation: float, z: float, u: np.ndarray) -> np.ndarray:
    """Gaussian single-factor threshold: default iff the latent asset value falls below Φ⁻¹(pd)."""
    pd = np.asarray(pd, dtype=float)
    if correlation == 0.0:
        return u < pd
    with np.errstate(divide="ignore"):
        thr = stats.norm.ppf(pd)
        eps = stats.norm.ppf(u)
    asset = math.sqrt(correlation) * z + math.sqrt(1.0 - correlation) * eps
    return asset < thr


# --- contract books -----------------------------------------------------------


@dataclass(frozen=True)
class Book:
    contracts: tuple[LoanContract, ...]
    profiles: tuple[RiskProfile, ...]
    default_time: np.ndarray  # 0 = survives, else the period of default
    period_pd: tuple[np.ndarray, ...] = field(repr=False)


def make_contract(config: ScenarioConfig, id: str, principal: float | None = None) -> LoanContract:
    """Bullet or annuity loan at the scenario rate."""
    p = config.principal if principal is None else principal
    i = annual_to_periodic(config.rate, config.periods_per_year)
    n = config.term
    if config.amortizing and i != 0.0:
        pay = p * i / (1.0 - (1.0 + i) ** -n)
        flows = [pay] * n
    elif config.amortizing:
        flows = [p / n] * n
    else:
        flows = [p * i] * (n - 1) + [p * (1.0 + i)]
    return LoanContract(id, p, tuple(flows), config.period_unit)


def scenario_profile(config: ScenarioConfig, contract: LoanContract) -> RiskProfile:
    r = config.risk_level / config.periods_per_year
    if config.hazard_shape == "neutral":
        return neutral_profile(contract, r)
    return profile_from_shape(contract, config.shape_name, r)


def generate_book(config: ScenarioConfig) -> Book:
    """Contracts with risk profiles and a true default time per exposure.

    The per-period conditional PD is ``r_t / lgd`` with ``r_t = R_t / GCA_t``,
    so a bullet-shaped profile pushes defaults towards maturity.
    """
    contracts, profiles, pds = [], [], []
    default_time = np.zeros(config.n_exposures, dtype=int)
    z = common_stream(config.seed).standard_normal(config.term)
    for k in range(config.n_exposures):
        rng = exposure_stream(config.seed, k)
        principal = round(float(config.principal * rng.uniform(0.5, 1.5)), 2)
        contract = make_contract(config, f"L{k:05d}", principal)
        profile = scenario_profile(config, contract)
        gca = gca_trajectory(contract, solve_effective_rate(contract).rate)
        losses = profile.padded(contract.term)
        with np.errstate(divide="ignore", invalid="ignore"):
            r_t = np.where(gca[:-1] > 0, losses / np.where(gca[:-1] > 0, gca[:-1], 1.0), 0.0)
        pd_t = np.clip(r_t / config.lgd, 0.0, 1.0)
        u = rng.random(contract.term)
        for t in range(contract.term):
            if default_indicator(pd_t[t : t + 1], config.correlation, z[t], u[t : t + 1])[0]:
                default_time[k] = t + 1
                break
        contracts.append(contract)
        profiles.append(profile)
        pds.append(pd_t)
    return Book(tuple(contracts), tuple(profiles), default_time, tuple(pds))


# --- performing-book snapshots -----------------------------------------------


def initial_snapshot(config: ScenarioConfig, as_of: int = 0) -> PortfolioSnapshot:
    """A performing book with EADs drawn around the scenario principal."""
    records = []
    for k in range(config.n_exposures):
        rng = exposure_stream(config.seed, k)
        ead = round(float(config.principal * rng.uniform(0.5, 1.5)), 2)
        records.append(_performing(f"E{k:05d}", ead, config.pd, config.lgd))
    return PortfolioSnapshot(as_of, tuple(records))


def _performing(id: str, ead: float, pd: float, lgd: float) -> ExposureRecord:
    return ExposureRecord(id, True, ead, lgd, pd, pd * ead * lgd)


def roll_forward(
    bop: PortfolioSnapshot,
    u: np.ndarray,
    z: float,
    config: ScenarioConfig,
    replenish: bool = False,
) -> PortfolioSnapshot:
    """One period of the book: defaults, write-offs and (optionally) new volume.

    ``u`` holds one uniform per BOP exposure in id order. Performing
    exposures default under the single-factor threshold model with the
    per-period PD implied by their 12-month PD. New defaults carry
    default-time EAD/LGD and an EOP LGD scaled by ``lgd_bias``. Defaults of
    the previous period are written off (EAD x LGD) and stay in the EOP
    snapshot with zero EAD; exposures written off earlier leave the book.
    """
    ppy = config.periods_per_year
    exposures = bop.exposures
    if len(u) != len(exposures):
        raise InputError("one uniform per BOP exposure is required")
    pd_period = np.array([1.0 - (1.0 - e.pd) ** (1.0 / ppy) if e.performing else 0.0 for e in exposures])
    defaults = default_indicator(pd_period, config.correlation, z, np.asarray(u))
    out, exits = [], 0
    for e, d in zip(exposures, defaults):
        if e.performing and d:
            ead_def = e.ead * (1.0 + config.ead_drift)
            lgd_eop = min(1.0, e.lgd * config.lgd_bias)
            out.append(ExposureRecord(e.id, False, ead_def, lgd_eop, 1.0, ead_def * lgd_eop, 0.0, ead_def, e.lgd))
        elif e.performing:
            out.append(e)
        elif e.ead > 0:
            out.append(ExposureRecord(e.id, False, 0.0, e.lgd, 1.0, 0.0, e.ead * e.lgd))
        else:
            exits += 1
    if replenish:
        for k in range(exits):
            out.append(_performing(f"N{bop.as_of + 1:04d}-{k:04d}", config.principal, config.pd, config.lgd))
    return PortfolioSnapshot(bop.as_of + 1, tuple(out))


def simulate_snapshots(config: ScenarioConfig, replenish: bool = True) -> list[PortfolioSnapshot]:
    """``n_periods + 1`` snapshots of a performing book rolled forward."""
    snaps = [initial_snapshot(config)]
    z = common_stream(config.seed).standard_normal(config.n_periods)
    streams: dict[str, np.random.Generator] = {}
    for t in range(config.n_periods):
        bop = snaps[-1]
        u = np.empty(len(bop.exposures))
        for j, e in enumerate(bop.exposures):
            if e.id not in streams:
                # new volume gets a stream keyed past the initial exposures
                key = int(e.id[1:]) if e.id.startswith("E") else config.n_exposures + len(streams)
                streams[e.id] = exposure_stream(config.seed, key)
            u[j] = streams[e.id].random()
        snaps.append(roll_forward(bop, u, float(z[t]), config, replenish))
    return snaps


# --- fast loss series -----------------------------------------------------------


def simulate_loss_series(
    exposure_count: int,
    pd_period: float,
    ead_lgd_weights: Sequence[float],
    n_periods: int,
    correlation: float = 0.0,
    seed: int = 0,
    n_series: int = 1,
) -> np.ndarray:
    """Loss series ``(n_series, n_periods)`` under the conditional binomial model.

    Each period draws a common factor, the default count from
    Binomial(n, pd(z)) and each default's EAD x LGD from the weights (with
    replacement). Correlation 0 reproduces the independent null model.
    """
    weights = np.asarray(ead_lgd_weights, dtype=float)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    z = rng.standard_normal((n_series, n_periods))
    p = conditional_pd(np.full(z.shape, pd_period), correlation, z) if correlation > 0 else np.full(z.shape, pd_period)
    counts = rng.binomial(exposure_count, p)
    total = int(counts.sum())
    picks = weights[rng.integers(0, weights.size, size=total)]
    owners = np.repeat(np.arange(counts.size), counts.ravel())
    return np.bincount(owners, weights=picks, minlength=counts.size).reshape(counts.shape)


def portfolio_weights(config: ScenarioConfig) -> np.ndarray:
    """EAD x LGD per exposure of the initial snapshot."""
    return np.array([e.ead * e.lgd for e in initial_snapshot(config).exposures])


# --- NPL books --------------------------------------------------------------------


@dataclass
class _Workout:
    id: str
    entry: int
    gca0: float
    coll: np.ndarray  # expected nominal flows per age 1..H
    unsec: np.ndarray
    gtee: np.ndarray
    noise: np.ndarray  # realized / expected per age
    cure_age: int  # 0 = never cures


def _spread(total: float, timing: Sequence[float], horizon: int, start: int = 0) -> np.ndarray:
    out = np.zeros(horizon)
    w = np.asarray(timing, dtype=float)
    span = min(w.size, horizon - start)
    if span <= 0:
        out[-1] = total
        return out
    w = w[:span] / w[:span].sum()
    out[start : start + span] = total * w
    return out


def _workout(config: ScenarioConfig, k: int, entry: int) -> _Workout:
    rng = exposure_stream(config.seed, k)
    h = config.npl_horizon
    gca0 = round(float(config.principal * rng.uniform(0.5, 1.5)), 2)
    cure_age = 0
    if config.cure_share > 0 and rng.random() < config.cure_share:
        cure_age = int(rng.integers(1, min(3, h - 1) + 1)) if h > 1 else 0
    noise = 1.0 + config.recovery_noise * (2.0 * rng.random(h) - 1.0)
    coll = _spread(config.coll_share * gca0, config.coll_timing, h)
    unsec = _spread(config.unsec_share * gca0, config.recovery_timing, h)
    gtee = _spread(config.gtee_share * gca0, config.recovery_timing, h)
    if cure_age:
        # a cure repays the unsecured part after the cure date
        unsec = _spread(config.unsec_share * gca0, [1.0] * (h - cure_age), h, start=cure_age)
    return _Workout(f"D{k:05d}", entry, gca0, coll, unsec, gtee, noise, cure_age)


def _pv_remaining(flows: np.ndarray, age: int, i: float) -> float:
    rest = flows[age:]
    if rest.size == 0:
        return 0.0
    return float(np.dot(rest, (1.0 + i) ** -np.arange(1, rest.size + 1)))


def _observe(pool: str, w: _Workout, t: int, i: float, unsec_scale: float = 1.0) -> tuple[PoolObservation | None, float]:
    """Observation at date t and the cash received in the period ending at t.

    GCA falls by realized cash; the split parameters are backed out of the
    expected remaining flows so that the observation reproduces their PVs.
    """
    age = t - w.entry
    h = w.coll.size
    if age > h:
        return None, 0.0
    realized = (w.coll + w.unsec * unsec_scale + w.gtee) * w.noise
    rec_now = float(realized[age - 1]) if age >= 1 else 0.0
    gca = w.gca0 - float(realized[:age].sum())
    if age == h:
        return PoolObservation(pool, t, w.id, 0.0, 0.0, 0.0, 1.0, False, max(gca, 0.0)), rec_now
    coll = _pv_remaining(w.coll, age, i)
    uns = _pv_remaining(w.unsec, age, i)
    gte = _pv_remaining(w.gtee, age, i)
    if w.cure_age and age >= w.cure_age:
        lgd_u = 1.0 - (coll + uns + gte) / gca
        return PoolObservation(pool, t, w.id, gca, 0.0, _unit(lgd_u), 1.0, True), rec_now
    u_part = gca - coll
    lgd_u = 1.0 - uns / u_part if u_part > 0 else 0.0
    lost = lgd_u * u_part
    pd = 1.0 - gte / lost if lost > 0 else 1.0
    return PoolObservation(pool, t, w.id, gca, coll, _unit(lgd_u), _unit(pd)), rec_now


def _unit(x: float) -> float:
    # clip rounding noise at the [0, 1] boundaries
    return min(1.0, max(0.0, x))


def _bias_scale(config: ScenarioConfig, w: _Workout, i: float) -> float:
    """Factor on unsecured cash that makes the true lgd_u ``lgd_bias`` times the estimate."""
    if config.lgd_bias == 1.0:
        return 1.0
    u_part = w.gca0 - _pv_remaining(w.coll, 0, i)
    uns = _pv_remaining(w.unsec, 0, i)
    if uns <= 0 or u_part <= 0:
        return 1.0
    lgd_u = 1.0 - uns / u_part
    return max(0.0, 1.0 - config.lgd_bias * lgd_u) / (1.0 - lgd_u)


def generate_static_pool(config: ScenarioConfig, pool_id: str = "P0") -> StaticPool:
    """A cohort of ``n_exposures`` defaults observed for ``npl_horizon`` periods.

    Expected recoveries are fixed at formation; realized cash is the
    expectation times noise (unsecured cash also times the LGD bias factor),
    so with no noise and no bias every recovery arrives exactly as expected.
    """
    i = annual_to_periodic(config.rate, config.periods_per_year)
    workouts = [_workout(config, k, 0) for k in range(config.n_exposures)]
    scales = [_bias_scale(config, w, i) for w in workouts]
    history, recovered = [], []
    for t in range(config.npl_horizon + 1):
        obs, cash = [], []
        for w, s in zip(workouts, scales):
            o, rec = _observe(pool_id, w, t, i, s)
            if o is not None:
                obs.append(o)
                cash.append(rec)
        history.append(PoolState(t, tuple(obs)))
        recovered.append(math.fsum(cash))
    return StaticPool(
        pool_id,
        (0, 0),
        frozenset(w.id for w in workouts),
        tuple(history),
        rate=config.rate,
        periods_per_year=config.periods_per_year,
        recovered=tuple(recovered),
    )


def generate_npl_book(config: ScenarioConfig) -> list[PoolState]:
    """Monthly (or yearly) states of an open NPL book.

    ``new_defaults_per_period`` exposures default at every date from 0 to
    ``n_periods - 1``; observations carry their default date's cohort as
    pool id. At ``adjustment_period`` the LGD method changes: the
    expected remaining unsecured recoveries of every open workout drop by
    ``adjustment_factor`` and realized cash follows the new expectation.
    """
    i = annual_to_periodic(config.rate, config.periods_per_year)
    workouts: list[_Workout] = []
    states = []
    for t in range(config.n_periods + 1):
        if t < config.n_periods:
            base = len(workouts)
            workouts.extend(_workout(config, base + j, t) for j in range(config.new_defaults_per_period))
        if t == config.adjustment_period:
            for w in workouts:
                age = t - w.entry
                if 0 <= age < w.unsec.size:
                    w.unsec[age:] *= 1.0 - config.adjustment_factor
        obs = []
        for w in workouts:
            if w.entry > t:
                continue
            o, _ = _observe(f"V{w.entry:04d}", w, t, i)
            if o is not None:
                obs.append(o)
        states.append(PoolState(t, tuple(obs)))
    return states


# --- canned figure scenarios ---------------------------------------------------------


def figure_scenarios(name: str) -> ScenarioConfig:
    """Validated configs for the illustrative figure scenarios."""
    key = "fig7_2" if name == "fig7_3" else name
    if key == "fig4_1":
        return ScenarioConfig(name="fig4_1", n_exposures=1, term=5, hazard_shape="delayed_k", delay=1, risk_level=0.01)
    if key == "fig5_1":
        return ScenarioConfig(
            name="fig5_1",
            n_exposures=1,
            term=60,
            period_unit="month",
            hazard_shape="neutral",
            risk_level=0.01,
            risk_level_drift=0.01 / 12,
            staging_threshold=2.5,
        )
    if key == "fig7_1":
        return ScenarioConfig(
            name="fig7_1",
            n_exposures=60,
            npl_horizon=6,
            coll_share=0.35,
            unsec_share=0.3,
            gtee_share=0.03,
            cure_share=0.3,
            recovery_timing=(0.45, 0.3, 0.15, 0.1),
            coll_timing=(0.0, 0.1, 0.2, 0.3, 0.25, 0.15),
        )
    if key == "fig7_2":
        return ScenarioConfig(
            name="fig7_2",
            period_unit="month",
            n_periods=60,
            npl_horizon=24,
            new_defaults_per_period=20,
            coll_share=0.3,
            unsec_share=0.3,
            gtee_share=0.02,
            recovery_noise=0.3,
            recovery_timing=tuple([1.0 / 12] * 12),
            coll_timing=tuple([0.0] * 12 + [1.0 / 12] * 12),
            adjustment_period=36,
            adjustment_factor=0.3,
        )
    raise InputError(f"unknown figure scenario {name!r}; expected fig4_1, fig5_1, fig7_1, fig7_2 or fig7_3")


FIGURES = ("fig4_1", "fig5_1", "fig7_1", "fig7_2", "fig7_3")


@dataclass(frozen=True)
class DelayGaps:
    t: np.ndarray
    neutral_gap: np.ndarray  # GCA_t - iACV_t
    delayed_gap: np.ndarray
    el_12m: float  # at origination


def fig4_1_gaps(config: ScenarioConfig | None = None) -> DelayGaps:
    """GCA minus iACV for a neutral and a delayed profile at the same risk level."""
    config = config or figure_scenarios("fig4_1")
    contract = make_contract(config, "F41")
    r = config.risk_level / config.periods_per_year
    neutral = build_trajectory(contract, neutral_profile(contract, r))
    delayed = build_trajectory(contract, scenario_profile(config, contract))
    return DelayGaps(
        t=neutral.periods,
        neutral_gap=neutral.gca - neutral.iacv,
        delayed_gap=delayed.gca - delayed.iacv,
        el_12m=float(neutral.el_12m[0]),
    )


def fig5_1_path(config: ScenarioConfig | None = None) -> DriftPath:
    config = config or figure_scenarios("fig5_1")
    contract = make_contract(config, "F51")
    staging = StagingConfig(relative_threshold=config.staging_threshold)
    return drift_path(contract, config.risk_level, config.risk_level_drift * config.periods_per_year, staging)


def config_fields() -> tuple[str, ...]:
    return tuple(f.name for f in fields(ScenarioConfig))
