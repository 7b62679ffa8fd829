"""Impact of Risk, PL/NPL Dashboards, the Loss series and the naive binomial
null test for default clustering."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .errors import (
    CadenceGapError,
    DomainError,
    InputError,
    PartialSplitWarning,
    PartitionError,
    UnmatchedExposureError,
)

EL_TOL = 1e-9
LGD_FLAG_THRESHOLD = 0.2


@dataclass(frozen=True)
class ExposureRecord:
    id: str
    performing: bool
    ead: float
    lgd: float
    pd: float
    el: float
    wo_in_period: float = 0.0
    ead_def: float | None = None
    lgd_def: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.lgd <= 1.0:
            raise InputError(f"exposure {self.id}: lgd {self.lgd} outside [0, 1]")
        if not 0.0 <= self.pd <= 1.0:
            raise InputError(f"exposure {self.id}: pd {self.pd} outside [0, 1]")
        if self.ead < 0 or self.wo_in_period < 0:
            raise InputError(f"exposure {self.id}: ead and write-off must be non-negative")
        expected = self.pd * self.ead * self.lgd if self.performing else self.ead * self.lgd
        if abs(self.el - expected) > EL_TOL * max(1.0, self.ead):
            kind = "pd*ead*lgd" if self.performing else "ead*lgd"
            raise InputError(f"exposure {self.id}: el {self.el} != {kind} = {expected}")

    @property
    def has_default_values(self) -> bool:
        return self.ead_def is not None and self.lgd_def is not None


@dataclass(frozen=True)
class PortfolioSnapshot:
    """Exposure states at one observation date.

    Exposures that leave the book through write-off stay in the snapshot of
    the period in which the write-off happened (with their remaining EAD, if
    any); exposures absent from a later snapshot are treated as repaid.
    """

    as_of: int
    exposures: tuple[ExposureRecord, ...]

    def __post_init__(self) -> None:
        exposures = tuple(sorted(self.exposures, key=lambda e: e.id))
        ids = [e.id for e in exposures]
        if len(set(ids)) != len(ids):
            raise InputError(f"snapshot {self.as_of}: duplicate exposure ids")
        object.__setattr__(self, "exposures", exposures)

    def by_id(self) -> dict[str, ExposureRecord]:
        return {e.id: e for e in self.exposures}

    @property
    def total_ead(self) -> float:
        return math.fsum(e.ead for e in self.exposures)

    @property
    def total_el(self) -> float:
        return math.fsum(e.el for e in self.exposures)

    @property
    def total_wo(self) -> float:
        return math.fsum(e.wo_in_period for e in self.exposures)

    def el_performing(self) -> float:
        return math.fsum(e.el for e in self.exposures if e.performing)

    def el_non_performing(self) -> float:
        return math.fsum(e.el for e in self.exposures if not e.performing)


@dataclass(frozen=True)
class Partition:
    """Exposure ids grouped by status at BOP and EOP."""

    stay_pl: tuple[str, ...]
    new_npl: tuple[str, ...]
    old_npl: tuple[str, ...]
    cured: tuple[str, ...]
    originated: tuple[str, ...]
    exited: tuple[str, ...]


def partition(bop: PortfolioSnapshot, eop: PortfolioSnapshot) -> Partition:
    """Split exposures into performing, new NPL, old NPL, cures, new volume and exits.

    New NPL means performing at BOP and non-performing at EOP. A
    non-performing exposure at EOP that did not exist at BOP cannot be
    attributed and raises UnmatchedExposureError.
    """
    b, e = bop.by_id(), eop.by_id()
    groups: dict[str, list[str]] = {k: [] for k in ("stay_pl", "new_npl", "old_npl", "cured", "originated", "exited")}
    for id_, rec in e.items():
        prev = b.get(id_)
        if prev is None:
            if not rec.performing:
                raise UnmatchedExposureError(
                    f"exposure {id_} is non-performing at EOP ({eop.as_of}) but absent at BOP ({bop.as_of})"
                )
            groups["originated"].append(id_)
        elif prev.performing:
            groups["stay_pl" if rec.performing else "new_npl"].append(id_)
        else:
            groups["cured" if rec.performing else "old_npl"].append(id_)
    groups["exited"] = [id_ for id_ in b if id_ not in e]
    return Partition(**{k: tuple(sorted(v)) for k, v in groups.items()})


def impact_of_risk(cor: float, delta_shortfall: float) -> float:
    """IoR = cost of risk + change in regulatory shortfall."""
    return cor + delta_shortfall


def ior_from_el(el_eop: float, el_bop: float, wo: float) -> float:
    """IoR from the expected-loss roll-forward: ``EL^EOP - EL^BOP + wo``."""
    if wo < 0:
        raise InputError("write-offs must be non-negative")
    return el_eop - el_bop + wo


def el_roll_forward(el_bop: float, ior: float, wo: float) -> float:
    """Steering form ``EL^EOP = EL^BOP + IoR - wo``."""
    return el_bop + ior - wo


def shortfall(el: float, provisions: float) -> float:
    return el - provisions


def cost_of_risk(provisions_bop: float, provisions_eop: float, wo: float) -> float:
    """Change in the allowance plus write-offs charged in the period."""
    return provisions_eop - provisions_bop + wo


def _sum(values: Iterable[float]) -> float:
    return math.fsum(values)


LOSS_MODES = ("eop", "bop")


def new_npl_loss(bop: PortfolioSnapshot, eop: PortfolioSnapshot, mode: str = "eop") -> float:
    """Loss of the period's new defaults.

    ``eop``: ``EL_newNPL^EOP + wo_newNPL``. ``bop``: their ``EAD^BOP LGD^BOP``,
    which leaves out EAD and LGD migration between BOP and EOP.
    """
    part = partition(bop, eop)
    if mode == "eop":
        e = eop.by_id()
        return _sum(e[i].el + e[i].wo_in_period for i in part.new_npl)
    if mode == "bop":
        b = bop.by_id()
        return _sum(b[i].ead * b[i].lgd for i in part.new_npl)
    raise InputError(f"loss mode must be one of {LOSS_MODES}, got {mode!r}")


def pl_dashboard(bop: PortfolioSnapshot, eop: PortfolioSnapshot, periods_per_year: int = 1) -> float:
    """``EL_newNPL^EOP + wo_newNPL - EL_PL^BOP / periods_per_year``.

    ``periods_per_year = 12`` gives the monthly version with the annual
    performing EL scaled down linearly.
    """
    return new_npl_loss(bop, eop) - bop.el_performing() / periods_per_year


def monthly_pl_dashboard(bop: PortfolioSnapshot, eop: PortfolioSnapshot) -> float:
    return pl_dashboard(bop, eop, periods_per_year=12)


def npl_dashboard(bop: PortfolioSnapshot, eop: PortfolioSnapshot) -> float:
    """``EL_oldNPL^EOP + wo_oldNPL - EL_NPL^BOP`` on a snapshot pair."""
    part = partition(bop, eop)
    e = eop.by_id()
    return _sum(e[i].el + e[i].wo_in_period for i in part.old_npl) - bop.el_non_performing()


@dataclass(frozen=True)
class PLSplit:
    delta_pd: float
    delta_ead: float
    delta_lgd: float
    residual: float = 0.0
    missing_ids: tuple[str, ...] = ()
    lgd_flag: bool = False

    @property
    def total(self) -> float:
        return self.delta_pd + self.delta_ead + self.delta_lgd + self.residual


def pl_split(
    bop: PortfolioSnapshot,
    eop: PortfolioSnapshot,
    lgd_flag_threshold: float = LGD_FLAG_THRESHOLD,
) -> PLSplit:
    """PD / EAD / LGD split of the annual PL Dashboard.

    Write-offs of new defaults are part of the post-default loss and sit in
    the LGD term, so the three terms add up to the dashboard exactly. New
    defaults without default-time values contribute to the PD term with BOP
    values; the rest of their loss is reported as ``residual``.
    """
    part = partition(bop, eop)
    b, e = bop.by_id(), eop.by_id()
    pd_terms, ead_terms, lgd_terms, residual_terms, at_default = [], [], [], [], []
    missing = []
    for id_ in part.new_npl:
        before, after = b[id_], e[id_]
        bop_loss = before.ead * before.lgd
        eop_loss = after.ead * after.lgd + after.wo_in_period
        pd_terms.append(bop_loss)
        if after.has_default_values:
            def_loss = after.ead_def * after.lgd_def
            ead_terms.append(def_loss - bop_loss)
            lgd_terms.append(eop_loss - def_loss)
            at_default.append(def_loss)
        else:
            missing.append(id_)
            residual_terms.append(eop_loss - bop_loss)
    delta_pd = _sum(pd_terms) - bop.el_performing()
    delta_lgd = _sum(lgd_terms)
    if missing:
        warnings.warn(
            f"default-time EAD/LGD missing for {len(missing)} new default(s); "
            "their post-BOP change is reported as unsplit residual",
            PartialSplitWarning,
            stacklevel=2,
        )
    scale = _sum(at_default)
    flag = bool(scale > 0 and abs(delta_lgd) > lgd_flag_threshold * scale)
    return PLSplit(
        delta_pd=delta_pd,
        delta_ead=_sum(ead_terms),
        delta_lgd=delta_lgd,
        residual=_sum(residual_terms),
        missing_ids=tuple(missing),
        lgd_flag=flag,
    )


@dataclass(frozen=True)
class IoRDecomposition:
    el_pl_eop: float
    pl_dashboard: float
    npl_dashboard: float
    ior: float
    residual: float

    @property
    def components_total(self) -> float:
        return self.el_pl_eop + self.pl_dashboard + self.npl_dashboard


def ior_decomposition(bop: PortfolioSnapshot, eop: PortfolioSnapshot) -> IoRDecomposition:
    """``IoR = EL_PL^EOP + PL Dashboard + NPL Dashboard`` on a snapshot pair.

    EL_PL^EOP covers every exposure performing at EOP (stayers, new volume
    and cures). Write-offs booked on exposures that are performing at EOP
    belong to neither dashboard and show up as ``residual``.
    """
    part = partition(bop, eop)
    covered = set(part.stay_pl) | set(part.new_npl) | set(part.old_npl) | set(part.cured) | set(part.originated)
    if covered | set(part.exited) != set(bop.by_id()) | set(eop.by_id()):
        raise PartitionError("exposures could not be partitioned into PL / new NPL / old NPL")
    ior = ior_from_el(eop.total_el, bop.total_el, eop.total_wo)
    el_pl_eop = eop.el_performing()
    pld = pl_dashboard(bop, eop)
    npld = npl_dashboard(bop, eop)
    return IoRDecomposition(el_pl_eop, pld, npld, ior, ior - (el_pl_eop + pld + npld))


@dataclass(frozen=True)
class DashboardReport:
    period: tuple[int, int]
    pl_dashboard: float
    delta_pd: float
    delta_ead: float
    delta_lgd: float
    split_residual: float
    npl_dashboard: float
    el_pl_eop: float
    ior: float
    cor: float
    delta_shortfall: float
    loss: float
    decomposition_residual: float
    lgd_flag: bool = False
    missing_default_values: tuple[str, ...] = ()


def dashboard_report(
    bop: PortfolioSnapshot,
    eop: PortfolioSnapshot,
    periods_per_year: int = 1,
    provisions_bop: float | None = None,
    provisions_eop: float | None = None,
    lgd_flag_threshold: float = LGD_FLAG_THRESHOLD,
    loss_mode: str = "eop",
) -> DashboardReport:
    """All dashboard figures for one observation period.

    Provisions default to the expected loss at each date (zero shortfall),
    in which case cost of risk equals IoR.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PartialSplitWarning)
        split = pl_split(bop, eop, lgd_flag_threshold)
    dec = ior_decomposition(bop, eop)
    prov_b = bop.total_el if provisions_bop is None else provisions_bop
    prov_e = eop.total_el if provisions_eop is None else provisions_eop
    cor = cost_of_risk(prov_b, prov_e, eop.total_wo)
    d_sf = shortfall(eop.total_el, prov_e) - shortfall(bop.total_el, prov_b)
    return DashboardReport(
        period=(bop.as_of, eop.as_of),
        pl_dashboard=pl_dashboard(bop, eop, periods_per_year),
        delta_pd=split.delta_pd,
        delta_ead=split.delta_ead,
        delta_lgd=split.delta_lgd,
        split_residual=split.residual,
        npl_dashboard=dec.npl_dashboard,
        el_pl_eop=dec.el_pl_eop,
        ior=impact_of_risk(cor, d_sf),
        cor=cor,
        delta_shortfall=d_sf,
        loss=new_npl_loss(bop, eop, loss_mode),
        decomposition_residual=dec.residual,
        lgd_flag=split.lgd_flag,
        missing_default_values=split.missing_ids,
    )


def check_cadence(dates: Sequence[int]) -> int:
    """Common spacing of observation dates; raises CadenceGapError otherwise."""
    if len(dates) < 2:
        return 0
    steps = {b - a for a, b in zip(dates, dates[1:])}
    if len(steps) != 1 or min(steps) <= 0:
        raise CadenceGapError(f"observation dates are not equally spaced: {list(dates)}")
    return steps.pop()


def loss_series(snapshots: Sequence[PortfolioSnapshot], mode: str = "eop") -> np.ndarray:
    """``Loss_t = EL_newNPL^EOP + wo_newNPL`` for each consecutive snapshot pair."""
    check_cadence([s.as_of for s in snapshots])
    return np.array([new_npl_loss(a, b, mode) for a, b in zip(snapshots, snapshots[1:])], dtype=float)


def probability_weighted_el(scenario_losses: Sequence[float], weights: Sequence[float]) -> float:
    """Scenario-probability weighted expected loss."""
    losses = np.asarray(scenario_losses, dtype=float)
    w = np.asarray(weights, dtype=float)
    if losses.shape != w.shape or losses.size == 0:
        raise InputError("scenario losses and weights must have the same non-zero length")
    if np.any(w < 0):
        raise InputError("scenario weights must be non-negative")
    if abs(math.fsum(w) - 1.0) > 1e-9:
        raise InputError(f"scenario weights sum to {math.fsum(w)}, not 1")
    return math.fsum(losses * w)


# --- naive binomial null model ---------------------------------------------


def _draw_losses(
    seed_seq: np.random.SeedSequence,
    n_draws: int,
    exposure_count: int,
    pd_period: float,
    weights: np.ndarray,
) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(seed_seq))
    counts = rng.binomial(exposure_count, pd_period, size=n_draws)
    total = int(counts.sum())
    if total == 0:
        return np.zeros(n_draws)
    picks = weights[rng.integers(0, weights.size, size=total)]
    owners = np.repeat(np.arange(n_draws), counts)
    return np.bincount(owners, weights=picks, minlength=n_draws)


def reference_distribution(
    exposure_count: int,
    pd_period: float,
    ead_lgd_weights: Sequence[float],
    n_draws: int = 100_000,
    seed: int = 0,
    workers: int = 1,
) -> np.ndarray:
    """Monte Carlo draws of one period's loss under independent defaults.

    The default count is Binomial(n, pd); each default's EAD x LGD is drawn
    from ``ead_lgd_weights``. Draws are split into ``workers`` substreams
    spawned from ``seed``, so output is reproducible for a fixed worker count.
    Returned sorted.
    """
    if not 0.0 < pd_period < 1.0:
        raise DomainError(f"pd_period must lie in (0, 1), got {pd_period}")
    if exposure_count <= 0:
        raise InputError("exposure_count must be positive")
    weights = np.asarray(ead_lgd_weights, dtype=float)
    if weights.size == 0 or np.any(weights < 0):
        raise InputError("ead_lgd_weights must be non-empty and non-negative")
    workers = max(1, int(workers))
    sizes = [n_draws // workers + (1 if k < n_draws % workers else 0) for k in range(workers)]
    children = np.random.SeedSequence(seed).spawn(workers)
    if workers == 1:
        parts = [_draw_losses(children[0], sizes[0], exposure_count, pd_period, weights)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(
                pool.map(
                    lambda args: _draw_losses(args[0], args[1], exposure_count, pd_period, weights),
                    zip(children, sizes),
                )
            )
    return np.sort(np.concatenate(parts))


@dataclass(frozen=True)
class TestResult:
    p_values: np.ndarray
    flags: np.ndarray
    flagged_fraction: float
    alpha: float
    band: tuple[float, float]
    excess_p_value: float  # one-sided binomial test of the flag count vs alpha
    n_draws: int
    seed: int
    workers: int
    low_flags: np.ndarray = field(repr=False, default=None)
    high_flags: np.ndarray = field(repr=False, default=None)

    __test__ = False  # not a pytest class

    @property
    def excess_flags(self) -> bool:
        return self.excess_p_value < self.alpha


def two_sided_p_values(series: Sequence[float], reference: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Two-sided p-values of observations against sorted reference draws."""
    x = np.asarray(series, dtype=float)
    n = reference.size
    p_low = np.searchsorted(reference, x, side="right") / n
    p_high = (n - np.searchsorted(reference, x, side="left")) / n
    return np.minimum(1.0, 2.0 * np.minimum(p_low, p_high)), p_low, p_high


def binomial_null_test(
    series: Sequence[float],
    exposure_count: int,
    pd_period: float,
    ead_lgd_weights: Sequence[float],
    alpha: float = 0.05,
    n_draws: int = 100_000,
    seed: int = 0,
    workers: int = 1,
    reference: np.ndarray | None = None,
) -> TestResult:
    """Test a Loss series against the independent-default (binomial) portfolio model.

    Each period gets a two-sided Monte Carlo p-value; periods with p < alpha
    are flagged. Far more flags than ``alpha`` suggests default correlation.
    A precomputed sorted ``reference`` may be passed to test many series
    against the same portfolio.
    """
    if not 0.0 < pd_period < 1.0:
        raise DomainError(f"pd_period must lie in (0, 1), got {pd_period}")
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    x = np.asarray(series, dtype=float)
    if x.size < 12:
        raise InputError(f"series needs at least 12 periods, got {x.size}")
    if n_draws < 100_000 and reference is None:
        raise InputError("the reference distribution needs at least 100000 draws")
    if reference is None:
        reference = reference_distribution(exposure_count, pd_period, ead_lgd_weights, n_draws, seed, workers)
    p, p_low, p_high = two_sided_p_values(x, reference)
    flags = p < alpha
    k = int(flags.sum())
    return TestResult(
        p_values=p,
        flags=flags,
        flagged_fraction=k / x.size,
        alpha=alpha,
        band=(float(np.quantile(reference, alpha / 2)), float(np.quantile(reference, 1 - alpha / 2))),
        excess_p_value=float(stats.binom.sf(k - 1, x.size, alpha)),
        n_draws=reference.size,
        seed=seed,
        workers=workers,
        low_flags=flags & (p_low <= p_high),
        high_flags=flags & (p_high < p_low),
    )
