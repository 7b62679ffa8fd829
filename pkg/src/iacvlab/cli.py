"""Command-line entry points: value, dashboard, vintage, simulate.

Exit codes: 0 success, 1 analytic warning under ``--strict``, 2 input error.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from collections import defaultdict
from dataclasses import fields
from pathlib import Path
from typing import Sequence, get_type_hints

from . import __version__
from .dashboards import LGD_FLAG_THRESHOLD, PortfolioSnapshot, dashboard_report, pl_split
from .errors import AnalyticWarning, IacvError, InputError, PoolViolationError
from .io import (
    RunManifest,
    config_value,
    digest_config,
    digest_file,
    load_config,
    load_contracts,
    load_observations,
    load_pools,
    load_profiles,
    load_recoveries,
    load_snapshots,
    pretty_table,
    resolve_timestamp,
    write_csv,
)
from .npl import STACK_ORDER, PoolState, StaticPool, static_pool_tel, vintage_report
from .simulator import (
    FIGURES,
    ScenarioConfig,
    figure_scenarios,
    generate_book,
    generate_npl_book,
    generate_static_pool,
    simulate_snapshots,
)
from .valuation import RiskProfile, aggregate_delta, build_trajectory

EXIT_OK, EXIT_WARN, EXIT_INPUT = 0, 1, 2

TRAJECTORY_HEADER = ("id", "t", "gca", "iacv", "nca", "provision", "bucket", "gca0", "iacv0", "nca0", "delta")


def _manifest(args, command: str, inputs: dict[str, str], config: dict, seed: int | None = None) -> RunManifest:
    return RunManifest(
        command=command,
        inputs={name: digest_file(p) for name, p in sorted(inputs.items())},
        config_digest=digest_config(config),
        seed=seed,
        version=__version__,
        timestamp=resolve_timestamp(args.timestamp),
    )


# --- value ------------------------------------------------------------------------


def cmd_value(args, config) -> None:
    contracts = load_contracts(args.contracts)
    profiles = load_profiles(args.profiles)
    unknown = sorted(set(profiles) - {c.id for c in contracts})
    if unknown:
        raise InputError(f"{args.profiles}: profiles for unknown contracts {unknown[:5]}")
    convention = config_value(config, "valuation", "el_convention", "annualized")
    bucket = config_value(config, "valuation", "bucket", 1)
    rows, trajectories = [], []
    for c in contracts:
        tr = build_trajectory(c, profiles.get(c.id, RiskProfile(())), bucket, convention)
        trajectories.append(tr)
        for t in range(tr.gca.size):
            rows.append(
                (c.id, t, tr.gca[t], tr.iacv[t], tr.nca[t], tr.provision[t], int(tr.bucket[t]),
                 tr.gca0[t], tr.iacv0[t], tr.nca0[t], tr.delta[t])
            )
    manifest = _manifest(args, "value", {"contracts": args.contracts, "profiles": args.profiles}, config)
    out = Path(args.out)
    write_csv(out / args.output, TRAJECTORY_HEADER, rows, manifest)
    agg = aggregate_delta(trajectories)
    stem = Path(args.output).stem
    write_csv(
        out / f"{stem}_aggregate.csv",
        ("t", "delta_sum", "delta_weighted_mean"),
        zip(agg["t"].tolist(), agg["sum"].tolist(), agg["weighted_mean"].tolist()),
        manifest,
    )


# --- dashboard ----------------------------------------------------------------------


def _pairs(args) -> list[tuple[PortfolioSnapshot, PortfolioSnapshot]]:
    first = load_snapshots(args.bop)
    second = load_snapshots(args.eop) if args.eop else first
    if args.eop:
        bop = _pick(first, args.bop_as_of, args.bop, "BOP")
        eop = _pick(second, args.eop_as_of, args.eop, "EOP")
        return [(bop, eop)]
    dates = sorted(first)
    if args.bop_as_of is not None or args.eop_as_of is not None:
        b = args.bop_as_of if args.bop_as_of is not None else dates[0]
        e = args.eop_as_of if args.eop_as_of is not None else dates[-1]
        return [(_pick(first, b, args.bop, "BOP"), _pick(first, e, args.bop, "EOP"))]
    if len(dates) < 2:
        raise InputError(f"{args.bop}: need at least two as_of dates (or an EOP file)")
    return [(first[a], first[b]) for a, b in zip(dates, dates[1:])]


def _pick(snaps: dict[int, PortfolioSnapshot], as_of: int | None, path, label) -> PortfolioSnapshot:
    if as_of is None:
        if len(snaps) != 1:
            raise InputError(f"{path}: {len(snaps)} as_of dates, select the {label} with --{label.lower()}-as-of")
        return next(iter(snaps.values()))
    if as_of not in snaps:
        raise InputError(f"{path}: no snapshot with as_of {as_of}")
    return snaps[as_of]


def cmd_dashboard(args, config) -> None:
    ppy = 12 if args.monthly else config_value(config, "dashboard", "periods_per_year", 1)
    threshold = config_value(config, "dashboard", "lgd_flag_threshold", LGD_FLAG_THRESHOLD)
    loss_mode = config_value(config, "dashboard", "loss_mode", "eop")
    header = ["bop", "eop", "pl_dashboard"]
    if args.split:
        header += ["delta_pd", "delta_ead", "delta_lgd", "split_residual", "lgd_flag"]
    header += ["npl_dashboard", "el_pl_eop", "ior", "cor", "delta_shortfall", "loss", "decomposition_residual"]
    rows = []
    for bop, eop in _pairs(args):
        if args.split:
            pl_split(bop, eop, threshold)  # surfaces missing default-time values as a warning
        r = dashboard_report(bop, eop, ppy, lgd_flag_threshold=threshold, loss_mode=loss_mode)
        row = [bop.as_of, eop.as_of, r.pl_dashboard]
        if args.split:
            row += [r.delta_pd, r.delta_ead, r.delta_lgd, r.split_residual, r.lgd_flag]
        row += [r.npl_dashboard, r.el_pl_eop, r.ior, r.cor, r.delta_shortfall, r.loss, r.decomposition_residual]
        rows.append(row)
        if r.lgd_flag:
            warnings.warn(f"period {bop.as_of}->{eop.as_of}: LGD deviation exceeds the flag threshold", AnalyticWarning)
        if abs(r.decomposition_residual) > 1e-9 * max(1.0, eop.total_ead):
            warnings.warn(
                f"period {bop.as_of}->{eop.as_of}: IoR decomposition residual {r.decomposition_residual!r}",
                AnalyticWarning,
            )
    inputs = {"bop": args.bop} | ({"eop": args.eop} if args.eop else {})
    manifest = _manifest(args, "dashboard", inputs, config)
    write_csv(Path(args.out) / args.output, header, rows, manifest)
    print(pretty_table(header, rows))


# --- vintage ------------------------------------------------------------------------


def cmd_vintage(args, config) -> None:
    members = load_pools(args.pools)
    recoveries = load_recoveries(args.recoveries)
    observations = load_observations(args.observations)
    rate = config_value(config, "vintage", "rate", 0.05)
    ppy = config_value(config, "vintage", "periods_per_year", 1)
    accrual = config_value(config, "vintage", "gca_accrual", False)

    by_pool: dict[str, dict[int, list]] = defaultdict(lambda: defaultdict(list))
    for o in observations:
        if o.id not in members:
            raise PoolViolationError(f"{args.observations}: exposure {o.id} in pool {o.pool} is not a pool member")
        by_pool[o.pool][o.as_of].append(o)
    pool_of: dict[str, str] = {}
    for o in observations:
        if pool_of.setdefault(o.id, o.pool) != o.pool:
            raise PoolViolationError(f"{args.observations}: exposure {o.id} appears in pools {pool_of[o.id]} and {o.pool}")
    unknown = sorted(set(recoveries) - set(members))
    if unknown:
        raise InputError(f"{args.recoveries}: recoveries for non-members {unknown[:5]}")

    vintage_rows, tel_rows = [], []
    for pool_id in sorted(by_pool):
        dates = sorted(by_pool[pool_id])
        history = tuple(PoolState(d, tuple(by_pool[pool_id][d])) for d in dates)
        ids = {o.id for s in history for o in s.observations}
        defaults = [members[i] for i in ids]
        recovered = None
        if recoveries:
            recovered = tuple(
                sum(recoveries.get(i, {}).get(d, 0.0) for i in sorted(ids)) if k else 0.0
                for k, d in enumerate(dates)
            )
        # the cohort is frozen at the first date: later joiners violate the pool
        pool = StaticPool(
            pool_id, (min(defaults), max(defaults)), history[0].ids, history, rate, ppy, accrual, recovered
        )
        for row in vintage_report(pool):
            for comp in STACK_ORDER + ("recovered", "gca", "tel"):
                vintage_rows.append((pool_id, row.as_of, comp, getattr(row, comp)))
        tel = static_pool_tel(pool)
        for k in range(tel.as_of.size):
            tel_rows.append(
                (pool_id, int(tel.as_of[k]), tel.el[k], tel.cumulative_wo[k], tel.cumulative_interest[k],
                 tel.dashboard[k], tel.tel[k], tel.tel_from_dashboards[k])
            )
    inputs = {"pools": args.pools, "recoveries": args.recoveries, "observations": args.observations}
    manifest = _manifest(args, "vintage", inputs, config)
    out = Path(args.out)
    write_csv(out / "vintage.csv", ("pool", "as_of", "component", "value"), vintage_rows, manifest)
    write_csv(
        out / "tel.csv",
        ("pool", "as_of", "el", "cumulative_wo", "cumulative_interest", "npl_dashboard", "tel", "tel_from_dashboards"),
        tel_rows,
        manifest,
    )


# --- simulate -----------------------------------------------------------------------


def scenario_from_config(section: dict[str, str], base: ScenarioConfig | None = None) -> ScenarioConfig:
    """ScenarioConfig from string values; tuples are comma-separated."""
    values = (base or ScenarioConfig()).to_dict()
    hints = get_type_hints(ScenarioConfig)
    names = {f.name for f in fields(ScenarioConfig)}
    for key, raw in section.items():
        if key not in names:
            raise InputError(f"config [simulate]: unknown key {key!r}")
        kind = hints[key]
        try:
            if kind is bool:
                values[key] = config_value({"s": {key: raw}}, "s", key, False, bool)
            elif kind in (int, float, str):
                values[key] = kind(raw)
            else:
                values[key] = tuple(float(x) for x in raw.split(",") if x.strip())
        except ValueError:
            raise InputError(f"config [simulate] {key}: cannot read {raw!r}") from None
    return ScenarioConfig(**values)


def _book_rows(cfg: ScenarioConfig):
    book = generate_book(cfg)
    contracts, profiles = [], []
    for c, p in zip(book.contracts, book.profiles):
        contracts.extend((c.id, c.period_unit, c.principal, t, cf) for t, cf in enumerate(c.cash_flows, start=1))
        profiles.extend((c.id, t, r) for t, r in enumerate(p.expected_losses, start=1))
    return contracts, profiles


def _snapshot_rows(cfg: ScenarioConfig):
    rows = []
    for s in simulate_snapshots(cfg):
        for e in s.exposures:
            rows.append((s.as_of, e.id, e.performing, e.ead, e.lgd, e.pd, e.el, e.wo_in_period, e.ead_def, e.lgd_def))
    return rows


def _npl_rows(cfg: ScenarioConfig):
    if cfg.new_defaults_per_period > 0:
        states = generate_npl_book(cfg)
    else:
        states = list(generate_static_pool(cfg).history)
    pools, recoveries, observations = {}, [], []
    prev: dict[str, float] = {}
    for s in states:
        for o in s.observations:
            pools.setdefault(o.id, s.as_of)
            if o.id in prev:
                # non-accruing GCA: the fall in GCA not written off is cash received
                rec = prev[o.id] - o.gca - o.wo
                recoveries.append((o.id, s.as_of, rec))
            prev[o.id] = o.gca
            observations.append((o.pool, o.as_of, o.id, o.gca, o.coll, o.lgd_u, o.guarantor_pd, o.cured, o.wo))
    return sorted(pools.items()), recoveries, observations


def cmd_simulate(args, config) -> None:
    if args.figure is not None and args.figure not in FIGURES:
        raise InputError(f"unknown figure {args.figure!r}; choose from {', '.join(FIGURES)}")
    base = figure_scenarios(args.figure) if args.figure else None
    cfg = scenario_from_config(config.get("simulate", {}), base)
    if args.seed is not None:
        cfg = ScenarioConfig(**(cfg.to_dict() | {"seed": args.seed}))
    manifest = _manifest(args, "simulate", {}, config | {"scenario": {k: str(v) for k, v in cfg.to_dict().items()}}, cfg.seed)
    out = Path(args.out)
    if cfg.name in ("fig7_1", "fig7_2") or args.figure in ("fig7_1", "fig7_2", "fig7_3"):
        pools, recoveries, observations = _npl_rows(cfg)
        write_csv(out / "pools.csv", ("id", "default_date"), pools, manifest)
        write_csv(out / "recoveries.csv", ("id", "t", "rec"), recoveries, manifest)
        write_csv(
            out / "observations.csv",
            ("pool", "as_of", "id", "gca", "coll", "lgd_u", "guarantor_pd", "cured", "wo"),
            observations,
            manifest,
        )
        return
    contracts, profiles = _book_rows(cfg)
    write_csv(out / "contracts.csv", ("id", "period_unit", "principal", "t", "cf"), contracts, manifest)
    write_csv(out / "profiles.csv", ("id", "t", "R"), profiles, manifest)
    write_csv(
        out / "snapshots.csv",
        ("as_of", "id", "performing", "ead", "lgd", "pd", "el", "wo_in_period", "ead_def", "lgd_def"),
        _snapshot_rows(cfg),
        manifest,
    )


# --- entry point -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file (overridable via IACVLAB_<SECTION>__<KEY>)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--strict", action="store_true", help="exit 1 when an analytic warning is raised")
    common.add_argument("--timestamp", help="manifest timestamp (default: SOURCE_DATE_EPOCH, else now)")

    parser = argparse.ArgumentParser(prog="iacvlab", description="Impairment valuation and EL backtesting toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("value", parents=[common], help="GCA/iACV/NCA trajectories and Δ_t")
    p.add_argument("contracts")
    p.add_argument("profiles")
    p.add_argument("--output", default="trajectories.csv")
    p.set_defaults(func=cmd_value)

    p = sub.add_parser("dashboard", parents=[common], help="PL/NPL dashboards and IoR")
    p.add_argument("bop", help="snapshot CSV (all dates, or the BOP date)")
    p.add_argument("eop", nargs="?", help="optional EOP snapshot CSV")
    p.add_argument("--bop-as-of", type=int)
    p.add_argument("--eop-as-of", type=int)
    p.add_argument("--monthly", action="store_true", help="scale the performing EL by 1/12")
    p.add_argument("--split", action="store_true", help="emit the PD/EAD/LGD split")
    p.add_argument("--output", default="dashboard.csv")
    p.set_defaults(func=cmd_dashboard)

    p = sub.add_parser("vintage", parents=[common], help="static-pool vintage and TEL")
    p.add_argument("pools")
    p.add_argument("recoveries")
    p.add_argument("observations")
    p.set_defaults(func=cmd_vintage)

    p = sub.add_parser("simulate", parents=[common], help="synthetic books and figure scenarios")
    p.add_argument("--figure", help=f"one of {', '.join(FIGURES)}")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", AnalyticWarning)
        try:
            config = load_config(args.config)
            args.func(args, config)
        except IacvError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INPUT
    raised = [w for w in caught if issubclass(w.category, AnalyticWarning)]
    for w in raised:
        print(f"warning: {w.message}", file=sys.stderr)
    for w in caught:
        if not issubclass(w.category, AnalyticWarning):
            warnings.showwarning(w.message, w.category, w.filename, w.lineno)
    return EXIT_WARN if raised and args.strict else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
