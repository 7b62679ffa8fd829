import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from conftest import _npl, _perf, random_snapshot_pair
from iacvlab.dashboards import (
    ExposureRecord,
    PortfolioSnapshot,
    binomial_null_test,
    check_cadence,
    cost_of_risk,
    dashboard_report,
    el_roll_forward,
    impact_of_risk,
    ior_decomposition,
    ior_from_el,
    loss_series,
    monthly_pl_dashboard,
    new_npl_loss,
    npl_dashboard,
    partition,
    pl_dashboard,
    pl_split,
    probability_weighted_el,
    reference_distribution,
    shortfall,
    two_sided_p_values,
)
from iacvlab.errors import (
    CadenceGapError,
    DomainError,
    InputError,
    PartialSplitWarning,
    UnmatchedExposureError,
)
from iacvlab.simulator import ScenarioConfig, portfolio_weights, simulate_loss_series


class TestRecords:
    def test_el_consistency(self):
        with pytest.raises(InputError):
            ExposureRecord("a", True, 100.0, 0.4, 0.1, 5.0)
        with pytest.raises(InputError):
            ExposureRecord("a", False, 100.0, 0.4, 1.0, 4.0)
        assert ExposureRecord("a", False, 100.0, 0.4, 1.0, 40.0).el == 40.0

    @pytest.mark.parametrize("kw", [dict(lgd=1.2), dict(pd=-0.1), dict(ead=-1.0)])
    def test_ranges(self, kw):
        base = dict(id="a", performing=True, ead=100.0, lgd=0.4, pd=0.1, el=4.0)
        base.update(kw)
        with pytest.raises(InputError):
            ExposureRecord(**base)

    def test_snapshot_sorting_and_duplicates(self):
        snap = PortfolioSnapshot(0, (_perf("b", 10, 0.5, 0.1), _perf("a", 10, 0.5, 0.1)))
        assert [e.id for e in snap.exposures] == ["a", "b"]
        with pytest.raises(InputError):
            PortfolioSnapshot(0, (_perf("a", 10, 0.5, 0.1), _perf("a", 10, 0.5, 0.1)))


class TestPartition:
    def test_groups(self):
        bop = PortfolioSnapshot(0, (_perf("s", 10, 0.5, 0.1), _perf("d", 10, 0.5, 0.1), _npl("o", 10, 0.5), _npl("c", 10, 0.5), _perf("x", 10, 0.5, 0.1)))
        eop = PortfolioSnapshot(1, (_perf("s", 10, 0.5, 0.1), _npl("d", 10, 0.5), _npl("o", 5, 0.5), _perf("c", 10, 0.5, 0.1), _perf("n", 10, 0.5, 0.1)))
        p = partition(bop, eop)
        assert p.stay_pl == ("s",) and p.new_npl == ("d",) and p.old_npl == ("o",)
        assert p.cured == ("c",) and p.originated == ("n",) and p.exited == ("x",)

    def test_unmatched_default(self):
        bop = PortfolioSnapshot(0, (_perf("a", 10, 0.5, 0.1),))
        eop = PortfolioSnapshot(1, (_perf("a", 10, 0.5, 0.1), _npl("z", 10, 0.5)))
        with pytest.raises(UnmatchedExposureError):
            partition(bop, eop)


class TestIoR:
    def test_identities(self):
        assert impact_of_risk(3.0, -1.0) == 2.0
        assert ior_from_el(50.0, 40.0, 5.0) == 15.0
        assert el_roll_forward(40.0, 15.0, 5.0) == 50.0
        assert shortfall(10.0, 8.0) == 2.0
        assert cost_of_risk(8.0, 9.0, 2.0) == 3.0
        with pytest.raises(InputError):
            ior_from_el(1.0, 1.0, -1.0)

    @given(st.integers(0, 2**32 - 1))
    def test_roll_forward_random(self, seed):
        bop, eop = random_snapshot_pair(np.random.default_rng(seed))
        ior = ior_from_el(eop.total_el, bop.total_el, eop.total_wo)
        assert el_roll_forward(bop.total_el, ior, eop.total_wo) == pytest.approx(eop.total_el, abs=1e-9 * bop.total_ead)

    def test_decomposition_is_exact_without_performing_write_offs(self):
        for seed in range(200):
            bop, eop = random_snapshot_pair(np.random.default_rng(seed))
            dec = ior_decomposition(bop, eop)
            assert abs(dec.residual) <= 1e-9 * bop.total_ead
            assert dec.components_total + dec.residual == pytest.approx(dec.ior)

    def test_residual_is_reported_not_absorbed(self):
        rng = np.random.default_rng(5)
        bop, eop = random_snapshot_pair(rng, performing_wo=True)
        dec = ior_decomposition(bop, eop)
        wo_pl = sum(e.wo_in_period for e in eop.exposures if e.performing)
        assert wo_pl > 0
        assert dec.residual == pytest.approx(wo_pl, abs=1e-9 * bop.total_ead)

    def test_cor_equals_ior_with_provisions_at_el(self, hand_split_pair):
        rep = dashboard_report(*hand_split_pair)
        assert rep.delta_shortfall == 0.0
        assert rep.cor == rep.ior == pytest.approx(39.5)

    def test_shortfall_moves_ior(self, hand_split_pair):
        bop, eop = hand_split_pair
        rep = dashboard_report(bop, eop, provisions_bop=25.0, provisions_eop=60.0)
        assert rep.cor == pytest.approx(35.0)
        assert rep.delta_shortfall == pytest.approx((69.5 - 60.0) - (30.0 - 25.0))
        assert rep.ior == pytest.approx(ior_from_el(eop.total_el, bop.total_el, eop.total_wo))


class TestPLDashboard:
    def test_hand_example(self, hand_split_pair):
        bop, eop = hand_split_pair
        split = pl_split(bop, eop)
        assert (split.delta_pd, split.delta_ead, split.delta_lgd) == pytest.approx((10.0, 4.0, 5.5), abs=1e-12)
        assert pl_dashboard(bop, eop) == pytest.approx(19.5, abs=1e-12)
        assert split.total == pytest.approx(19.5, abs=1e-12)
        rows = [(100, 0.4, 110, 0.4, 110, 0.45, 0)]
        assert [float(x) for x in oracles.pl_split_by_hand(rows, 30)] == pytest.approx([10.0, 4.0, 5.5], abs=1e-12)

    def test_monthly_scales_performing_el(self, hand_split_pair):
        bop, eop = hand_split_pair
        assert monthly_pl_dashboard(bop, eop) == pytest.approx(49.5 - 30.0 / 12)

    @given(st.integers(0, 2**32 - 1))
    def test_split_telescopes(self, seed):
        bop, eop = random_snapshot_pair(np.random.default_rng(seed))
        split = pl_split(bop, eop)
        assert split.residual == 0.0
        assert abs(split.total - pl_dashboard(bop, eop)) <= 1e-9 * bop.total_ead

    def test_missing_default_values_warn_and_keep_total(self):
        rng = np.random.default_rng(11)
        bop, eop = random_snapshot_pair(rng, n=80, with_default_values=False)
        with pytest.warns(PartialSplitWarning):
            split = pl_split(bop, eop)
        assert split.missing_ids
        assert abs(split.total - pl_dashboard(bop, eop)) <= 1e-9 * bop.total_ead

    def test_lgd_flag(self, hand_split_pair):
        bop, eop = hand_split_pair
        assert not pl_split(bop, eop).lgd_flag  # 5.5 / 44 = 12.5%
        assert pl_split(bop, eop, lgd_flag_threshold=0.1).lgd_flag

    def test_loss_modes(self, hand_split_pair):
        bop, eop = hand_split_pair
        assert new_npl_loss(bop, eop, "eop") == pytest.approx(49.5)
        assert new_npl_loss(bop, eop, "bop") == pytest.approx(40.0)
        with pytest.raises(InputError):
            new_npl_loss(bop, eop, "mid")

    def test_npl_dashboard(self):
        bop = PortfolioSnapshot(0, (_npl("o", 100, 0.5),))
        eop = PortfolioSnapshot(1, (_npl("o", 60, 0.5, wo=30.0),))
        assert npl_dashboard(bop, eop) == pytest.approx(30.0 + 30.0 - 50.0)


class TestLossSeries:
    def test_series_and_cadence(self, hand_split_pair):
        bop, eop = hand_split_pair
        assert loss_series([bop, eop]).tolist() == pytest.approx([49.5])
        assert check_cadence([0, 3, 6]) == 3
        assert check_cadence([4]) == 0
        with pytest.raises(CadenceGapError):
            check_cadence([0, 1, 3])

    def test_probability_weighted_el(self):
        assert probability_weighted_el([50, 500], [0.9, 0.1]) == 95.0
        with pytest.raises(InputError):
            probability_weighted_el([50, 500], [0.9, 0.2])
        with pytest.raises(InputError):
            probability_weighted_el([50], [0.9, 0.1])
        with pytest.raises(InputError):
            probability_weighted_el([50, 1], [1.1, -0.1])


@pytest.fixture(scope="module")
def setup():
    weights = portfolio_weights(ScenarioConfig(n_exposures=10_000))
    ref = reference_distribution(10_000, 0.001, weights, 100_000, seed=3)
    return weights, ref


class TestNullModel:
    def test_reference_moments(self, setup):
        weights, ref = setup
        mean = 10_000 * 0.001 * weights.mean()
        assert np.all(np.diff(ref) >= 0)
        assert ref.mean() == pytest.approx(mean, rel=0.01)

    def test_reproducible_per_worker_count(self):
        w = np.array([1.0, 2.0, 3.0])
        a = reference_distribution(100, 0.05, w, 1000, seed=1, workers=3)
        b = reference_distribution(100, 0.05, w, 1000, seed=1, workers=3)
        assert np.array_equal(a, b)
        assert a.size == 1000

    def test_p_values(self):
        ref = np.arange(1, 101, dtype=float)
        p, lo, hi = two_sided_p_values([0.0, 50.0, 1000.0], ref)
        assert p[0] == 0.0 and p[2] == 0.0
        assert p[1] == pytest.approx(1.0)

    def test_flags_extremes(self, setup):
        weights, ref = setup
        series = np.full(24, np.median(ref))
        series[5] = ref[-1] * 3
        res = binomial_null_test(series, 10_000, 0.001, weights, reference=ref)
        assert res.flags[5] and res.high_flags[5]
        assert res.flags.sum() == 1
        assert res.band[0] < np.median(ref) < res.band[1]

    def test_null_series_rarely_flag(self, setup):
        weights, ref = setup
        sims = simulate_loss_series(10_000, 0.001, weights, 60, 0.0, seed=7, n_series=100)
        frac = np.mean([binomial_null_test(s, 10_000, 0.001, weights, reference=ref).flagged_fraction for s in sims])
        assert frac == pytest.approx(0.05, abs=0.02)

    def test_input_checks(self):
        w = [1.0]
        with pytest.raises(InputError):
            binomial_null_test([1.0] * 11, 10, 0.1, w)
        with pytest.raises(InputError):
            binomial_null_test([1.0] * 12, 10, 0.1, w, n_draws=1000)
        with pytest.raises(DomainError):
            binomial_null_test([1.0] * 12, 10, 1.0, w)
        with pytest.raises(DomainError):
            binomial_null_test([1.0] * 12, 10, 0.1, w, alpha=0.0)
        with pytest.raises(DomainError):
            reference_distribution(10, 0.0, w)
        with pytest.raises(InputError):
            reference_distribution(10, 0.1, [])


def test_report_ignores_partial_split_warning():
    bop, eop = random_snapshot_pair(np.random.default_rng(2), n=80, with_default_values=False)
    with warnings.catch_warnings():
        warnings.simplefilter("error", PartialSplitWarning)
        rep = dashboard_report(bop, eop)
    assert rep.missing_default_values
    assert rep.delta_pd + rep.delta_ead + rep.delta_lgd + rep.split_residual == pytest.approx(rep.pl_dashboard)
