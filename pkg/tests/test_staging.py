import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from conftest import loans
from iacvlab.cashflow import LoanContract, present_value, solve_effective_rate
from iacvlab.errors import InconsistentELError, InputError, RatioUndefinedError
from iacvlab.simulator import fig5_1_path
from iacvlab.staging import (
    GROSS,
    NET,
    StageState,
    StagingConfig,
    assess_stage,
    conservatism_bound,
    duration_at,
    generalized_delta,
    hidden_reserve_ratio,
    macaulay_from_flows,
    modified_duration,
    provision_amount,
    shock_iacv,
    sign_phases,
    threshold_sensitivity,
)
from iacvlab.valuation import discount_to_origination, gca_trajectory


def state(pd0, pd1, **kw):
    return StageState(bucket=1, lifetime_pd_origination=pd0, lifetime_pd_current=pd1, **kw)


class TestAssessStage:
    def test_below_threshold(self):
        assert assess_stage(state(0.02, 0.04)) == 1

    def test_at_threshold_is_significant(self):
        assert assess_stage(state(0.02, 0.05)) == 2

    def test_custom_threshold(self):
        assert assess_stage(state(0.02, 0.04), StagingConfig(relative_threshold=2.0)) == 2

    def test_default_goes_to_bucket_three(self):
        assert assess_stage(state(0.02, 0.02, defaulted=True)) == 3

    def test_dpd_backstop_and_rebuttal(self):
        assert assess_stage(state(0.02, 0.02, days_past_due=30)) == 2
        assert assess_stage(state(0.02, 0.02, days_past_due=29)) == 1
        assert assess_stage(state(0.02, 0.02, days_past_due=45), StagingConfig(rebut_dpd=True)) == 1
        cfg = StagingConfig(rebutted_ids={"X"})
        assert assess_stage(state(0.02, 0.02, days_past_due=45, id="X"), cfg) == 1
        assert assess_stage(state(0.02, 0.02, days_past_due=45, id="Y"), cfg) == 2

    def test_zero_origination_pd(self):
        assert assess_stage(state(0.0, 0.0)) == 1
        with pytest.raises(RatioUndefinedError):
            assess_stage(state(0.0, 0.01, id="Z"))

    @pytest.mark.parametrize(
        "kw",
        [
            dict(bucket=4, lifetime_pd_origination=0.1, lifetime_pd_current=0.1),
            dict(bucket=1, lifetime_pd_origination=1.2, lifetime_pd_current=0.1),
            dict(bucket=1, lifetime_pd_origination=0.1, lifetime_pd_current=0.1, days_past_due=-1),
            dict(bucket=3, lifetime_pd_origination=0.1, lifetime_pd_current=0.1, interest_accrual_base=GROSS),
            dict(bucket=1, lifetime_pd_origination=0.1, lifetime_pd_current=0.1, interest_accrual_base=NET),
        ],
    )
    def test_invalid_state(self, kw):
        with pytest.raises(InputError):
            StageState(**kw)

    def test_accrual_base_defaults(self):
        assert StageState(bucket=3, lifetime_pd_origination=0.1, lifetime_pd_current=1.0).interest_accrual_base == NET
        assert state(0.1, 0.1).interest_accrual_base == GROSS

    def test_invalid_config(self):
        with pytest.raises(InputError):
            StagingConfig(relative_threshold=0)
        with pytest.raises(InputError):
            StagingConfig(dpd_backstop=-1)


class TestProvision:
    def test_by_bucket(self):
        assert provision_amount(1, 1.0, 4.0) == 1.0
        assert provision_amount(2, 1.0, 4.0) == 4.0
        assert provision_amount(3, 1.0, 4.0) == 4.0

    def test_inconsistent(self):
        with pytest.raises(InconsistentELError):
            provision_amount(1, 5.0, 4.0)
        with pytest.raises(InputError):
            provision_amount(0, 1.0, 4.0)


class TestDuration:
    def test_par_bullet_against_closed_form(self, par_bullet):
        gca0 = discount_to_origination(gca_trajectory(par_bullet, 0.05), 0.05)
        res = modified_duration(gca0, 0.05, 100.0)
        assert res.macaulay == pytest.approx(oracles.PAR_BOND_MACAULAY, rel=1e-12)
        assert res.modified == pytest.approx(oracles.PAR_BOND_MACAULAY / 1.05, rel=1e-12)
        assert res.discount_rate_used == 0.05
        assert macaulay_from_flows(par_bullet.cash_flows, 0.05) == pytest.approx(oracles.PAR_BOND_MACAULAY, rel=1e-12)

    def test_formulations_agree_on_corpus(self, loan_corpus):
        for c in loan_corpus:
            i = solve_effective_rate(c).rate
            gca0 = discount_to_origination(gca_trajectory(c, i), i)
            a = modified_duration(gca0, i, c.principal).macaulay
            b = macaulay_from_flows(c.cash_flows, i)
            assert abs(a - b) <= 1e-9 * b

    def test_duration_at_later_date(self, par_bullet):
        res = duration_at(gca_trajectory(par_bullet, 0.05), 0.05, 3)
        assert res.macaulay == pytest.approx(1 + 1 / 1.05)
        with pytest.raises(InputError):
            duration_at(gca_trajectory(par_bullet, 0.05), 0.05, 5)

    def test_bad_inputs(self):
        with pytest.raises(InputError):
            modified_duration([], 0.05, 100.0)
        with pytest.raises(InputError):
            modified_duration([1.0], 0.05, 0.0)


class TestShock:
    def test_one_period_loan(self):
        # exact drop 1 - 1.05/1.06, first order Δr / 1.05
        c = LoanContract("one", 100.0, [105.0])
        exact = present_value(c.cash_flows, 0.06)
        d_mod = modified_duration(discount_to_origination([100.0], 0.05), 0.05, 100.0).modified
        first = shock_iacv(100.0, d_mod, 0.01)
        assert 100.0 - exact == pytest.approx(100 * (1 - 1.05 / 1.06), abs=1e-12)
        assert 100.0 - first == pytest.approx(100 * 0.01 / 1.05, abs=1e-12)

    @pytest.mark.parametrize("dr", [0.0001, 0.001, 0.0025, 0.005])
    def test_first_order_error_bound(self, par_bullet, dr):
        flows = np.asarray(par_bullet.cash_flows) - 1.0
        iacv0 = present_value(flows, 0.04)
        series0 = discount_to_origination([iacv0] * 5, 0.04)
        res = modified_duration(series0, 0.04, iacv0)
        exact = present_value(flows, 0.04 + dr)
        err = abs(shock_iacv(iacv0, res.modified, dr) - exact) / exact
        assert err <= 2 * res.macaulay**2 * dr**2

    def test_bound_and_generalized_delta(self):
        bound = conservatism_bound(el0_t=2.0, profile_gap=0.5, d_mod_t=4.0, gca0_t=100.0)
        assert bound == pytest.approx(1.5 / 400)
        assert generalized_delta(bound, 4.0, 100.0, 2.0, 0.5) == pytest.approx(0.0, abs=1e-12)
        assert generalized_delta(0.0, 4.0, 100.0, 2.0, 0.5) == pytest.approx(1.5)
        assert conservatism_bound(0.5, 1.0, 4.0, 100.0) < 0
        with pytest.raises(InputError):
            conservatism_bound(1.0, 0.0, 0.0, 100.0)


class TestHiddenReserve:
    def test_values(self):
        assert hidden_reserve_ratio(0.25) == 0.8
        assert hidden_reserve_ratio(5.0) == 1.0 / 6.0
        assert hidden_reserve_ratio(0.0) == 1.0
        with pytest.raises(InputError):
            hidden_reserve_ratio(-0.1)

    def test_sensitivity_grid(self):
        grid = threshold_sensitivity([0.25, 1.5, 5.0])
        assert [t for t, _ in grid] == [1.25, 2.5, 6.0]
        ratios = [h for _, h in grid]
        assert ratios == sorted(ratios, reverse=True)

    @given(st.floats(0.0, 1e6))
    def test_in_unit_interval(self, x):
        assert 0.0 < hidden_reserve_ratio(x) <= 1.0


class TestDriftPath:
    def test_three_phases_and_transition(self):
        path = fig5_1_path()
        assert sign_phases(path.delta) == ["+", "-", "+"]
        assert path.transition_time == pytest.approx(1.5, abs=1 / 12)
        assert path.delta[0] > 0

    def test_no_drift_stays_in_bucket_one(self, monthly_bullet):
        from iacvlab.staging import drift_path

        path = drift_path(monthly_bullet, 0.01, 0.0)
        assert path.transition_time is None
        assert (path.bucket == 1).all()

    def test_sign_phases(self):
        assert sign_phases([1.0, 0.0, -1.0, -2.0, 3.0]) == ["+", "-", "+"]
        assert sign_phases([]) == []


@given(loans(max_term=15))
def test_macaulay_identity_property(c):
    i = solve_effective_rate(c).rate
    gca0 = discount_to_origination(gca_trajectory(c, i), i)
    assert modified_duration(gca0, i, c.principal).macaulay == pytest.approx(macaulay_from_flows(c.cash_flows, i), rel=1e-9)
