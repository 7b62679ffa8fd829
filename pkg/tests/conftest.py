import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

sys.path.insert(0, os.path.dirname(__file__))

from iacvlab.cashflow import LoanContract, annual_to_periodic  # noqa: E402

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_loan(id, principal, rate, term, kind="bullet", unit="year", rng=None):
    """Contract whose effective rate is ``rate`` per period by construction."""
    if kind == "bullet":
        flows = [principal * rate] * (term - 1) + [principal * (1 + rate)]
    elif kind == "annuity":
        pay = principal * rate / (1 - (1 + rate) ** -term) if rate else principal / term
        flows = [pay] * term
    else:
        # irregular amortization: random principal repayments plus interest on the balance
        w = rng.random(term) + 0.05
        repay = principal * w / w.sum()
        bal = principal - np.concatenate([[0.0], np.cumsum(repay)[:-1]])
        flows = (repay + rate * bal).tolist()
    return LoanContract(id, principal, flows, unit)


def corpus(n=500, seed=20140601, max_term=30):
    """Randomized contracts with terms 1..max_term, mixed bullet and amortizing."""
    rng = np.random.default_rng(seed)
    kinds = ("bullet", "annuity", "irregular")
    out = []
    for k in range(n):
        term = int(rng.integers(1, max_term + 1))
        rate = float(rng.uniform(0.0, 0.15))
        principal = float(rng.uniform(10, 1000))
        out.append(make_loan(f"C{k}", principal, rate, term, kinds[k % 3], rng=rng))
    return out


@st.composite
def loans(draw, max_term=30):
    term = draw(st.integers(1, max_term))
    rate = draw(st.integers(0, 2000)) / 10000
    principal = draw(st.floats(1.0, 1e6))
    kind = draw(st.sampled_from(["bullet", "annuity", "irregular"]))
    seed = draw(st.integers(0, 2**32 - 1))
    return make_loan("H", principal, rate, term, kind, rng=np.random.default_rng(seed))


@pytest.fixture(scope="session")
def loan_corpus():
    return corpus()


@pytest.fixture
def par_bullet():
    return LoanContract("par", 100.0, [5.0, 5.0, 5.0, 5.0, 105.0])


@pytest.fixture
def monthly_bullet():
    im = annual_to_periodic(0.05, 12)
    return LoanContract("m", 100.0, [100 * im] * 59 + [100 * (1 + im)], "month")


def _perf(id, ead, lgd, pd, wo=0.0):
    from iacvlab.dashboards import ExposureRecord

    return ExposureRecord(id, True, ead, lgd, pd, pd * ead * lgd, wo)


def _npl(id, ead, lgd, wo=0.0, ead_def=None, lgd_def=None):
    from iacvlab.dashboards import ExposureRecord

    return ExposureRecord(id, False, ead, lgd, 1.0, ead * lgd, wo, ead_def, lgd_def)


def random_snapshot_pair(rng, n=40, with_default_values=True, performing_wo=False):
    """BOP/EOP pair covering stayers, new defaults, old defaults, cures, new volume and exits."""
    from iacvlab.dashboards import PortfolioSnapshot

    bop, eop = [], []
    for k in range(n):
        id_ = f"X{k:03d}"
        ead, lgd, pd = rng.uniform(1, 1000), rng.uniform(0.05, 0.95), rng.uniform(0.001, 0.3)
        if rng.random() < 0.8:
            bop.append(_perf(id_, ead, lgd, pd))
            fate = rng.choice(["stay", "default", "exit"], p=[0.6, 0.3, 0.1])
            if fate == "stay":
                wo = rng.uniform(0, 5) if performing_wo and rng.random() < 0.3 else 0.0
                eop.append(_perf(id_, ead * rng.uniform(0.8, 1.1), lgd, rng.uniform(0.001, 0.3), wo))
            elif fate == "default":
                ead_def, lgd_def = ead * rng.uniform(0.9, 1.2), rng.uniform(0.05, 0.95)
                ead_eop, lgd_eop = ead_def * rng.uniform(0.5, 1.0), rng.uniform(0.05, 1.0)
                wo = rng.uniform(0, 0.2) * ead_def if rng.random() < 0.5 else 0.0
                keep = with_default_values or rng.random() < 0.5
                eop.append(_npl(id_, ead_eop, lgd_eop, wo, ead_def if keep else None, lgd_def if keep else None))
        else:
            bop.append(_npl(id_, ead, lgd))
            fate = rng.choice(["stay", "cure", "exit"], p=[0.7, 0.2, 0.1])
            if fate == "stay":
                wo = rng.uniform(0, 0.3) * ead if rng.random() < 0.5 else 0.0
                eop.append(_npl(id_, ead * rng.uniform(0.3, 1.0), rng.uniform(0.05, 1.0), wo))
            elif fate == "cure":
                eop.append(_perf(id_, ead, lgd, rng.uniform(0.01, 0.3)))
    for k in range(int(rng.integers(0, 5))):
        eop.append(_perf(f"N{k:03d}", rng.uniform(1, 1000), rng.uniform(0.05, 0.95), rng.uniform(0.001, 0.3)))
    return PortfolioSnapshot(0, tuple(bop)), PortfolioSnapshot(1, tuple(eop))


@pytest.fixture
def hand_split_pair():
    from iacvlab.dashboards import PortfolioSnapshot

    bop = PortfolioSnapshot(0, (_perf("A", 100.0, 0.4, 0.25), _perf("B", 200.0, 0.5, 0.2)))
    eop = PortfolioSnapshot(1, (_npl("A", 110.0, 0.45, 0.0, 110.0, 0.4), _perf("B", 200.0, 0.5, 0.2)))
    return bop, eop


# --- acceptance summary ------------------------------------------------------------

_CRITERIA: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    failed = report.failed
    if report.when == "call" or failed:
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        prev = _CRITERIA.get(number)
        if prev is None or prev[0] == "PASS":
            _CRITERIA[number] = ("FAIL" if failed else "PASS", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[number]
        line = f"{status} AC{number:02d} {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
