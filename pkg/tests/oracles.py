"""Independent reference computations in 50-digit decimal arithmetic.

Nothing here imports the package: these are the oracles the frozen test
values were produced with.
"""

from decimal import Decimal, getcontext

getcontext().prec = 50

# Frozen oracle outputs (see the functions below for how they were produced).
PV_PAR_BOND_AT_4PCT = 104.45182233101620553
ANNUITY_PAYMENT_3Y_5PCT = 36.720856463124504362
ANNUITY_BALANCES = (100.0, 68.279143536875495638, 34.972244250594766059, 0.0)
PAR_BOND_MACAULAY = 4.5459505041623603334
NORMING_RATIO_DELAYED_AT_4PCT = 1.2754900453648023391
NORMING_RATIO_DELAYED_AT_5PCT = 1.2820118326034627766
DELAYED_GAP_T3 = 0.46192278129249689588
DELAYED_IACV = (100.0, 99.0, 99.235490045364802339, 99.480399692544196772, 99.735105725610766982, 0.0)
NPL_NCA_BOP = 54.421768707482993197
NPL_EL_BOP = 45.578231292517006803
NPL_NCA_EOP = 57.142857142857142857
NPL_EL_EOP = 42.857142857142857143
NPL_DASHBOARD = -2.7210884353741496599


def D(x) -> Decimal:
    return Decimal(repr(x)) if isinstance(x, float) else Decimal(x)


def pv(flows, rate) -> Decimal:
    r = D(rate)
    return sum((D(c) / (1 + r) ** t for t, c in enumerate(flows, start=1)), Decimal(0))


def recursion(principal, rate, flows) -> list[Decimal]:
    r = D(rate)
    values = [D(principal)]
    for c in flows:
        values.append(values[-1] * (1 + r) - D(c))
    return values


def annuity_payment(principal, rate, n) -> Decimal:
    r = D(rate)
    return D(principal) * r / (1 - (1 + r) ** -n)


def macaulay_closed_form(rate, n) -> Decimal:
    """Par bond: sum_{t<n} (1+rate)^-t = (1 - v^n) / (1 - v)."""
    v = 1 / (1 + D(rate))
    return (1 - v**n) / (1 - v)


def norming_ratio(shape, balances, rate) -> Decimal:
    """Scale that makes ``shape`` satisfy the norming condition."""
    r = D(rate)
    g0 = [D(b) / (1 + r) ** t for t, b in enumerate(balances)]
    return sum(g0) / sum(D(w) * g for w, g in zip(shape, g0))


def pl_split_by_hand(defaults, el_pl_bop):
    """Spreadsheet-style split. ``defaults`` rows: (ead_bop, lgd_bop, ead_def, lgd_def, ead_eop, lgd_eop, wo)."""
    bop = sum(D(a) * D(b) for a, b, *_ in defaults)
    dfl = sum(D(c) * D(d) for _, _, c, d, *_ in defaults)
    eop = sum(D(e) * D(f) + D(w) for *_, e, f, w in defaults)
    return bop - D(el_pl_bop), dfl - bop, eop - dfl
