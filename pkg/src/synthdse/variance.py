"""Two-state comparison of census-based (CCF) and data-defined (DCF) coverage factors.

One post-stratum is split across two states whose counts are fully
observed. Each factor distributes the post-stratum total back to the
states and the squared error against the per-state truth is compared.

The per-state truth is taken as ``CE * NN / MN``. The usual
capture-recapture form would be ``CE * (MN + NN) / MN``; since both
states share the same ratio under the size assumptions used here, the
choice only rescales the common total and never changes a winner.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from .model import TwoStateScenario

AGREEMENT_RTOL = 1e-9
AGREEMENT_FLOOR = 1e-12
LARGE_STRATUM_CE = 50_000


class Factor(str, enum.Enum):
    CCF = "ccf"
    DCF = "dcf"


class Winner(str, enum.Enum):
    CCF = "CCF"
    DCF = "DCF"
    TIE = "tie"


def true_dse(s: TwoStateScenario) -> tuple[float, float]:
    """Per-state truth ``CE_i * NN_i / MN_i``."""
    if s.mn1 <= 0 or s.mn2 <= 0:
        raise ZeroDivisionError("matched non-mover count is zero")
    return s.ce1 * s.nn1 / s.mn1, s.ce2 * s.nn2 / s.mn2


def _census(s):
    return s.ce1 + s.ee1 + s.ii1, s.ce2 + s.ee2 + s.ii2


def _data_defined(s):
    return s.ce1 + s.ee1, s.ce2 + s.ee2


def synthetic_pair(s: TwoStateScenario, factor: Factor | str) -> tuple[float, float]:
    """Closed-form synthetic estimates for two states of equal true size.

    Each state receives its share of the census (CCF) or data-defined
    (DCF) count times twice the common truth.
    """
    factor = Factor(factor)
    t1, t2 = true_dse(s)
    if not math.isclose(t1, t2, rel_tol=1e-12, abs_tol=0.0):
        raise ValueError(f"closed form needs equal true sizes, got {t1!r} and {t2!r}")
    n1, n2 = _census(s) if factor is Factor.CCF else _data_defined(s)
    if n1 + n2 <= 0:
        raise ZeroDivisionError("zero denominator in synthetic share")
    return n1 / (n1 + n2) * 2 * t1, n2 / (n1 + n2) * 2 * t1


def coverage_factors(s: TwoStateScenario) -> tuple[float, float]:
    """Post-stratum CCF and DCF written in terms of the ten counts."""
    c1, c2 = _census(s)
    d1, d2 = _data_defined(s)
    if c1 + c2 <= 0 or d1 + d2 <= 0:
        raise ZeroDivisionError("zero census or data-defined total")
    ratio = (s.nn1 + s.nn2) / (s.mn1 + s.mn2)
    ce = s.ce1 + s.ce2
    return ce / (c1 + c2) * ratio, ce / (d1 + d2) * ratio


def synthetic_pair_general(s: TwoStateScenario, factor: Factor | str) -> tuple[float, float]:
    """Synthetic estimates from the factors directly, no size assumption."""
    ccf, dcf = coverage_factors(s)
    if Factor(factor) is Factor.CCF:
        c1, c2 = _census(s)
        return c1 * ccf, c2 * ccf
    d1, d2 = _data_defined(s)
    return d1 * dcf, d2 * dcf


def is_scaled(s: TwoStateScenario, rel_tol: float = 1e-12) -> bool:
    """True when CE, MN and NN of state 2 are ``lam`` times those of state 1."""
    return all(
        math.isclose(s.lam * x1, x2, rel_tol=rel_tol, abs_tol=0.0)
        for x1, x2 in ((s.ce1, s.ce2), (s.mn1, s.mn2), (s.nn1, s.nn2))
    )


def _diff_terms(s):
    a = s.lam * s.ee1 - s.ee2
    b = s.lam * s.ii1 - s.ii2
    dd_tot = sum(_data_defined(s))
    c_tot = sum(_census(s))
    return a, b, dd_tot, c_tot


def closed_form_diff(s: TwoStateScenario) -> float:
    """Closed-form ``delta_d - delta_c`` for size-scaled states.

    With ``lam = 1`` this is the equal-size expression with denominators
    ``2 CE + EE1 + EE2`` and ``2 CE + EE1 + EE2 + II1 + II2``.
    """
    t1, _ = true_dse(s)
    a, b, dd_tot, c_tot = _diff_terms(s)
    return 2 * t1 ** 2 * ((a / dd_tot) ** 2 - ((a + b) / c_tot) ** 2)


def approximate_diff(s: TwoStateScenario) -> float:
    """First-order approximation of ``delta_d - delta_c`` when CE dominates."""
    t1, _ = true_dse(s)
    a, b, dd_tot, c_tot = _diff_terms(s)
    ce_sum = (1 + s.lam) * s.ce1
    num = -2 * t1 ** 2 * (2 * ce_sum * a + ce_sum * b) * (ce_sum * b)
    return num / (dd_tot ** 2 * c_tot ** 2)


def exact_winner(s: TwoStateScenario) -> Winner:
    """Sign of the closed-form difference in rational arithmetic."""
    lam = Fraction(s.lam)
    f = {k: Fraction(getattr(s, k)) for k in ("ce1", "ce2", "ee1", "ee2", "ii1", "ii2")}
    a = lam * f["ee1"] - f["ee2"]
    b = lam * f["ii1"] - f["ii2"]
    dd_tot = f["ce1"] + f["ce2"] + f["ee1"] + f["ee2"]
    c_tot = dd_tot + f["ii1"] + f["ii2"]
    key = a * a * c_tot * c_tot - (a + b) * (a + b) * dd_tot * dd_tot
    if key == 0 or true_dse(s)[0] == 0:
        return Winner.TIE
    return Winner.CCF if key > 0 else Winner.DCF


def decision_rule(s: TwoStateScenario, lam: float | None = None) -> Winner:
    """Predict the better factor from the EE and II contrasts alone.

    Follows the published rules: equal EE favours DCF, equal II favours
    CCF, and otherwise the contrasts ``a = lam*EE1 - EE2`` and
    ``b = lam*II1 - II2`` decide. The rules are stated for ``a > 0``;
    ``a < 0`` is handled by relabelling the states, which flips both
    signs. Only the two equality rules are exact; the rest hold when CE
    is much larger than EE and II.
    """
    lam = Fraction(s.lam if lam is None else lam)
    a = lam * Fraction(s.ee1) - Fraction(s.ee2)
    b = lam * Fraction(s.ii1) - Fraction(s.ii2)
    if a == 0 and b == 0:
        return Winner.TIE
    if a == 0:
        return Winner.DCF
    if b == 0:
        return Winner.CCF
    if a < 0:
        a, b = -a, -b
    if b > 0:
        return Winner.DCF
    return Winner.DCF if a <= -b / 2 else Winner.CCF


def in_approximate_regime(s: TwoStateScenario, ratio: float = 100.0) -> bool:
    return min(s.ce1, s.ce2) >= ratio * max(s.ee1, s.ee2, s.ii1, s.ii2)


@dataclass(frozen=True)
class DeltaComparison:
    scenario: TwoStateScenario
    s_true: tuple[float, float]
    s_c: tuple[float, float]
    s_d: tuple[float, float]
    delta_c: float
    delta_d: float
    diff_exact: float
    diff_direct: float
    diff_approx: float
    predicted_winner: Winner
    actual_winner: Winner

    @property
    def size(self) -> float:
        return self.scenario.ce1 + self.scenario.ce2

    @property
    def agreement(self) -> float:
        """Relative gap between the closed-form and definitional differences.

        The scale is the larger squared error, floored at ``1e-12 * S**2``
        (S the summed truth) so that ties made of rounding noise do not
        count as disagreement.
        """
        scale = max(self.delta_c, self.delta_d, AGREEMENT_FLOOR * sum(self.s_true) ** 2)
        if scale == 0:
            return abs(self.diff_exact - self.diff_direct)
        return abs(self.diff_exact - self.diff_direct) / scale


def delta_comparison(s: TwoStateScenario) -> DeltaComparison:
    """Squared errors of both factors against the per-state truth.

    The definitional path uses the factors directly. For equal-size
    scenarios the closed-form synthetic pairs are computed too and must
    agree with it.
    """
    if not is_scaled(s):
        raise ValueError("scenario is not size-scaled: CE, MN and NN of state 2 "
                         "must be lam times those of state 1")
    t = true_dse(s)
    s_c = synthetic_pair_general(s, Factor.CCF)
    s_d = synthetic_pair_general(s, Factor.DCF)
    if s.lam == 1.0:
        for general, closed in ((s_c, synthetic_pair(s, Factor.CCF)),
                                (s_d, synthetic_pair(s, Factor.DCF))):
            for g, c in zip(general, closed):
                if not math.isclose(g, c, rel_tol=AGREEMENT_RTOL, abs_tol=1e-9):
                    raise ArithmeticError(f"closed-form pair {closed} disagrees with {general}")
    delta_c = (s_c[0] - t[0]) ** 2 + (s_c[1] - t[1]) ** 2
    delta_d = (s_d[0] - t[0]) ** 2 + (s_d[1] - t[1]) ** 2
    return DeltaComparison(
        scenario=s,
        s_true=t,
        s_c=s_c,
        s_d=s_d,
        delta_c=delta_c,
        delta_d=delta_d,
        diff_exact=closed_form_diff(s),
        diff_direct=delta_d - delta_c,
        diff_approx=approximate_diff(s),
        predicted_winner=decision_rule(s),
        actual_winner=exact_winner(s),
    )


@dataclass
class FrequencyTable:
    """Winner counts split by post-stratum size; ties are kept aside."""

    small_ccf: int = 0
    small_dcf: int = 0
    large_ccf: int = 0
    large_dcf: int = 0
    ties: int = 0
    threshold: float = LARGE_STRATUM_CE

    @property
    def small_total(self) -> int:
        return self.small_ccf + self.small_dcf

    @property
    def large_total(self) -> int:
        return self.large_ccf + self.large_dcf

    @property
    def ccf_total(self) -> int:
        return self.small_ccf + self.large_ccf

    @property
    def dcf_total(self) -> int:
        return self.small_dcf + self.large_dcf

    @property
    def total(self) -> int:
        return self.small_total + self.large_total

    def rows(self) -> list[dict]:
        return [
            {"size": "small", "ccf": self.small_ccf, "dcf": self.small_dcf, "total": self.small_total},
            {"size": "large", "ccf": self.large_ccf, "dcf": self.large_dcf, "total": self.large_total},
            {"size": "total", "ccf": self.ccf_total, "dcf": self.dcf_total, "total": self.total},
        ]


def empirical_frequency(comparisons: Iterable[DeltaComparison],
                        size_threshold: float = LARGE_STRATUM_CE) -> FrequencyTable:
    """Tabulate actual winners; a post-stratum is large when its total CE exceeds the threshold."""
    if size_threshold <= 0:
        raise ValueError("size threshold must be positive")
    table = FrequencyTable(threshold=size_threshold)
    for cmp in comparisons:
        if cmp.actual_winner is Winner.TIE:
            table.ties += 1
            continue
        size = "large" if cmp.size > size_threshold else "small"
        name = f"{size}_{cmp.actual_winner.value.lower()}"
        setattr(table, name, getattr(table, name) + 1)
    return table
