"""Tests of the synthetic assumption for imputations within post-strata."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from scipy import special

from .model import CellCounts, group_by_stratum

MIN_EXPECTED = 5.0


def chi_square_sf(x: float, df: int) -> float:
    """Upper-tail probability of the chi-square distribution.

    Evaluated as the regularized upper incomplete gamma function
    ``Q(df / 2, x / 2)``.
    """
    if isinstance(df, bool) or int(df) != df or df < 1:
        raise ValueError(f"degrees of freedom must be a positive integer, got {df!r}")
    if x < 0 or math.isnan(x):
        raise ValueError(f"chi-square statistic must be nonnegative, got {x!r}")
    if x == 0:
        return 1.0
    return float(special.gammaincc(df / 2.0, x / 2.0))


def equality_condition(cells: Sequence[CellCounts]) -> tuple[bool, float]:
    """Check whether imputations are spread exactly like census counts.

    Returns ``(holds, max_deviation)`` where ``holds`` is the integer
    cross-product test ``II_k * C == C_k * II`` over all regions and
    ``max_deviation`` is the largest ``|II_k / II - C_k / C|`` (zero when
    the stratum has no imputations).
    """
    census = sum(int(c.census) for c in cells)
    ii = sum(int(c.ii) for c in cells)
    if census <= 0:
        raise ValueError("equality condition needs a positive census total")
    holds = all(int(c.ii) * census == int(c.census) * ii for c in cells)
    if ii == 0:
        return holds, 0.0
    dev = max(abs(c.ii / ii - c.census / census) for c in cells)
    return holds, dev


@dataclass(frozen=True)
class StratumChiSquare:
    stratum: str
    statistic: float
    df: int
    p_value: float
    min_expected: float

    @property
    def low_expected(self) -> bool:
        return self.min_expected < MIN_EXPECTED


@dataclass
class HomogeneityResult:
    strata: list[StratumChiSquare] = field(default_factory=list)
    excluded: list[tuple[str, str]] = field(default_factory=list)
    statistic: float = 0.0
    df: int = 0
    p_value: float = 1.0

    @property
    def worst(self) -> StratumChiSquare | None:
        """Stratum with the smallest p-value (largest statistic on ties)."""
        if not self.strata:
            return None
        return min(self.strata, key=lambda s: (s.p_value, -s.statistic))

    @property
    def flagged(self) -> list[str]:
        return [s.stratum for s in self.strata if s.low_expected]


def stratum_chi_square(stratum: str, cells: Sequence[CellCounts]) -> StratumChiSquare:
    """Pearson statistic on the 2 x K table of (II, DD) counts by region.

    Regions with no census count carry no information and are dropped.
    Deviations are formed from integer cross-products so that a perfectly
    proportional table gives exactly zero.
    """
    # python ints keep the squared cross-products exact
    cols = [(int(c.census), int(c.dd), int(c.ii)) for c in cells if c.census > 0]
    if len(cols) < 2:
        raise ValueError("fewer than two regions with census counts")
    census = sum(c for c, _, _ in cols)
    dd = sum(d for _, d, _ in cols)
    ii = sum(i for _, _, i in cols)
    if ii <= 0 or dd <= 0:
        raise ValueError("II and DD totals must both be positive")
    stat = 0.0
    min_exp = math.inf
    for c_k, _, ii_k in cols:
        num = (ii_k * census - c_k * ii) ** 2
        stat += num / (census * c_k * ii) + num / (census * c_k * dd)
        min_exp = min(min_exp, c_k * ii / census, c_k * dd / census)
    df = len(cols) - 1
    return StratumChiSquare(stratum, stat, df, chi_square_sf(stat, df), min_exp)


def chi_square_homogeneity(cells: Iterable[CellCounts]) -> HomogeneityResult:
    """Per-stratum homogeneity tests plus their sum across strata.

    Strata that cannot be tested (a single region, no imputations or no
    data-defined persons) are listed in ``excluded``. Strata with small
    expected counts are kept but reported through ``flagged``.
    """
    result = HomogeneityResult()
    for stratum, group in group_by_stratum(cells).items():
        try:
            result.strata.append(stratum_chi_square(stratum, group))
        except ValueError as exc:
            result.excluded.append((stratum, str(exc)))
    stat = 0.0
    for s in result.strata:
        stat += s.statistic
    result.statistic = stat
    result.df = sum(s.df for s in result.strata)
    result.p_value = chi_square_sf(stat, result.df) if result.df else 1.0
    return result
