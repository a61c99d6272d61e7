"""Comparison statistics: shares, relative differences and state-adjusted differences."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import Iterable, Mapping

from .model import CellCounts, GeoHierarchy, group_by_stratum

DEFAULT_Z = 1.96


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class ShareRecord:
    unit: str
    share: float
    share_diff: float
    se: float
    ci_lo: float
    ci_hi: float


def shares(totals: Mapping[str, float]) -> dict[str, float]:
    """Each unit's fraction of the national total."""
    if any(v < 0 for v in totals.values()):
        raise ValueError("totals must be nonnegative")
    national = math.fsum(totals.values())
    if national <= 0:
        raise UndefinedMetricError("national total is zero")
    return {k: v / national for k, v in totals.items()}


def share_difference_ci(syn_share: float, census_share: float, se: float,
                        z: float = DEFAULT_Z, unit: str = "") -> ShareRecord:
    if se < 0:
        raise ValueError("standard error must be nonnegative")
    diff = syn_share - census_share
    return ShareRecord(unit, syn_share, diff, se, diff - z * se, diff + z * se)


def mean_imputation_rate(cells: Iterable[CellCounts]) -> tuple[float, int]:
    """Mean over strata of the imputation percentage, for one state.

    Cells are summed per stratum first, so several regions of the same
    state and stratum form one term. Strata with a zero census count are
    skipped. Returns ``(nan, 0)`` when no stratum qualifies.
    """
    rates = []
    for group in group_by_stratum(cells).values():
        census = sum(c.census for c in group)
        if census != 0:
            rates.append(sum(c.ii for c in group) / census * 100.0)
    if not rates:
        return math.nan, 0
    return math.fsum(rates) / len(rates), len(rates)


def mir_by_state(cells: Iterable[CellCounts], geo: GeoHierarchy) -> dict[str, tuple[float, int]]:
    by_state: dict[str, list[CellCounts]] = {}
    for c in cells:
        by_state.setdefault(geo.state[c.region], []).append(c)
    return {s: mean_imputation_rate(v) for s, v in sorted(by_state.items())}


def reldif_census(syn: float, census: float) -> float:
    if census == 0:
        raise UndefinedMetricError("census base is zero")
    return (syn - census) / census * 100.0


def reldif_dd(syn: float, dd: float) -> float:
    if dd == 0:
        raise UndefinedMetricError("data-defined base is zero")
    return (syn - dd) / dd * 100.0


def sad(syn: float, dd: float, ii_state: float, dd_state: float) -> float:
    """State adjusted difference, in percent.

    The relative difference over DD minus the state's overall
    imputation-to-DD ratio.
    """
    if dd == 0 or dd_state == 0:
        raise UndefinedMetricError("zero data-defined denominator")
    return ((syn - dd) / dd - ii_state / dd_state) * 100.0


def state_ii_dd_ratio(ii_census_pct: float) -> float:
    """Convert an imputation rate over census (percent) to the II/DD ratio."""
    return ii_census_pct / (100.0 - ii_census_pct)


@dataclass(frozen=True)
class Summary:
    min: float
    max: float
    median: float
    mean: float
    sd: float
    n: int
    sd_defined: bool = True


def summarize(values: Iterable[float]) -> Summary:
    """Five-number summary; ``sd`` uses the n - 1 denominator."""
    values = list(values)
    if not values:
        raise UndefinedMetricError("cannot summarize an empty list")
    n = len(values)
    sd_defined = n > 1
    return Summary(
        min=min(values),
        max=max(values),
        median=statistics.median(values),
        mean=math.fsum(values) / n,
        sd=statistics.stdev(values) if sd_defined else 0.0,
        n=n,
        sd_defined=sd_defined,
    )
