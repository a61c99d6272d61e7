"""Post-stratum dual system estimates and their synthetic allocation to regions."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import (
    AllocationTable,
    CellCounts,
    FormulaKind,
    GeoHierarchy,
    StratumEstimate,
    StratumSurveyInputs,
    group_by_stratum,
)

NORMALIZATION_TOL = 1e-9


class EstimationError(ValueError):
    """Base class for inputs on which an estimate is undefined."""


class UndefinedRateError(EstimationError):
    pass


class DegenerateStratumError(EstimationError):
    pass


class MappingError(EstimationError):
    def __init__(self, level: str, offenders: Sequence[str]):
        self.level = level
        self.offenders = list(offenders)
        super().__init__(f"regions not resolvable at level {level!r}: {', '.join(self.offenders)}")


class AllocationWarning(UserWarning):
    pass


def _label(stratum):
    return "" if stratum is None else f" in stratum {stratum!r}"


def correct_enumeration_rate(ce: int, ee: int, stratum: str | None = None) -> float:
    """Share of sampled census enumerations that are correct."""
    if ce < 0 or ee < 0:
        raise ValueError(f"negative E-sample counts{_label(stratum)}")
    total = ce + ee
    if total == 0:
        raise UndefinedRateError(f"correct enumeration rate undefined (CE + EE = 0){_label(stratum)}")
    return ce / total


def dse(dd: float, cr: float, mr: float, stratum: str | None = None) -> float:
    """Dual system estimate ``DD * CR / MR``."""
    if mr == 0:
        raise UndefinedRateError(f"match rate is zero{_label(stratum)}")
    if not 0 < mr <= 1:
        raise ValueError(f"match rate {mr} outside (0, 1]{_label(stratum)}")
    if not 0 <= cr <= 1:
        raise ValueError(f"correct enumeration rate {cr} outside [0, 1]{_label(stratum)}")
    if dd < 0:
        raise ValueError(f"negative data-defined count{_label(stratum)}")
    return dd * cr / mr


def correction_factors(dse_value: float, census: int, dd: int,
                       stratum: str | None = None) -> tuple[float, float]:
    """Return ``(ccf, dcf)``, the coverage factors over census and over DD."""
    if census <= 0 or dd <= 0:
        raise DegenerateStratumError(
            f"coverage factors need C > 0 and DD > 0 (C={census}, DD={dd}){_label(stratum)}")
    return dse_value / census, dse_value / dd


def estimate_stratum(survey: StratumSurveyInputs, cells: Sequence[CellCounts]) -> StratumEstimate:
    census = sum(c.census for c in cells)
    dd = sum(c.dd for c in cells)
    ii = sum(c.ii for c in cells)
    cr = correct_enumeration_rate(survey.ce, survey.ee, survey.stratum)
    value = dse(dd, cr, survey.mr, survey.stratum)
    ccf, dcf = correction_factors(value, census, dd, survey.stratum)
    return StratumEstimate(survey.stratum, value, ccf, dcf, census, dd, ii)


def estimate_all(cells: Iterable[CellCounts],
                 strata: Iterable[StratumSurveyInputs]) -> dict[str, StratumEstimate]:
    """Estimate every stratum that has cells, keyed and ordered by stratum id."""
    by_stratum = group_by_stratum(cells)
    survey = {s.stratum: s for s in strata}
    missing = sorted(set(by_stratum) - set(survey))
    if missing:
        raise EstimationError(f"no survey inputs for strata: {', '.join(missing)}")
    return {s: estimate_stratum(survey[s], group) for s, group in by_stratum.items()}


def allocate(estimate: StratumEstimate, cells: Sequence[CellCounts], formula: FormulaKind,
             ii_weights: Mapping[str, float] | None = None,
             notes: list[str] | None = None) -> dict[str, float]:
    """Distribute one stratum's estimate over its regions.

    Parameters
    ----------
    estimate : StratumEstimate
        Supplies the stratum total being distributed.
    cells : sequence of CellCounts
        All cells of that stratum, one per region.
    formula : FormulaKind
        ``CB`` splits in proportion to census counts, ``ALT1`` in
        proportion to data-defined counts, ``ALT2`` adds the undercount
        to the census in proportion to imputations and ``ALT3`` adds it
        in proportion to data-defined counts.
    ii_weights : mapping, optional
        Replacement imputation counts for the ``ALT2`` weights, e.g. a
        single imputation pool.
    notes : list, optional
        Receives a message for each non-fatal event.

    Returns
    -------
    dict
        Region id to allocated persons. The values sum to ``estimate.dse``.

    Warns
    -----
    AllocationWarning
        ``ALT2`` on a stratum without imputations, which falls back to
        the census-proportional split.
    """
    formula = FormulaKind(formula)
    if not cells:
        raise DegenerateStratumError(f"no cells{_label(estimate.stratum)}")
    strays = {c.stratum for c in cells} - {estimate.stratum}
    if strays:
        raise ValueError(f"cells from other strata passed with {estimate.stratum!r}: {sorted(strays)}")
    cells = sorted(cells, key=lambda c: c.region)
    regions = [c.region for c in cells]
    if len(set(regions)) != len(regions):
        raise ValueError(f"duplicate regions{_label(estimate.stratum)}")

    census_tot = sum(c.census for c in cells)
    dd_tot = sum(c.dd for c in cells)
    if census_tot <= 0:
        raise DegenerateStratumError(f"census total is zero{_label(estimate.stratum)}")
    ii = None
    if ii_weights is not None:
        ii = np.array([float(ii_weights.get(r, 0)) for r in regions])
    if formula is FormulaKind.ALT2:
        weight_tot = sum(c.ii for c in cells) if ii is None else float(ii.sum())
        if weight_tot == 0:
            msg = (f"stratum {estimate.stratum!r} has no imputations; "
                   "alt2 falls back to census-proportional allocation")
            warnings.warn(msg, AllocationWarning, stacklevel=2)
            if notes is not None:
                notes.append(msg)
    if formula in (FormulaKind.ALT1, FormulaKind.ALT3) and dd_tot <= 0:
        raise DegenerateStratumError(f"data-defined total is zero{_label(estimate.stratum)}")

    values = allocate_arrays(
        np.array([c.census for c in cells], dtype=float),
        np.array([c.dd for c in cells], dtype=float),
        np.array([c.ii for c in cells], dtype=float) if ii is None else ii,
        estimate.dse,
        formula,
    )
    if notes is not None:
        for r, v in zip(regions, values):
            if v < 0:
                notes.append(f"{formula.value}: negative allocation {v!r} at ({estimate.stratum}, {r})")
    return dict(zip(regions, values.tolist()))


def allocate_arrays(census, dd, ii, total, formula: FormulaKind) -> np.ndarray:
    """Vectorized allocation along the last axis.

    ``census``, ``dd`` and ``ii`` have shape ``(..., K)`` and ``total``
    broadcasts against ``(...)``. Rows whose required total is zero come
    back as NaN, except ``ALT2`` rows without imputations, which use the
    census-proportional split.
    """
    formula = FormulaKind(formula)
    census = np.asarray(census, dtype=float)
    dd = np.asarray(dd, dtype=float)
    ii = np.asarray(ii, dtype=float)
    total = np.asarray(total, dtype=float)[..., None]
    census_tot = census.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        cb = census * total / census_tot
        if formula is FormulaKind.CB:
            return cb
        if formula is FormulaKind.ALT1:
            return dd * total / dd.sum(axis=-1, keepdims=True)
        if formula is FormulaKind.ALT3:
            return census + (total - census_tot) * (dd / dd.sum(axis=-1, keepdims=True))
        ii_tot = ii.sum(axis=-1, keepdims=True)
        alt2 = census + (total - census_tot) * (ii / ii_tot)
        return np.where(ii_tot == 0, cb, alt2)


def allocate_all(estimates: Mapping[str, StratumEstimate], cells: Iterable[CellCounts],
                 formula: FormulaKind,
                 ii_weights: Mapping[tuple[str, str], float] | None = None) -> AllocationTable:
    """Allocate every stratum with one formula."""
    formula = FormulaKind(formula)
    table = AllocationTable(formula)
    for stratum, group in group_by_stratum(cells).items():
        weights = None
        if ii_weights is not None:
            weights = {r: w for (s, r), w in ii_weights.items() if s == stratum}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AllocationWarning)
            alloc = allocate(estimates[stratum], group, formula, weights, table.notes)
        for region, value in alloc.items():
            table.entries[(stratum, region)] = value
    return table


def aggregate_regions(tables: AllocationTable | Iterable[AllocationTable], geo: GeoHierarchy | None,
                      level: str = "region") -> dict[str, float]:
    """Sum allocations over strata for every unit at ``level``.

    Summation runs over sorted (stratum, region) keys so totals do not
    depend on insertion order.
    """
    if isinstance(tables, AllocationTable):
        tables = [tables]
    entries: dict[tuple[str, str], float] = {}
    for t in tables:
        entries.update(t.entries)
    if level != "region":
        if geo is None:
            raise ValueError(f"level {level!r} needs a GeoHierarchy")
        offenders = geo.missing({r for _, r in entries}, level)
        if offenders:
            raise MappingError(level, offenders)
    totals: dict[str, float] = {}
    for key in sorted(entries):
        unit = key[1] if level == "region" else geo.resolve(key[1], level)
        totals[unit] = totals.get(unit, 0.0) + entries[key]
    return dict(sorted(totals.items()))


@dataclass
class NormalizationReport:
    residuals: dict[str, float] = field(default_factory=dict)
    flagged: list[str] = field(default_factory=list)
    tol: float = NORMALIZATION_TOL

    @property
    def ok(self) -> bool:
        return not self.flagged

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values(), default=0.0)


def check_normalization(table: AllocationTable, estimates: Iterable[StratumEstimate] | Mapping,
                        tol: float = NORMALIZATION_TOL) -> NormalizationReport:
    """Relative gap between each stratum's allocated total and its estimate."""
    if isinstance(estimates, Mapping):
        estimates = estimates.values()
    by_id = {e.stratum: e for e in estimates}
    report = NormalizationReport(tol=tol)
    for stratum in table.strata():
        est = by_id[stratum].dse
        gap = abs(table.stratum_total(stratum) - est)
        report.residuals[stratum] = gap / est if est else gap
        if report.residuals[stratum] > tol:
            report.flagged.append(stratum)
    return report
