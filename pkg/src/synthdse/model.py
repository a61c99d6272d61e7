"""Domain types for synthetic dual system estimation.

Counts are exact Python integers. Everything derived from them (rates,
factors, allocations) is a float.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np


class FormulaKind(str, enum.Enum):
    """The four synthetic allocation formulas."""

    CB = "cb"
    ALT1 = "alt1"
    ALT2 = "alt2"
    ALT3 = "alt3"

    @classmethod
    def parse(cls, name: str) -> list["FormulaKind"]:
        name = name.strip().lower()
        if name == "all":
            return list(cls)
        return [cls(name)]


@dataclass(frozen=True)
class CellCounts:
    """Census counts for one (post-stratum, region) cell.

    ``census`` is the total census count, ``dd`` the data-defined persons
    and ``ii`` the whole-person imputations; a well-formed cell has
    ``census == dd + ii``. Construction does not enforce this so that
    malformed input can be reported by :func:`validate_cells`.
    """

    stratum: str
    region: str
    census: int
    dd: int
    ii: int

    @property
    def key(self) -> tuple[str, str]:
        return (self.stratum, self.region)


@dataclass(frozen=True)
class StratumSurveyInputs:
    """E-sample and P-sample quantities for one post-stratum.

    ``mr`` is the estimated P-sample match rate and is taken as given.
    """

    stratum: str
    ce: int
    ee: int
    mr: float


@dataclass(frozen=True)
class StratumEstimate:
    stratum: str
    dse: float
    ccf: float
    dcf: float
    census: int
    dd: int
    ii: int


@dataclass
class AllocationTable:
    """Per-cell synthetic estimates produced by one formula.

    ``notes`` collects non-fatal events (fallbacks, sub-census cells)
    encountered while allocating.
    """

    formula: FormulaKind
    entries: dict[tuple[str, str], float] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def strata(self) -> list[str]:
        return sorted({s for s, _ in self.entries})

    def stratum_total(self, stratum: str) -> float:
        total = 0.0
        for key in sorted(self.entries):
            if key[0] == stratum:
                total += self.entries[key]
        return total


@dataclass(frozen=True)
class GeoHierarchy:
    """Maps regions to states and, optionally, to county groups."""

    state: Mapping[str, str]
    group: Mapping[str, str] | None = None

    def resolve(self, region: str, level: str) -> str | None:
        if level == "region":
            return region
        if level == "state":
            return self.state.get(region)
        if level == "group":
            return None if self.group is None else self.group.get(region)
        raise ValueError(f"unknown geographic level {level!r}")

    def missing(self, regions: Iterable[str], level: str = "state") -> list[str]:
        return sorted({r for r in regions if self.resolve(r, level) is None})


_SCENARIO_FIELDS = ("ce1", "ce2", "ee1", "ee2", "mn1", "mn2", "nn1", "nn2", "ii1", "ii2")


@dataclass(frozen=True)
class TwoStateScenario:
    """Counts for a single post-stratum split across two states.

    ``lam`` is the size ratio of state 2 to state 1 (1.0 for the
    equal-size case).
    """

    ce1: float
    ce2: float
    ee1: float
    ee2: float
    mn1: float
    mn2: float
    nn1: float
    nn2: float
    ii1: float
    ii2: float
    lam: float = 1.0

    def __post_init__(self):
        # numpy scalars would overflow in the squared-denominator algebra
        for name in _SCENARIO_FIELDS + ("lam",):
            value = getattr(self, name)
            if isinstance(value, np.generic):
                object.__setattr__(self, name, value.item())
        counts = tuple(getattr(self, name) for name in _SCENARIO_FIELDS)
        if any(c < 0 for c in counts):
            raise ValueError("scenario counts must be nonnegative")
        if self.mn1 <= 0 or self.mn2 <= 0:
            raise ValueError("matched non-mover counts must be positive")
        if not self.lam > 0:
            raise ValueError("lam must be positive")

    def scaled(self, factor: float) -> "TwoStateScenario":
        return TwoStateScenario(
            *(factor * getattr(self, f) for f in _SCENARIO_FIELDS),
            lam=self.lam,
        )

    @classmethod
    def equal_size(cls, ce, ee1, ee2, ii1, ii2, mn=500, nn=500) -> "TwoStateScenario":
        return cls(ce, ce, ee1, ee2, mn, mn, nn, nn, ii1, ii2)


def _as_grid(value, shape, name) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    try:
        return np.broadcast_to(arr, shape).copy()
    except ValueError:
        raise ValueError(f"{name} has shape {arr.shape}, expected broadcastable to {shape}") from None


@dataclass
class SimConfig:
    """Configuration for the Monte Carlo testbed.

    Per-cell parameters accept a scalar, a per-region vector or a full
    ``(n_strata, n_regions)`` grid and are broadcast on construction.

    Parameters
    ----------
    true_pop : array_like
        Expected true persons per cell.
    capture_prob : array_like
        Probability a true person is enumerated by the census.
    ee_rate : array_like
        Probability a true person also generates an erroneous record.
    ii_rate : array_like
        Probability an enumerated person lacks data and is imputed.
    late_add_rate : array_like
        Second imputation pool; zero keeps a single pool.
    survey_prob : array_like
        Probability a true person is in the P-sample.
    pop_model : {"fixed", "poisson"}
        Whether cell truths are the configured values or Poisson draws
        around them (drawn once per seed).
    alt2_pool : {"total", "inherent", "late"}
        Which imputation pool weights the Alt2 allocation.
    """

    n_strata: int
    n_regions: int
    true_pop: object = 1000
    capture_prob: object = 0.95
    ee_rate: object = 0.0
    ii_rate: object = 0.0
    late_add_rate: object = 0.0
    survey_prob: object = 1.0
    pop_model: str = "fixed"
    alt2_pool: str = "total"
    n_reps: int = 100
    seed: int = 0
    strata_names: list[str] | None = None
    region_names: list[str] | None = None

    def __post_init__(self):
        if int(self.n_strata) < 1 or int(self.n_regions) < 1:
            raise ValueError("n_strata and n_regions must be positive")
        if int(self.n_reps) < 1:
            raise ValueError("n_reps must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.pop_model not in ("fixed", "poisson"):
            raise ValueError(f"unknown pop_model {self.pop_model!r}")
        if self.alt2_pool not in ("total", "inherent", "late"):
            raise ValueError(f"unknown alt2_pool {self.alt2_pool!r}")
        shape = self.shape
        self.true_pop = _as_grid(self.true_pop, shape, "true_pop")
        self.capture_prob = _as_grid(self.capture_prob, shape, "capture_prob")
        self.ee_rate = _as_grid(self.ee_rate, shape, "ee_rate")
        self.ii_rate = _as_grid(self.ii_rate, shape, "ii_rate")
        self.late_add_rate = _as_grid(self.late_add_rate, shape, "late_add_rate")
        self.survey_prob = _as_grid(self.survey_prob, shape, "survey_prob")
        if (self.true_pop <= 0).any():
            raise ValueError("true_pop must be positive in every cell")
        if ((self.capture_prob <= 0) | (self.capture_prob > 1)).any():
            raise ValueError("capture_prob must lie in (0, 1]")
        for name in ("ee_rate", "ii_rate", "late_add_rate"):
            arr = getattr(self, name)
            if ((arr < 0) | (arr >= 1)).any():
                raise ValueError(f"{name} must lie in [0, 1)")
        if ((self.ii_rate + self.late_add_rate) >= 1).any():
            raise ValueError("ii_rate + late_add_rate must stay below 1")
        if ((self.survey_prob <= 0) | (self.survey_prob > 1)).any():
            raise ValueError("survey_prob must lie in (0, 1]")
        if self.strata_names is None:
            self.strata_names = [f"S{i + 1}" for i in range(self.n_strata)]
        if self.region_names is None:
            self.region_names = [f"R{k + 1}" for k in range(self.n_regions)]
        if len(self.strata_names) != self.n_strata or len(self.region_names) != self.n_regions:
            raise ValueError("name lists must match n_strata / n_regions")

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.n_strata), int(self.n_regions))

    def to_dict(self) -> dict:
        out = {}
        for name in ("n_strata", "n_regions", "n_reps", "seed", "pop_model", "alt2_pool",
                     "strata_names", "region_names"):
            out[name] = getattr(self, name)
        for name in ("true_pop", "capture_prob", "ee_rate", "ii_rate", "late_add_rate", "survey_prob"):
            out[name] = getattr(self, name).tolist()
        return out


def validate_cells(cells: Iterable[CellCounts]) -> list[str]:
    """Return a list of human-readable violations; empty means well-formed."""
    problems = []
    seen = set()
    for cell in cells:
        where = f"({cell.stratum}, {cell.region})"
        for name in ("census", "dd", "ii"):
            value = getattr(cell, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                problems.append(f"{where}: {name} is not an integer ({value!r})")
            elif value < 0:
                problems.append(f"{where}: {name} is negative ({value})")
        try:
            if cell.census != cell.dd + cell.ii:
                problems.append(f"{where}: C ≠ DD + II ({cell.census} != {cell.dd} + {cell.ii})")
        except TypeError:
            pass
        if cell.key in seen:
            problems.append(f"{where}: duplicate (stratum, region) key")
        seen.add(cell.key)
    return problems


def group_by_stratum(cells: Iterable[CellCounts]) -> dict[str, list[CellCounts]]:
    """Group cells by stratum, each group sorted by region id."""
    out: dict[str, list[CellCounts]] = {}
    for cell in cells:
        out.setdefault(cell.stratum, []).append(cell)
    return {s: sorted(v, key=lambda c: c.region) for s, v in sorted(out.items())}
