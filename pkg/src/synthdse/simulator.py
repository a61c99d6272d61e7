"""Monte Carlo testbed for the four synthetic allocation formulas.

A known population is enumerated by a simulated census and a simulated
post-enumeration survey. The estimator then distributes each stratum's
dual system estimate back to regions and the allocations are scored
against the known truth.

Measurement model, per true person in cell (i, k):

* the census enumerates the person with probability ``capture_prob``;
* an enumerated person is imputed (``ii_rate``), a late add
  (``late_add_rate``) or data-defined otherwise; data-defined enumerations
  of true persons are the correct enumerations;
* independently, the person produces an erroneous extra record with
  probability ``ee_rate``; such records are data-defined but not true;
* independently, the person is in the P-sample with probability
  ``survey_prob`` and is matched when they are a correct enumeration.

The match rate is matched / (matched + unmatched) among P-sample persons.
Random draws come from a Philox stream keyed by ``(seed, replicate,
stratum, region)``, so results do not depend on how replicates are split
across workers.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimator import allocate_arrays
from .homogeneity import equality_condition
from .model import CellCounts, FormulaKind, SimConfig, StratumSurveyInputs

PRNG_NAME = "numpy-philox4x64-seedsequence-v1"
CHUNK_SIZE = 256
FORMULAS = tuple(FormulaKind)
ORACLE_LIMIT = 10**7
ORACLE_MAX_PERSONS = 20

_POPULATION_STREAM = 0
_REPLICATE_STREAM = 1


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=key)))


def generate_population(config: SimConfig) -> np.ndarray:
    """True persons per (stratum, region) cell as an integer grid."""
    if config.pop_model == "fixed":
        pop = config.true_pop
        if not np.all(pop == np.round(pop)):
            raise ValueError("fixed true_pop must be integral")
        truth = pop.astype(np.int64)
    else:
        truth = _stream(config.seed, _POPULATION_STREAM).poisson(config.true_pop).astype(np.int64)
    if truth.sum() <= 0:
        raise ValueError("generated population is empty")
    return truth


@dataclass
class Measurement:
    """Integer counts from one simulated census and survey, as grids."""

    census: np.ndarray
    dd: np.ndarray
    ii: np.ndarray
    ii_late: np.ndarray
    ce: np.ndarray
    ee: np.ndarray
    mn: np.ndarray
    nn: np.ndarray

    def cells(self, config: SimConfig) -> list[CellCounts]:
        out = []
        for i, s in enumerate(config.strata_names):
            for k, r in enumerate(config.region_names):
                out.append(CellCounts(s, r, int(self.census[i, k]), int(self.dd[i, k]), int(self.ii[i, k])))
        return out

    def survey(self, config: SimConfig) -> list[StratumSurveyInputs]:
        out = []
        for i, s in enumerate(config.strata_names):
            mn, nn = int(self.mn[i].sum()), int(self.nn[i].sum())
            mr = mn / (mn + nn) if mn + nn else 0.0
            out.append(StratumSurveyInputs(s, int(self.ce[i].sum()), int(self.ee[i].sum()), mr))
        return out


def _measure(truth: np.ndarray, config: SimConfig, rep: int) -> Measurement:
    shape = truth.shape
    grids = {name: np.zeros(shape, dtype=np.int64)
             for name in ("census", "dd", "ii", "ii_late", "ce", "ee", "mn", "nn")}
    for i in range(shape[0]):
        for k in range(shape[1]):
            rng = _stream(config.seed, _REPLICATE_STREAM, rep, i, k)
            n = int(truth[i, k])
            ii_rate = config.ii_rate[i, k]
            late = config.late_add_rate[i, k]
            captured = rng.binomial(n, config.capture_prob[i, k])
            inherent, late_adds, ce = rng.multinomial(captured, [ii_rate, late, 1.0 - ii_rate - late])
            ee = rng.binomial(n, config.ee_rate[i, k])
            q = config.survey_prob[i, k]
            mn = rng.binomial(ce, q)
            nn = rng.binomial(n - ce, q)
            grids["ii"][i, k] = inherent + late_adds
            grids["ii_late"][i, k] = late_adds
            grids["ce"][i, k] = ce
            grids["ee"][i, k] = ee
            grids["dd"][i, k] = ce + ee
            grids["census"][i, k] = captured + ee
            grids["mn"][i, k] = mn
            grids["nn"][i, k] = nn
    return Measurement(**grids)


def simulate_measurement(truth: np.ndarray, config: SimConfig, seed: int | None = None,
                         rep: int = 0) -> tuple[list[CellCounts], list[StratumSurveyInputs]]:
    """One simulated census plus survey.

    ``seed`` overrides ``config.seed``; ``rep`` selects the replicate
    substream.
    """
    if seed is not None:
        config = SimConfig(**{**config.to_dict(), "seed": seed})
    m = _measure(np.asarray(truth, dtype=np.int64), config, rep)
    return m.cells(config), m.survey(config)


def _alt2_weights(m: Measurement, pool: str) -> np.ndarray:
    if pool == "late":
        return m.ii_late
    if pool == "inherent":
        return m.ii - m.ii_late
    return m.ii


def estimate_grids(census, dd, ii, ce, ee, mn, nn, alt2_ii=None):
    """Vectorized estimation and allocation over leading batch axes.

    Inputs have shape ``(..., n_strata, n_regions)``. Returns the
    allocations, shape ``(4, ..., n_strata, n_regions)`` in
    ``FormulaKind`` order, the per-stratum estimates and a validity mask
    over the batch axes (False when any stratum is degenerate).
    """
    census = np.asarray(census, dtype=float)
    dd = np.asarray(dd, dtype=float)
    ce_tot = np.asarray(ce, dtype=float).sum(axis=-1)
    ee_tot = np.asarray(ee, dtype=float).sum(axis=-1)
    mn_tot = np.asarray(mn, dtype=float).sum(axis=-1)
    nn_tot = np.asarray(nn, dtype=float).sum(axis=-1)
    dd_tot = dd.sum(axis=-1)
    valid_stratum = (census.sum(axis=-1) > 0) & (dd_tot > 0) & (ce_tot + ee_tot > 0) & (mn_tot > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        mr = mn_tot / (mn_tot + nn_tot)
        dse = dd_tot * (ce_tot / (ce_tot + ee_tot)) / mr
    dse = np.where(valid_stratum, dse, np.nan)
    weights = ii if alt2_ii is None else alt2_ii
    alloc = np.stack([
        allocate_arrays(census, dd, weights if f is FormulaKind.ALT2 else ii, dse, f) for f in FORMULAS
    ])
    return alloc, dse, valid_stratum.all(axis=-1)


@dataclass
class _Moments:
    """Running count, mean and centred sum of squares (Chan et al. merge)."""

    n: int = 0
    mean: np.ndarray | float = 0.0
    m2: np.ndarray | float = 0.0

    @classmethod
    def of(cls, x: np.ndarray) -> "_Moments":
        if len(x) == 0:
            return cls()
        mean = x.mean(axis=0)
        return cls(len(x), mean, ((x - mean) ** 2).sum(axis=0))

    def merge(self, other: "_Moments") -> "_Moments":
        if other.n == 0:
            return self
        if self.n == 0:
            return other
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        m2 = self.m2 + other.m2 + delta ** 2 * (self.n * other.n / n)
        return _Moments(n, mean, m2)

    @property
    def var(self):
        return self.m2 / (self.n - 1) if self.n > 1 else self.m2 * 0.0

    @property
    def se(self):
        return np.sqrt(self.var / self.n) if self.n else self.m2 * np.nan


_COUNT_FIELDS = ("census", "dd", "ii", "ce", "ee")


def _run_chunk(args):
    config_dict, truth, start, stop = args
    config = SimConfig(**config_dict)
    truth = np.asarray(truth, dtype=np.int64)
    reps = [_measure(truth, config, rep) for rep in range(start, stop)]
    stack = {f: np.stack([getattr(m, f) for m in reps]) for f in Measurement.__dataclass_fields__}
    alt2 = np.stack([_alt2_weights(m, config.alt2_pool) for m in reps])
    alloc, dse, valid = estimate_grids(stack["census"], stack["dd"], stack["ii"], stack["ce"],
                                       stack["ee"], stack["mn"], stack["nn"], alt2_ii=alt2)

    out = {f: _Moments.of(stack[f].astype(float)) for f in _COUNT_FIELDS}
    v = alloc[:, valid]                                   # (4, n_valid, I, K)
    truth_region = truth.sum(axis=0).astype(float)
    region_s = v.sum(axis=2)                              # (4, n_valid, K)
    err = region_s - truth_region
    out["alloc"] = _Moments.of(np.moveaxis(v, 1, 0))
    out["err"] = _Moments.of(np.moveaxis(err, 1, 0))
    out["sqerr"] = _Moments.of(np.moveaxis(err ** 2, 1, 0))

    abs_err = np.abs(err)
    best = abs_err == abs_err.min(axis=0, keepdims=True)
    credit = best / best.sum(axis=0, keepdims=True)
    out["wins"] = _Moments.of(np.moveaxis(credit, 1, 0))

    cb, a1, a2 = v[0], v[1], v[2]
    lo, hi = np.minimum(a1, a2), np.maximum(a1, a2)
    slack = 1e-9 * np.maximum(np.abs(cb), 1.0)
    between = (cb >= lo - slack) & (cb <= hi + slack)
    out["between"] = _Moments.of(between.astype(float))

    dse_v = dse[valid]
    resid = np.abs(v.sum(axis=-1) - dse_v) / dse_v        # (4, n_valid, I)
    out["resid_max"] = resid.max(axis=(1, 2)) if resid.size else np.zeros(len(FORMULAS))
    out["n_invalid"] = int((~valid).sum())
    return out


@dataclass
class MonteCarloReport:
    """Replicate summaries; every array is indexed ``[formula, ...]`` in ``FormulaKind`` order."""

    config: dict
    prng: str
    n_reps: int
    n_valid: int
    truth: np.ndarray
    mean_counts: dict[str, np.ndarray]
    se_counts: dict[str, np.ndarray]
    mean_alloc: np.ndarray
    se_alloc: np.ndarray
    bias: np.ndarray
    bias_se: np.ndarray
    mse: np.ndarray
    win_freq: np.ndarray
    cb_between: float
    normalization_max: np.ndarray
    formulas: tuple[str, ...] = field(default_factory=lambda: tuple(f.value for f in FORMULAS))

    @property
    def truth_region(self) -> np.ndarray:
        return self.truth.sum(axis=0)

    def to_dict(self) -> dict:
        regions = self.config["region_names"]
        strata = self.config["strata_names"]
        formulas = {}
        for j, f in enumerate(self.formulas):
            formulas[f] = {
                "bias": dict(zip(regions, self.bias[j].tolist())),
                "bias_se": dict(zip(regions, self.bias_se[j].tolist())),
                "mse": dict(zip(regions, self.mse[j].tolist())),
                "win_freq": dict(zip(regions, self.win_freq[j].tolist())),
                "normalization_max": float(self.normalization_max[j]),
                "mean_alloc": {s: dict(zip(regions, self.mean_alloc[j, i].tolist()))
                               for i, s in enumerate(strata)},
            }
        return {
            "config": self.config,
            "prng": self.prng,
            "n_reps": self.n_reps,
            "n_valid": self.n_valid,
            "truth": {s: dict(zip(regions, self.truth[i].tolist())) for i, s in enumerate(strata)},
            "truth_region": dict(zip(regions, self.truth_region.tolist())),
            "mean_counts": {k: v.tolist() for k, v in self.mean_counts.items()},
            "cb_between_alt1_alt2": self.cb_between,
            "formulas": formulas,
        }


def run_monte_carlo(config: SimConfig, workers: int = 1) -> MonteCarloReport:
    """Replicate the census/survey/estimation pipeline ``config.n_reps`` times.

    Replicates are processed in fixed blocks of ``CHUNK_SIZE`` and the
    block summaries are merged in block order, so the report is
    bit-identical for any ``workers``.
    """
    truth = generate_population(config)
    cfg = config.to_dict()
    bounds = [(s, min(s + CHUNK_SIZE, config.n_reps)) for s in range(0, config.n_reps, CHUNK_SIZE)]
    jobs = [(cfg, truth, a, b) for a, b in bounds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(j) for j in jobs]

    acc = {}
    resid = np.zeros(len(FORMULAS))
    n_invalid = 0
    for part in parts:
        for key, mom in part.items():
            if isinstance(mom, _Moments):
                acc[key] = acc.get(key, _Moments()).merge(mom)
        resid = np.maximum(resid, part["resid_max"])
        n_invalid += part["n_invalid"]
    n_valid = config.n_reps - n_invalid
    if n_valid == 0:
        raise RuntimeError("every replicate had a degenerate stratum")

    def arr(key, attr):
        return np.asarray(getattr(acc[key], attr), dtype=float)

    return MonteCarloReport(
        config=cfg,
        prng=PRNG_NAME,
        n_reps=config.n_reps,
        n_valid=n_valid,
        truth=truth,
        mean_counts={f: arr(f, "mean") for f in _COUNT_FIELDS},
        se_counts={f: arr(f, "se") for f in _COUNT_FIELDS},
        mean_alloc=arr("alloc", "mean"),
        se_alloc=arr("alloc", "se"),
        bias=arr("err", "mean"),
        bias_se=arr("err", "se"),
        mse=arr("sqerr", "mean"),
        win_freq=arr("wins", "mean"),
        cb_between=float(np.mean(acc["between"].mean)),
        normalization_max=resid,
    )


def homogeneity_rejection_rate(config: SimConfig, level: float = 0.05) -> float:
    """Fraction of replicates in which the pooled imputation test rejects."""
    from .homogeneity import chi_square_homogeneity

    truth = generate_population(config)
    rejections = 0
    for rep in range(config.n_reps):
        cells, _ = simulate_measurement(truth, config, rep=rep)
        if chi_square_homogeneity(cells).p_value < level:
            rejections += 1
    return rejections / config.n_reps


def equality_rate(config: SimConfig) -> float:
    """Fraction of replicates where every stratum satisfies the exact equality condition."""
    truth = generate_population(config)
    hits = 0
    for rep in range(config.n_reps):
        cells, _ = simulate_measurement(truth, config, rep=rep)
        by = {}
        for c in cells:
            by.setdefault(c.stratum, []).append(c)
        hits += all(equality_condition(g)[0] for g in by.values())
    return hits / config.n_reps


# Exhaustive oracle ---------------------------------------------------------

@dataclass
class OracleResult:
    p_valid: float
    expected_counts: dict[str, np.ndarray]
    expected_alloc: np.ndarray
    n_outcomes: int


def _cell_distribution(n, p, ii_rate, late, ee_rate, q):
    """Exact law of (inherent, late, ce, ee, mn, nn) for one cell.

    Built person by person: each person's independent outcomes are added
    to every state reached so far.
    """
    person = []
    for (cap, pc), (err, pe), (sur, ps) in itertools.product(
            [("miss", 1 - p), ("inh", p * ii_rate), ("late", p * late), ("ce", p * (1 - ii_rate - late))],
            [(0, 1 - ee_rate), (1, ee_rate)],
            [(0, 1 - q), (1, q)]):
        prob = pc * pe * ps
        if prob > 0:
            step = (int(cap == "inh"), int(cap == "late"), int(cap == "ce"), err,
                    int(sur and cap == "ce"), int(sur and cap != "ce"))
            person.append((step, prob))
    states = {(0, 0, 0, 0, 0, 0): 1.0}
    for _ in range(n):
        nxt: dict = {}
        for state, w in states.items():
            for step, prob in person:
                key = tuple(a + b for a, b in zip(state, step))
                nxt[key] = nxt.get(key, 0.0) + w * prob
        states = nxt
    keys = np.array(sorted(states), dtype=np.int64).reshape(-1, 6)
    probs = np.array([states[tuple(k)] for k in keys])
    return keys, probs


def oracle_size(config: SimConfig, truth: np.ndarray) -> int:
    """Number of joint outcomes the oracle would sum over."""
    size = 1
    for i, k in np.ndindex(truth.shape):
        keys, _ = _cell_distribution(int(truth[i, k]), *(float(getattr(config, a)[i, k]) for a in
                                     ("capture_prob", "ii_rate", "late_add_rate", "ee_rate", "survey_prob")))
        size *= len(keys)
    return size


def small_instance_oracle(config: SimConfig, limit: int = ORACLE_LIMIT) -> OracleResult:
    """Exact expectations by summing over every outcome of a tiny instance.

    Returns expected counts per cell, the probability that no stratum is
    degenerate, and the expected allocation per formula conditional on
    that event.
    """
    truth = generate_population(config)
    persons = int(truth.sum())
    if persons > ORACLE_MAX_PERSONS:
        raise ValueError(f"instance has {persons} persons; the oracle handles at most {ORACLE_MAX_PERSONS}")
    dists = []
    size = 1
    for i, k in np.ndindex(truth.shape):
        dists.append(_cell_distribution(int(truth[i, k]), *(float(getattr(config, a)[i, k]) for a in
                     ("capture_prob", "ii_rate", "late_add_rate", "ee_rate", "survey_prob"))))
        size *= len(dists[-1][0])
    if size > limit:
        raise ValueError(f"outcome space has about {size:.3g} joint outcomes, above the limit {limit:.3g}")

    grids = np.meshgrid(*[np.arange(len(d[0])) for d in dists], indexing="ij")
    idx = [g.ravel() for g in grids]
    prob = np.ones(size)
    cols = []
    for d, ix in zip(dists, idx):
        prob = prob * d[1][ix]
        cols.append(d[0][ix])
    joint = np.stack(cols, axis=1).reshape(size, *truth.shape, 6)
    inherent, late, ce, ee, mn, nn = (joint[..., j] for j in range(6))
    ii = inherent + late
    census = ce + ii + ee
    dd = ce + ee
    pool = {"total": ii, "inherent": inherent, "late": late}[config.alt2_pool]
    alloc, _, valid = estimate_grids(census, dd, ii, ce, ee, mn, nn, alt2_ii=pool)
    p_valid = float(prob[valid].sum())
    expected = {name: np.tensordot(prob, arr.astype(float), axes=1)
                for name, arr in (("census", census), ("dd", dd), ("ii", ii), ("ce", ce), ("ee", ee))}
    if p_valid > 0:
        w = prob[valid] / p_valid
        expected_alloc = np.tensordot(w, np.moveaxis(alloc[:, valid], 1, 0), axes=1)
    else:
        expected_alloc = np.full((len(FORMULAS), *truth.shape), math.nan)
    return OracleResult(p_valid, expected, expected_alloc, size)
