"""Analysis pipelines that turn loaded inputs into flat reports."""

from __future__ import annotations

from typing import Iterable, Mapping, Sequence

from . import estimator, metrics
from .homogeneity import chi_square_homogeneity
from .io import CountyGroupRow, Report
from .model import CellCounts, FormulaKind, GeoHierarchy, StratumSurveyInputs, TwoStateScenario
from .simulator import run_monte_carlo
from .variance import delta_comparison, empirical_frequency

PUBLISHED_TOL = 0.001


def estimate_report(cells, strata) -> Report:
    estimates = estimator.estimate_all(cells, strata)
    survey = {s.stratum: s for s in strata}
    rows = []
    for sid, e in estimates.items():
        s = survey[sid]
        rows.append({"stratum": sid, "C": e.census, "DD": e.dd, "II": e.ii, "CE": s.ce, "EE": s.ee,
                     "MR": s.mr, "CR": estimator.correct_enumeration_rate(s.ce, s.ee),
                     "dse": e.dse, "ccf": e.ccf, "dcf": e.dcf})
    return Report("estimate", list(rows[0]) if rows else ["stratum"], rows)


def allocation_tables(cells, strata, formulas: Sequence[FormulaKind]):
    estimates = estimator.estimate_all(cells, strata)
    return estimates, {f: estimator.allocate_all(estimates, cells, f) for f in formulas}


def allocation_report(cells, strata, formulas: Sequence[FormulaKind]) -> Report:
    estimates, tables = allocation_tables(cells, strata, formulas)
    rows, notes, residuals = [], [], {}
    for f, table in tables.items():
        for (s, r), value in sorted(table.entries.items()):
            rows.append({"formula": f.value, "stratum": s, "region": r, "S": value})
        notes += table.notes
        residuals[f.value] = estimator.check_normalization(table, estimates).max_residual
    return Report("allocate", ["formula", "stratum", "region", "S"], rows,
                  extra={"notes": notes, "normalization_max_residual": residuals})


def _census_by(cells: Iterable[CellCounts], geo: GeoHierarchy, level: str, attr: str = "census"):
    out: dict[str, int] = {}
    for c in sorted(cells, key=lambda c: c.key):
        unit = geo.resolve(c.region, level)
        out[unit] = out.get(unit, 0) + getattr(c, attr)
    return dict(sorted(out.items()))


def compare_report(cells, strata, geo: GeoHierarchy, se: Mapping[str, float],
                   formulas: Sequence[FormulaKind] = tuple(FormulaKind),
                   z: float = metrics.DEFAULT_Z) -> tuple[Report, Report]:
    """State share differences with intervals, and the matching plot data.

    Plot rows carry each formula's share difference and the interval
    around the census-formula difference.
    """
    _, tables = allocation_tables(cells, strata, formulas)
    census_share = metrics.shares(_census_by(cells, geo, "state"))
    rows, plot = [], {}
    for f, table in tables.items():
        syn_share = metrics.shares(estimator.aggregate_regions(table, geo, "state"))
        for state in census_share:
            rec = metrics.share_difference_ci(syn_share[state], census_share[state], se[state], z, state)
            rows.append({"state": state, "formula": f.value, "census_share": census_share[state],
                         "syn_share": rec.share, "share_diff": rec.share_diff, "se": rec.se,
                         "ci_lo": rec.ci_lo, "ci_hi": rec.ci_hi})
            entry = plot.setdefault(state, {"state": state})
            entry[f"diff_{f.value}"] = rec.share_diff
            if f is FormulaKind.CB:
                entry["ci_lo"], entry["ci_hi"] = rec.ci_lo, rec.ci_hi
    cols = ["state", "formula", "census_share", "syn_share", "share_diff", "se", "ci_lo", "ci_hi"]
    plot_cols = ["state"] + [f"diff_{f.value}" for f in formulas]
    if FormulaKind.CB in formulas:
        plot_cols += ["ci_lo", "ci_hi"]
    return Report("compare", cols, rows), Report("compare_plot", plot_cols, list(plot.values()))


SAD_COLUMNS = ["state", "group", "formula", "census", "dd", "S", "reldif_c", "reldif_d", "sad",
               "published_sad", "sad_error"]
SAD_PERCENT = frozenset({"reldif_c", "reldif_d", "sad", "published_sad", "sad_error"})


def _sad_summary(rows) -> dict:
    out = {}
    for f in dict.fromkeys(r["formula"] for r in rows):
        s = metrics.summarize(r["sad"] for r in rows if r["formula"] == f)
        out[f] = {"min": s.min, "max": s.max, "median": s.median, "mean": s.mean, "sd": s.sd,
                  "n": s.n, "sd_defined": s.sd_defined}
    return out


def sad_from_published(groups: Sequence[CountyGroupRow], state_rates: Mapping[str, float]) -> Report:
    """Rebuild SynDSE from published relative differences and recompute SAD.

    The state offset is the state's imputation rate over census,
    converted to II/DD.
    """
    rows = []
    for g in groups:
        offset = metrics.state_ii_dd_ratio(state_rates[g.state])
        for f, rel in g.reldif.items():
            syn = g.census * (1 + rel / 100.0)
            value = metrics.sad(syn, g.dd, offset, 1.0)
            published = g.published_sad.get(f)
            rows.append({"state": g.state, "group": g.group, "formula": f, "census": g.census, "dd": g.dd,
                         "S": syn, "reldif_c": metrics.reldif_census(syn, g.census),
                         "reldif_d": metrics.reldif_dd(syn, g.dd), "sad": value, "published_sad": published,
                         "sad_error": None if published is None else value - published})
    return Report("sad", SAD_COLUMNS, rows, SAD_PERCENT, extra={"summary": _sad_summary(rows)})


def sad_from_cells(cells, strata, geo: GeoHierarchy,
                   formulas: Sequence[FormulaKind] = tuple(FormulaKind)) -> Report:
    """County-group relative and state adjusted differences from raw cells."""
    if geo.group is None:
        raise ValueError("geography has no county groups")
    group_state: dict[str, str] = {}
    for region, grp in geo.group.items():
        st = geo.state[region]
        if group_state.setdefault(grp, st) != st:
            raise ValueError(f"county group {grp!r} spans states {group_state[grp]} and {st}")
    _, tables = allocation_tables(cells, strata, formulas)
    census = _census_by(cells, geo, "group")
    dd = _census_by(cells, geo, "group", "dd")
    ii_state = _census_by(cells, geo, "state", "ii")
    dd_state = _census_by(cells, geo, "state", "dd")
    rows = []
    for f, table in tables.items():
        totals = estimator.aggregate_regions(table, geo, "group")
        for grp, syn in totals.items():
            st = group_state[grp]
            rows.append({"state": st, "group": grp, "formula": f.value, "census": census[grp], "dd": dd[grp],
                         "S": syn, "reldif_c": metrics.reldif_census(syn, census[grp]),
                         "reldif_d": metrics.reldif_dd(syn, dd[grp]),
                         "sad": metrics.sad(syn, dd[grp], ii_state[st], dd_state[st])})
    return Report("sad", SAD_COLUMNS[:-2], rows, SAD_PERCENT, extra={"summary": _sad_summary(rows)})


def mir_report(cells, geo: GeoHierarchy) -> Report:
    rows = [{"state": s, "mir": m, "n_star": n} for s, (m, n) in metrics.mir_by_state(cells, geo).items()]
    return Report("mir", ["state", "mir", "n_star"], rows, frozenset({"mir"}))


def homogeneity_report(cells) -> Report:
    res = chi_square_homogeneity(cells)
    rows = [{"stratum": s.stratum, "statistic": s.statistic, "df": s.df, "p_value": s.p_value,
             "min_expected": s.min_expected, "low_expected": s.low_expected, "note": ""}
            for s in res.strata]
    rows += [{"stratum": s, "note": f"excluded: {why}"} for s, why in res.excluded]
    worst = res.worst
    rows.append({"stratum": "(combined)", "statistic": res.statistic, "df": res.df, "p_value": res.p_value,
                 "note": "" if worst is None else f"worst stratum {worst.stratum}"})
    extra = {"combined": {"statistic": res.statistic, "df": res.df, "p_value": res.p_value},
             "worst": None if worst is None else {"stratum": worst.stratum, "p_value": worst.p_value},
             "flagged_low_expected": res.flagged}
    return Report("homogeneity", ["stratum", "statistic", "df", "p_value", "min_expected",
                                  "low_expected", "note"], rows, extra=extra)


def variance_report(scenarios: Sequence[tuple[str, TwoStateScenario]], threshold: float) -> tuple[Report, Report]:
    comps = []
    rows = []
    for sid, s in scenarios:
        c = delta_comparison(s)
        comps.append(c)
        rows.append({"id": sid, "lambda": s.lam, "size": c.size, "delta_c": c.delta_c, "delta_d": c.delta_d,
                     "diff_exact": c.diff_exact, "diff_direct": c.diff_direct, "diff_approx": c.diff_approx,
                     "predicted": c.predicted_winner.value, "actual": c.actual_winner.value})
    freq = empirical_frequency(comps, threshold)
    cols = ["id", "lambda", "size", "delta_c", "delta_d", "diff_exact", "diff_direct", "diff_approx",
            "predicted", "actual"]
    freq_report = Report("variance_frequency", ["size", "ccf", "dcf", "total"], freq.rows(),
                         extra={"ties": freq.ties, "threshold": threshold})
    return Report("variance", cols, rows, extra={"frequency": freq.rows(), "ties": freq.ties}), freq_report


def simulate_report(config, workers: int = 1) -> Report:
    mc = run_monte_carlo(config, workers=workers)
    d = mc.to_dict()
    rows = []
    for f, body in d["formulas"].items():
        for region in config.region_names:
            rows.append({"formula": f, "region": region, "truth": d["truth_region"][region],
                         "bias": body["bias"][region], "bias_se": body["bias_se"][region],
                         "mse": body["mse"][region], "win_freq": body["win_freq"][region]})
    return Report("simulate", ["formula", "region", "truth", "bias", "bias_se", "mse", "win_freq"], rows,
                  extra={"monte_carlo": d})


def published_discrepancies(groups: Sequence[CountyGroupRow], tol: float = PUBLISHED_TOL) -> list[str]:
    """Rows whose published II columns disagree with C - DD beyond ``tol`` points."""
    out = []
    for g in groups:
        ii = g.census - g.dd
        if g.ii_dd is not None and abs(ii / g.dd * 100 - g.ii_dd) > tol:
            out.append(f"{g.state} {g.group} (line {g.line}): II/DD {ii / g.dd * 100:.4f} "
                       f"vs published {g.ii_dd:.3f}")
        if g.ii_census is not None and abs(ii / g.census * 100 - g.ii_census) > tol:
            out.append(f"{g.state} {g.group} (line {g.line}): II/C {ii / g.census * 100:.4f} "
                       f"vs published {g.ii_census:.3f}")
    return out


def structural_problems(groups: Sequence[CountyGroupRow]) -> list[str]:
    out = []
    seen = set()
    for g in groups:
        where = f"{g.state} {g.group} (line {g.line})"
        if g.census <= 0 or g.dd <= 0:
            out.append(f"{where}: census and DD must be positive")
        if g.dd > g.census:
            out.append(f"{where}: DD exceeds census, implied II is negative")
        if (g.state, g.group) in seen:
            out.append(f"{where}: duplicate county group")
        seen.add((g.state, g.group))
    return out
