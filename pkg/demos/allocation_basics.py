"""Estimate one post-stratum and spread it over two regions four ways."""

from synthdse import CellCounts, FormulaKind, StratumSurveyInputs, allocate, estimate_all

# Two regions with the same census count but different imputation counts.
cells = [
    CellCounts("S1", "A", census=100, dd=90, ii=10),
    CellCounts("S1", "B", census=100, dd=70, ii=30),
]
# 84 correct and 16 erroneous enumerations, 64% of the P-sample matched.
survey = [StratumSurveyInputs("S1", ce=84, ee=16, mr=0.64)]

est = estimate_all(cells, survey)["S1"]
print(f"dse {est.dse:.3f}  ccf {est.ccf:.4f}  dcf {est.dcf:.4f}")

# cb splits by census, alt1 by data-defined counts, alt2 adds the
# undercount by imputations, alt3 adds it by data-defined counts.
for f in FormulaKind:
    out = allocate(est, cells, f)
    print(f"{f.value:5s}", {r: round(v, 3) for r, v in out.items()}, "sum", round(sum(out.values()), 9))

# Region B imputes more, so alt2 hands it more of the undercount while
# alt1 and alt3 hand more to A, which has more data-defined persons.
