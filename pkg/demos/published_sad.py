"""Recompute state adjusted differences for the shipped county-group tables."""

from synthdse import io
from synthdse.reports import sad_from_published

rates = io.load_state_rates(io.data_path("state_imputation_rates.csv"))

for state in ("nj", "ny", "ca"):
    groups = io.load_county_groups(io.data_path(f"county_groups_{state}.csv"))
    report = sad_from_published(groups, rates)
    worst = max(abs(r["sad_error"]) for r in report.rows)
    print(f"{state.upper()}: {len(groups)} county groups, largest gap to the published SAD {worst:.4f} points")
    for formula, s in report.extra["summary"].items():
        print(f"   {formula:5s} mean {s['mean']:6.3f}  sd {s['sd']:5.3f}  range [{s['min']:.3f}, {s['max']:.3f}]")

# A few rows in detail. SAD is the relative difference over DD minus the
# state's overall imputation-to-DD ratio.
groups = io.load_county_groups(io.data_path("county_groups_nj.csv"))
report = sad_from_published(groups, rates)
for row in report.rows[:6]:
    print(f"{row['group']:<40s} {row['formula']:5s} reldif_d {row['reldif_d']:6.3f}  sad {row['sad']:6.3f}")
