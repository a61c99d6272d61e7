import csv
import io as stdio
import json

import pytest

from conftest import write
from synthdse import io
from synthdse.cli import main
from synthdse.estimator import allocate_all, estimate_all
from synthdse.model import FormulaKind

CELLS = "stratum,region,C,DD,II\nS1,A,100,90,10\nS1,B,100,70,30\n"
STRATA = "stratum,CE,EE,MR\nS1,84,16,0.64\n"      # dse = 160 * 0.84 / 0.64 = 210
GEO = "region,state,group\nA,NJ,g1\nB,NY,g2\n"
SE = "state,se_share_diff\nNJ,0.01\nNY,0.02\n"


@pytest.fixture
def files(tmp_path):
    return {
        "cells": write(tmp_path / "cells.csv", CELLS),
        "strata": write(tmp_path / "strata.csv", STRATA),
        "geo": write(tmp_path / "geo.csv", GEO),
        "se": write(tmp_path / "se.csv", SE),
    }


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.DictReader(stdio.StringIO(text)))


# loaders

def test_load_cells_one_row(tmp_path):
    cells = io.load_cells(write(tmp_path / "c.csv", "stratum,region,C,DD,II\nS1,A,100,90,10\n"))
    assert len(cells) == 1 and cells[0].census == 100


def test_load_cells_reports_line_numbers(tmp_path):
    path = write(tmp_path / "c.csv", "stratum,region,C,DD,II\nS1,A,100,95,10\n")
    with pytest.raises(io.InputError) as err:
        io.load_cells(path)
    assert err.value.problems == ["C ≠ DD + II at line 2"]


def test_load_cells_collects_every_problem(tmp_path):
    text = "# comment\nstratum,region,C,DD,II\nS1,A,100,95,10\nS1,A,5,5,0\nS1,B,-1,-1,0\n"
    with pytest.raises(io.InputError) as err:
        io.load_cells(write(tmp_path / "c.csv", text))
    msgs = err.value.problems
    assert "C ≠ DD + II at line 3" in msgs
    assert any("duplicate (S1, A) at line 4" in m for m in msgs)
    assert "negative count at line 5" in msgs


def test_load_cells_parse_errors(tmp_path):
    with pytest.raises(io.InputError, match="line 2: DD must be an integer"):
        io.load_cells(write(tmp_path / "a.csv", "stratum,region,C,DD,II\nS1,A,10,9.5,0\n"))
    with pytest.raises(io.InputError, match="header"):
        io.load_cells(write(tmp_path / "b.csv", "stratum,region,C,DD,XX\n"))
    with pytest.raises(io.InputError, match="expected 5 fields"):
        io.load_cells(write(tmp_path / "c.csv", "stratum,region,C,DD,II\nS1,A,10\n"))


def test_shipped_cells_fixture():
    cells = io.load_cells(io.data_path("cells_nj.csv"))
    assert len(cells) == 13
    assert next(c for c in cells if c.region == "Hudson").ii == 599525 - 567337


def test_consistent_triple_loads(files):
    cells = io.load_cells(files["cells"])
    strata = io.load_strata(files["strata"], cells)
    geo = io.load_geo(files["geo"], cells)
    assert io.load_se(files["se"], set(geo.state.values())) == {"NJ": 0.01, "NY": 0.02}
    assert estimate_all(cells, strata)["S1"].dse == pytest.approx(210.0)


def test_referential_errors(tmp_path, files):
    cells = io.load_cells(files["cells"])
    with pytest.raises(io.InputError) as err:
        io.load_geo(write(tmp_path / "g.csv", "region,state\nA,NJ\n"), cells)
    assert err.value.problems == ["region B missing from geography"]
    with pytest.raises(io.InputError, match="match rate must be positive"):
        io.load_strata(write(tmp_path / "s.csv", "stratum,CE,EE,MR\nS1,84,16,0\n"), cells)
    with pytest.raises(io.InputError) as err:
        io.load_strata(write(tmp_path / "s2.csv", "stratum,CE,EE,MR\nS2,84,16,0.5\n"), cells)
    assert "stratum S1 has cells but no survey row" in err.value.problems
    assert "stratum S2 has a survey row but no cells" in err.value.problems
    with pytest.raises(io.InputError, match="state NY has no standard error"):
        io.load_se(write(tmp_path / "se.csv", "state,se_share_diff\nNJ,0.1\n"), {"NJ", "NY"})


def test_load_scenarios_and_config(tmp_path):
    text = "CE1,CE2,EE1,EE2,MN1,MN2,NN1,NN2,II1,II2,id\n1000,1000,10,10,500,500,500,500,20,0,a\n"
    ((sid, s),) = io.load_scenarios(write(tmp_path / "s.csv", text))
    assert sid == "a" and s.ii1 == 20 and s.lam == 1.0
    bad = "CE1,CE2,EE1,EE2,MN1,MN2,NN1,NN2,II1,II2\n1000,1000,10,10,0,500,500,500,20,0\n"
    with pytest.raises(io.InputError, match="line 2"):
        io.load_scenarios(write(tmp_path / "b.csv", bad))
    cfg = io.load_config(write(tmp_path / "c.json", json.dumps({"n_strata": 1, "n_regions": 2})))
    assert cfg.shape == (1, 2)
    with pytest.raises(io.InputError):
        io.load_config(write(tmp_path / "d.json", json.dumps({"n_strata": 1, "n_regions": 2, "bogus": 1})))


# writers

def test_allocation_csv_round_trip(tmp_path, files, capsys):
    out = tmp_path / "alloc.csv"
    assert run(capsys, "allocate", "--cells", files["cells"], "--strata", files["strata"], "-o", out)[0] == 0
    loaded = io.load_allocations(out)
    cells = io.load_cells(files["cells"])
    estimates = estimate_all(cells, io.load_strata(files["strata"]))
    for f in FormulaKind:
        for (s, r), v in allocate_all(estimates, cells, f).entries.items():
            assert loaded[(f.value, s, r)] == v
    manifest = json.loads((tmp_path / "alloc.csv.manifest.json").read_text())
    assert manifest["inputs"]["cells"]["sha256"] == io.file_digest(files["cells"])
    assert manifest["formulas"] == ["cb", "alt1", "alt2", "alt3"]


def test_reports_are_byte_identical(tmp_path, files, capsys):
    for name in ("a.json", "b.json"):
        run(capsys, "compare", "--cells", files["cells"], "--strata", files["strata"], "--geo", files["geo"],
            "--se", files["se"], "--format", "json", "-o", tmp_path / name)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_json_nan_becomes_null():
    report = io.Report("x", ["v"], [{"v": float("nan")}])
    assert json.loads(io.render(report, "json"))["rows"] == [{"v": None}]


def test_output_dir_env(tmp_path, files, capsys, monkeypatch):
    monkeypatch.setenv(io.OUTPUT_DIR_ENV, str(tmp_path / "out"))
    code, out, _ = run(capsys, "estimate", "--cells", files["cells"], "--strata", files["strata"])
    assert code == 0 and out == ""
    assert rows((tmp_path / "out" / "estimate.csv").read_text())[0]["dse"].startswith("210")


# commands

def test_estimate_command(files, capsys):
    code, out, _ = run(capsys, "estimate", "--cells", files["cells"], "--strata", files["strata"])
    (row,) = rows(out)
    assert code == 0
    assert float(row["ccf"]) == pytest.approx(1.05) and float(row["dcf"]) == pytest.approx(1.3125)


def test_allocate_all_formulas(files, capsys):
    code, out, _ = run(capsys, "allocate", "--cells", files["cells"], "--strata", files["strata"],
                       "--formula", "all")
    assert code == 0
    got = {(r["formula"], r["region"]): float(r["S"]) for r in rows(out)}
    want = {("cb", "A"): 105, ("cb", "B"): 105, ("alt1", "A"): 118.125, ("alt1", "B"): 91.875,
            ("alt2", "A"): 102.5, ("alt2", "B"): 107.5, ("alt3", "A"): 105.625, ("alt3", "B"): 104.375}
    assert got == pytest.approx(want, rel=1e-12)


def test_compare_command(tmp_path, files, capsys):
    plot = tmp_path / "plot.csv"
    code, out, _ = run(capsys, "compare", "--cells", files["cells"], "--strata", files["strata"],
                       "--geo", files["geo"], "--se", files["se"], "--formula", "alt1", "--plot-data", plot)
    assert code == 0
    nj = next(r for r in rows(out) if r["state"] == "NJ")
    assert float(nj["share_diff"]) == pytest.approx(0.0625)
    assert float(nj["ci_lo"]) == pytest.approx(0.0429)
    assert list(rows(plot.read_text())[0]) == ["state", "diff_alt1"]


@pytest.mark.parametrize("state", ["nj", "ny", "ca"])
def test_sad_command_reproduces_published(state, capsys):
    code, out, _ = run(capsys, "sad", "--groups", io.data_path(f"county_groups_{state}.csv"))
    assert code == 0
    table = rows(out)
    assert len(table) == 3 * {"nj": 13, "ny": 21, "ca": 25}[state]
    for r in table:
        assert abs(float(r["sad"]) - float(r["published_sad"])) <= 0.01


def test_sad_summary_and_usage(capsys):
    code, out, _ = run(capsys, "sad", "--summary", "--groups", io.data_path("county_groups_nj.csv"))
    assert code == 0 and [r["formula"] for r in rows(out)] == ["cb", "alt1", "alt2"]
    assert run(capsys, "sad")[0] == 2


def test_sad_from_cells(tmp_path, files, capsys):
    code, out, _ = run(capsys, "sad", "--cells", files["cells"], "--strata", files["strata"],
                       "--geo", files["geo"], "--formula", "cb")
    assert code == 0
    g1 = next(r for r in rows(out) if r["group"] == "g1")
    # S 105 over DD 90, NJ offset 10 / 90
    assert float(g1["sad"]) == pytest.approx((15 / 90 - 10 / 90) * 100, abs=5e-4)


def test_mir_command(files, capsys):
    code, out, _ = run(capsys, "mir", "--cells", files["cells"], "--geo", files["geo"])
    assert code == 0
    assert {r["state"]: r["mir"] for r in rows(out)} == {"NJ": "10.000", "NY": "30.000"}


def test_homogeneity_command(tmp_path, files, capsys):
    code, out, _ = run(capsys, "homogeneity", "--cells", files["cells"])
    assert code == 0
    assert float(rows(out)[0]["statistic"]) == pytest.approx(12.5)
    big = "stratum,region,C,DD,II\n" + "".join(
        f"S1,R{k},100000,{99000 if k % 2 else 90000},{1000 if k % 2 else 10000}\n" for k in range(20))
    code, out, _ = run(capsys, "homogeneity", "--cells", write(tmp_path / "h.csv", big))
    assert rows(out)[-1]["p_value"] == "< 1e-300"


def test_variance_command(tmp_path, capsys):
    text = ("id,CE1,CE2,EE1,EE2,MN1,MN2,NN1,NN2,II1,II2\n"
            "ee,1000,1000,10,10,500,500,500,500,20,0\n"
            "ii,1000,1000,20,0,500,500,500,500,10,10\n")
    freq = tmp_path / "freq.csv"
    code, out, _ = run(capsys, "variance", "--scenarios", write(tmp_path / "s.csv", text),
                       "--frequency-output", freq)
    assert code == 0
    table = {r["id"]: r for r in rows(out)}
    assert float(table["ee"]["delta_c"]) == pytest.approx(192.2337562475974, rel=1e-9)
    assert table["ii"]["actual"] == "CCF" and table["ee"]["actual"] == "DCF"
    assert rows(freq.read_text())[-1] == {"size": "total", "ccf": "1", "dcf": "1", "total": "2"}


def test_simulate_command(tmp_path, capsys):
    cfg = write(tmp_path / "c.json", json.dumps({"n_strata": 1, "n_regions": 2, "true_pop": 50,
                                                 "capture_prob": 0.9, "n_reps": 300, "seed": 1}))
    outs = []
    for workers in ("1", "2"):
        path = tmp_path / f"sim{workers}.json"
        code, _, _ = run(capsys, "simulate", "--config", cfg, "--workers", workers, "--format", "json",
                         "-o", path)
        assert code == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    doc = json.loads(outs[0])
    assert doc["manifest"]["seed"] == 1
    assert doc["monte_carlo"]["n_reps"] == 300
    code, out, _ = run(capsys, "simulate", "--config", cfg, "--seed", "7", "--reps", "10")
    assert code == 0 and len(rows(out)) == 8


def test_validate_command(tmp_path, files, capsys):
    code, out, _ = run(capsys, "validate", "--cells", files["cells"], "--strata", files["strata"],
                       "--geo", files["geo"], "--se", files["se"])
    assert code == 0 and out.strip() == "OK"
    bad = write(tmp_path / "bad.csv", CELLS.replace("S1,B,100,70,30", "S1,B,100,70,31"))
    code, out, _ = run(capsys, "validate", "--cells", bad)
    assert code == 1 and "C ≠ DD + II at line 3" in out


def test_validate_published_fixtures(tmp_path, capsys):
    ny = io.data_path("county_groups_ny.csv")
    code, out, _ = run(capsys, "validate", "--groups", ny)
    assert code == 0
    assert out.count("warning:") == 2 and "Nassau" in out and "Genesee" in out
    assert run(capsys, "validate", "--groups", ny, "--strict")[0] == 1
    corrupted = ny.read_text().replace("NY,Bronx,1285415,1169523", "NY,Bronx,1085415,1169523")
    code, out, _ = run(capsys, "validate", "--groups", write(tmp_path / "ny.csv", corrupted))
    assert code == 1 and "DD exceeds census" in out


def test_usage_errors(files, capsys):
    assert run(capsys, "estimate", "--bogus")[0] == 2
    assert run(capsys, "allocate", "--cells", files["cells"], "--strata", files["strata"],
               "--formula", "alt9")[0] == 2
    assert run(capsys)[0] == 2
    assert run(capsys, "validate")[0] == 2
    assert run(capsys, "--version")[0] == 0


def test_invalid_input_exit_code(tmp_path, files, capsys):
    code, _, err = run(capsys, "estimate", "--cells", files["cells"],
                       "--strata", write(tmp_path / "s.csv", "stratum,CE,EE,MR\nS1,1,0,0\n"))
    assert code == 1 and "match rate must be positive" in err
    code, _, err = run(capsys, "estimate", "--cells", tmp_path / "missing.csv", "--strata", files["strata"])
    assert code == 1 and "missing.csv" in err
