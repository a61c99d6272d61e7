"""Delimited-text loaders and report writers.

Every input file has a mandatory header row. Lines starting with ``#``
are comments (shipped fixtures use them to describe their contents).
Percentages are plain numbers: ``4.913`` means 4.913%.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

from . import __version__
from .model import CellCounts, GeoHierarchy, SimConfig, StratumSurveyInputs, TwoStateScenario

OUTPUT_DIR_ENV = "SYNTHDSE_OUTPUT_DIR"


class InputError(ValueError):
    """Malformed or inconsistent input; ``problems`` lists every finding."""

    def __init__(self, problems: Sequence[str] | str):
        self.problems = [problems] if isinstance(problems, str) else list(problems)
        super().__init__("; ".join(self.problems))


def data_path(name: str) -> Path:
    """Path of a fixture shipped with the package."""
    return Path(str(resources.files("synthdse") / "data" / name))


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _rows(path, required: Sequence[str], optional: Sequence[str] = ()) -> Iterator[tuple[int, dict]]:
    """Yield ``(line_number, row)`` for each data line, checking the header."""
    with open(path, newline="", encoding="utf-8") as fh:
        numbered = [(n, line) for n, line in enumerate(fh, start=1)
                    if line.strip() and not line.lstrip().startswith("#")]
    if not numbered:
        raise InputError(f"{path}: empty file, expected header {','.join(required)}")
    parsed = list(csv.reader(line for _, line in numbered))
    header = [h.strip() for h in parsed[0]]
    allowed = list(required) + list(optional)
    if (any(r not in header for r in required) or any(h not in allowed for h in header)
            or len(set(header)) != len(header)):
        raise InputError(f"{path}: line {numbered[0][0]}: header {','.join(header)!r}, "
                         f"expected {','.join(required)}" + (f"[,{','.join(optional)}]" if optional else ""))
    for (lineno, _), values in zip(numbered[1:], parsed[1:]):
        if len(values) != len(header):
            raise InputError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(values)}")
        yield lineno, {h: v.strip() for h, v in zip(header, values)}


def _int(value: str, what: str, lineno: int, path) -> int:
    try:
        return int(value)
    except ValueError:
        raise InputError(f"{path}: line {lineno}: {what} must be an integer, got {value!r}") from None


def _float(value: str, what: str, lineno: int, path) -> float:
    try:
        out = float(value)
    except ValueError:
        raise InputError(f"{path}: line {lineno}: {what} must be a number, got {value!r}") from None
    if not math.isfinite(out):
        raise InputError(f"{path}: line {lineno}: {what} must be finite")
    return out


def load_cells(path) -> list[CellCounts]:
    """Read ``stratum,region,C,DD,II``; abort listing every violation."""
    cells, problems, seen = [], [], {}
    for lineno, row in _rows(path, ("stratum", "region", "C", "DD", "II")):
        c, dd, ii = (_int(row[k], k, lineno, path) for k in ("C", "DD", "II"))
        cell = CellCounts(row["stratum"], row["region"], c, dd, ii)
        if min(c, dd, ii) < 0:
            problems.append(f"negative count at line {lineno}")
        if c != dd + ii:
            problems.append(f"C ≠ DD + II at line {lineno}")
        if cell.key in seen:
            problems.append(f"duplicate ({cell.stratum}, {cell.region}) at line {lineno} "
                            f"(first at line {seen[cell.key]})")
        seen.setdefault(cell.key, lineno)
        cells.append(cell)
    if problems:
        raise InputError(problems)
    return cells


def load_strata(path, cells: Iterable[CellCounts] | None = None) -> list[StratumSurveyInputs]:
    """Read ``stratum,CE,EE,MR`` and check it covers the loaded cells."""
    out, problems = [], []
    for lineno, row in _rows(path, ("stratum", "CE", "EE", "MR")):
        ce = _int(row["CE"], "CE", lineno, path)
        ee = _int(row["EE"], "EE", lineno, path)
        mr = _float(row["MR"], "MR", lineno, path)
        if ce < 0 or ee < 0:
            problems.append(f"negative CE/EE at line {lineno}")
        if ce + ee == 0:
            problems.append(f"CE + EE = 0 at line {lineno}")
        if mr <= 0:
            problems.append(f"match rate must be positive (line {lineno})")
        elif mr > 1:
            problems.append(f"match rate above 1 at line {lineno}")
        out.append(StratumSurveyInputs(row["stratum"], ce, ee, mr))
    ids = [s.stratum for s in out]
    dupes = sorted({s for s in ids if ids.count(s) > 1})
    problems += [f"duplicate stratum {s}" for s in dupes]
    if cells is not None:
        have = {c.stratum for c in cells}
        problems += [f"stratum {s} has cells but no survey row" for s in sorted(have - set(ids))]
        problems += [f"stratum {s} has a survey row but no cells" for s in sorted(set(ids) - have)]
    if problems:
        raise InputError(problems)
    return out


def load_geo(path, cells: Iterable[CellCounts] | None = None) -> GeoHierarchy:
    """Read ``region,state[,group]``."""
    state, group, problems = {}, {}, []
    has_group = False
    for lineno, row in _rows(path, ("region", "state"), ("group",)):
        if row["region"] in state:
            problems.append(f"duplicate region {row['region']} at line {lineno}")
        state[row["region"]] = row["state"]
        if "group" in row:
            has_group = True
            if row["group"]:
                group[row["region"]] = row["group"]
    if cells is not None:
        regions = {c.region for c in cells}
        problems += [f"region {r} missing from geography" for r in sorted(regions - set(state))]
        if has_group:
            problems += [f"region {r} has no county group" for r in sorted(regions - set(group))]
    if problems:
        raise InputError(problems)
    return GeoHierarchy(state, group if has_group else None)


def load_se(path, states: Iterable[str] | None = None) -> dict[str, float]:
    """Read ``state,se_share_diff`` (standard errors of share differences)."""
    out, problems = {}, []
    for lineno, row in _rows(path, ("state", "se_share_diff")):
        se = _float(row["se_share_diff"], "se_share_diff", lineno, path)
        if se < 0:
            problems.append(f"negative standard error at line {lineno}")
        out[row["state"]] = se
    if states is not None:
        problems += [f"state {s} has no standard error" for s in sorted(set(states) - set(out))]
    if problems:
        raise InputError(problems)
    return out


SCENARIO_COLUMNS = ("CE1", "CE2", "EE1", "EE2", "MN1", "MN2", "NN1", "NN2", "II1", "II2")


def load_scenarios(path) -> list[tuple[str, TwoStateScenario]]:
    """Read two-state scenarios; optional ``lambda`` and ``id`` columns."""
    out = []
    for lineno, row in _rows(path, SCENARIO_COLUMNS, ("lambda", "id")):
        values = [_float(row[c], c, lineno, path) for c in SCENARIO_COLUMNS]
        lam = _float(row["lambda"], "lambda", lineno, path) if row.get("lambda") else 1.0
        try:
            scenario = TwoStateScenario(*values, lam=lam)
        except ValueError as exc:
            raise InputError(f"{path}: line {lineno}: {exc}") from None
        out.append((row.get("id") or str(len(out) + 1), scenario))
    return out


def load_config(path) -> SimConfig:
    """Read a JSON simulation config; keys are the ``SimConfig`` fields."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    try:
        return SimConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from None


@dataclass(frozen=True)
class CountyGroupRow:
    """One county group of a published state table.

    ``reldif`` maps formula name to the relative difference over the
    census; ``published_sad`` to the state adjusted difference.
    """

    state: str
    group: str
    census: int
    dd: int
    reldif: dict
    ii_census: float | None = None
    ii_dd: float | None = None
    published_sad: dict = field(default_factory=dict)
    line: int = 0


def load_county_groups(path) -> list[CountyGroupRow]:
    out = []
    optional = ("reldif_alt3", "ii_census", "sad_cb", "sad_alt1", "sad_alt2", "sad_alt3", "ii_dd")
    for lineno, row in _rows(path, ("state", "group", "census", "dd", "reldif_cb", "reldif_alt1",
                                    "reldif_alt2"), optional):
        reldif = {k[7:]: _float(v, k, lineno, path) for k, v in row.items() if k.startswith("reldif_") and v}
        sads = {k[4:]: _float(v, k, lineno, path) for k, v in row.items() if k.startswith("sad_") and v}
        opt = {k: _float(row[k], k, lineno, path) if row.get(k) else None for k in ("ii_census", "ii_dd")}
        out.append(CountyGroupRow(row["state"], row["group"], _int(row["census"], "census", lineno, path),
                                  _int(row["dd"], "dd", lineno, path), reldif, opt["ii_census"],
                                  opt["ii_dd"], sads, lineno))
    return out


def load_state_rates(path) -> dict[str, float]:
    """State imputation rates (percent of census), keyed by state."""
    out = {}
    for lineno, row in _rows(path, ("state", "ii_tot"),
                             ("ii_non_la", "ii_la", "census_share", "n_strata", "mean_ii_tot")):
        out[row["state"]] = _float(row["ii_tot"], "ii_tot", lineno, path)
    return out


def load_allocations(path) -> dict[tuple[str, str, str], float]:
    out = {}
    for lineno, row in _rows(path, ("formula", "stratum", "region", "S")):
        out[(row["formula"], row["stratum"], row["region"])] = _float(row["S"], "S", lineno, path)
    return out


# Writers -------------------------------------------------------------------

@dataclass
class RunManifest:
    command: str
    inputs: dict[str, str] = field(default_factory=dict)
    formulas: list[str] = field(default_factory=list)
    level: str | None = None
    z: float | None = None
    seed: int | None = None
    version: str = __version__

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "version": self.version,
            "inputs": {k: {"path": str(p), "sha256": file_digest(p)} for k, p in sorted(self.inputs.items())},
            "formulas": self.formulas,
            "level": self.level,
            "z": self.z,
            "seed": self.seed,
        }


@dataclass
class Report:
    """A flat table plus optional nested extras (kept in JSON only)."""

    name: str
    columns: list[str]
    rows: list[dict]
    percent_columns: frozenset = frozenset()
    manifest: RunManifest | None = None
    extra: dict = field(default_factory=dict)


def _cell_text(value, percent: bool) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.3f}" if percent else repr(value)
    return str(value)


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):
        return _json_safe(obj.item())
    return obj


def render(report: Report, fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(report.columns)
        for row in report.rows:
            writer.writerow([_cell_text(row.get(c), c in report.percent_columns) for c in report.columns])
        return buf.getvalue()
    if fmt == "json":
        doc = {
            "report": report.name,
            "manifest": report.manifest.to_dict() if report.manifest else None,
            "columns": report.columns,
            "rows": [{c: row.get(c) for c in report.columns} for row in report.rows],
            **report.extra,
        }
        return json.dumps(_json_safe(doc), indent=2, allow_nan=False) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def write_report(report: Report, fmt: str, path=None, stream: IO[str] | None = None) -> None:
    """Write ``report`` as csv or json.

    With a path, csv output gets its manifest in ``<path>.manifest.json``;
    json embeds it. Without a path the text goes to ``stream``.
    """
    text = render(report, fmt)
    if path is None:
        (stream or _stdout()).write(text)
        return
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    if fmt == "csv" and report.manifest is not None:
        Path(str(path) + ".manifest.json").write_text(
            json.dumps(_json_safe(report.manifest.to_dict()), indent=2) + "\n", encoding="utf-8")


def _stdout():
    import sys
    return sys.stdout


def write_cells(cells: Iterable[CellCounts], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stratum", "region", "C", "DD", "II"])
        for c in cells:
            w.writerow([c.stratum, c.region, c.census, c.dd, c.ii])


def default_output(name: str, fmt: str) -> Path | None:
    base = os.environ.get(OUTPUT_DIR_ENV)
    if not base:
        return None
    Path(base).mkdir(parents=True, exist_ok=True)
    return Path(base) / f"{name}.{fmt}"
