"""Access to the data files shipped in ``qualitymine/data``."""

from __future__ import annotations

import csv
from importlib import resources

from .data import Dataset, load_reference, load_table
from .doe import ExperimentDesign, Factor, design_from_csv

DESIGN_FILE = "ccf_design_17.csv"
RESPONSE_NAME = "Textile quality score"
FACTOR_NAMES = ("Pigment fastness", "Machine productivity", "Pile weight")


def read_text(name: str) -> str:
    return resources.files("qualitymine").joinpath("data", name).read_text(encoding="utf-8")


def _records(name):
    lines = [ln for ln in read_text(name).splitlines() if ln.strip() and not ln.startswith("#")]
    return list(csv.DictReader(lines))


def factor_levels() -> list[Factor]:
    """The three design factors with their low/medium/high natural levels."""
    return [Factor(r["factor"], float(r["low"]), float(r["medium"]), float(r["high"]))
            for r in _records("factor_levels.csv")]


def design_table(text: str | None = None) -> tuple[ExperimentDesign, "object"]:
    """The 17-run design and its validated responses, sorted by standard order."""
    return design_from_csv(text or read_text(DESIGN_FILE), factor_levels(), RESPONSE_NAME)


def design_dataset() -> Dataset:
    schema = {"standard_order": "ignored", "block": "ignored", RESPONSE_NAME: "response"}
    schema.update({n: "input" for n in FACTOR_NAMES})
    return load_table(read_text(DESIGN_FILE), schema, name="ccf_design_17", comment="#")


def mlr_estimates() -> list[dict]:
    return [{k: float(v) for k, v in r.items()} for r in _records("mlr_estimates.csv")]


def published_rankings() -> dict[str, list[str]]:
    rows = _records("rankings.csv")
    return {col: [r[col] for r in rows] for col in ("random_forest", "boosted_tree", "voted")}


def effects_reference() -> list[dict]:
    return [{"term": r["term"], **{k: float(r[k]) for k in ("effect", "standard_error", "t", "p")}}
            for r in _records("effects_reference.csv")]


def anova_reference() -> list[dict]:
    out = []
    for r in _records("anova_reference.csv"):
        row = {"term": r["term"], "df": int(r["df"])}
        for k in ("ss", "ms", "F", "p"):
            row[k] = float(r[k]) if r[k] else None
        out.append(row)
    return out


def score_components() -> Dataset:
    text = read_text("score_components_example.csv")
    header = [ln for ln in text.splitlines() if not ln.startswith("#")][0].split(",")
    schema = {h: "input" for h in header}
    schema["standard_order"] = "ignored"
    return load_table(text, schema, name="score_components", comment="#")


def reference_values() -> dict[str, float]:
    return load_reference(read_text("reference_values.csv"))
