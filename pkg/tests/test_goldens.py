"""Byte-stability of every CSV the package writes, timestamps held fixed.

Goldens live in tests/goldens/; regenerate with
`python3 tests/test_goldens.py refresh` after an intentional format change.
"""

import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from bayscreen.performance import PerformanceSummary
from bayscreen.queries import parse_query
from bayscreen.records import CitationRecord, create_annotation_file
from bayscreen.rulegen import Condition, Rule, TermSpace, build_selection_set
from bayscreen.store import (Workspace, update_journal, write_annotation,
                             write_result)

GOLDEN_DIR = Path(__file__).parent / "goldens"
TS = "20240101T000000"


def fixed_records():
    records = []
    for i in range(6):
        records.append(CitationRecord(
            f"doi:10.5000/g{i}",
            title=f"Golden record {i} on patient transfer networks",
            abstract=f"Abstract {i} about hospital networks and spread.",
            doi=f"10.5000/g{i}",
            authors=[f"Author {i}"],
            keywords=["network", "hospital"],
            mesh=["Cross Infection"],
            year=2015 + i,
            sources={"Pubmed"} if i % 2 == 0 else {"Pubmed", "WOS"},
        ))
    return records


def golden_journal(tmp_path):
    path = tmp_path / "Journal.csv"
    update_journal(path, "golden", "Q1", "alpha AND beta", "2010-2020",
                   {"Pubmed": 6, "WOS": 3},
                   {"Pubmed": ["Records/golden/Q1/Pubmed1.nbib"],
                    "WOS": ["Records/golden/Q1/WOS1.txt"]},
                   timestamp=TS)
    return path


def golden_annotation(tmp_path):
    table = create_annotation_file(fixed_records(), parse_query("network"))
    ws = Workspace(tmp_path)
    return write_annotation(ws, "golden", table, timestamp=TS)


def golden_results(tmp_path):
    ws = Workspace(tmp_path)
    return write_result(ws, "golden", {
        "timestamp": TS, "n_records": 6, "n_pos": 2, "n_neg": 3,
        "n_to_review": 1, "n_new_positives": 2, "replications": 0,
        "unlab_to_y": 2, "unlab_to_n": 3, "unlab_to_star": 1,
        "n_to_y": 0, "y_to_n": 0, "total_changed": 6, "n_features": 12,
        "zone_lower": 0.25, "zone_upper": 0.75,
    }, timestamp=TS)


def golden_selection_sheet(tmp_path):
    terms = ["hospital", "network", "spread"]
    matrix = np.array([
        [1, 1, 0],
        [1, 1, 1],
        [0, 1, 1],
        [1, 0, 0],
        [0, 0, 1],
        [0, 1, 0],
    ], dtype=bool)
    space = TermSpace(terms, matrix, np.array([20.0, 15.0, 5.0]))
    rules = [
        Rule((Condition("hospital"), Condition("network"))),
        Rule((Condition("spread"),)),
        Rule((Condition("network"), Condition("spread", negated=True))),
    ]
    labels = ["y", "y", "n", "n", "n", "y"]
    sheet = build_selection_set(rules, space, labels)
    path = tmp_path / "Selected_rules.csv"
    sheet.to_csv(path, index=False)
    return path


def golden_performance(tmp_path):
    summary = PerformanceSummary(
        n_records=500, n_reviewed=120, reviewed_pct=0.24,
        observed_positives=38, converged=True,
        rhat=[1.001, 1.002], ess=[1500.0, 1400.0],
        predicted_positives_median=40.0,
        predicted_positives_interval=(38.0, 44.0),
        sensitivity_median=0.95, sensitivity_interval=(0.86, 1.0),
        efficiency_median=0.7, efficiency_interval=(0.6, 0.78),
        r2_median=0.93, r2_interval=(0.9, 0.96))
    path = tmp_path / "Performance.csv"
    summary.to_frame().to_csv(path, index=False)
    return path


BUILDERS = {
    "journal.csv": golden_journal,
    "annotation.csv": golden_annotation,
    "results.csv": golden_results,
    "selection_sheet.csv": golden_selection_sheet,
    "performance.csv": golden_performance,
}


@pytest.mark.parametrize("name", sorted(BUILDERS))
def test_format_is_byte_stable(name, tmp_path):
    produced = BUILDERS[name](tmp_path).read_bytes()
    golden = (GOLDEN_DIR / name).read_bytes()
    assert produced == golden, f"{name} format drifted from the golden copy"


def refresh():
    import tempfile

    GOLDEN_DIR.mkdir(exist_ok=True)
    for name, builder in BUILDERS.items():
        with tempfile.TemporaryDirectory() as tmp:
            path = builder(Path(tmp))
            (GOLDEN_DIR / name).write_bytes(path.read_bytes())
            print(f"wrote {GOLDEN_DIR / name}")


if __name__ == "__main__" and "refresh" in sys.argv:
    refresh()
