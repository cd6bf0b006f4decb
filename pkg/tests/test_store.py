import numpy as np
import pandas as pd
import pytest

from bayscreen.queries import parse_query
from bayscreen.records import create_annotation_file, CitationRecord
from bayscreen.store import (JOURNAL_COLUMNS, annotation_files,
                             consolidate_results, latest_annotation,
                             latest_samples, load_samples, read_annotation,
                             read_journal, read_results, save_samples,
                             update_journal, utc_timestamp, write_annotation,
                             write_result)


def small_table():
    records = [CitationRecord(record_id=f"r{i}", title=f"t {i}",
                              doi=f"10.1/{i}") for i in range(4)]
    return create_annotation_file(records, parse_query("t"))


def test_timestamp_format_sorts_chronologically():
    ts = utc_timestamp()
    assert ts.endswith("Z") and "T" in ts
    assert utc_timestamp() >= ts


def test_journal_append_and_idempotence(workspace):
    path = workspace.journal_path
    journal = update_journal(path, "S1", "Q1", "a OR b", "2010-2020",
                             {"Pubmed": 3, "WOS": 2}, timestamp="T0")
    assert len(journal) == 2
    assert list(journal.columns) == JOURNAL_COLUMNS
    again = update_journal(path, "S1", "Q1", "a OR b", "2010-2020",
                           {"Pubmed": 3, "WOS": 2}, timestamp="T0")
    assert len(again) == 2
    more = update_journal(path, "S1", "Q2", "c", "", {"Pubmed": 1},
                          timestamp="T1")
    assert len(more) == 3
    grouped = read_journal(path).groupby("session_name").size()
    assert grouped["S1"] == 3


def test_annotation_round_trip(workspace):
    table = small_table()
    table.loc[0, "Rev_manual"] = "y"
    path = write_annotation(workspace, "S", table, timestamp="20240101T000000.0Z")
    back = read_annotation(path)
    assert list(back["ID"]) == list(table["ID"])
    assert back["Rev_manual"].iloc[0] == "y"
    assert back["Rev_manual"].iloc[1] == ""
    assert back["Order"].dtype.kind == "f"


def test_latest_annotation_picks_newest(workspace):
    table = small_table()
    write_annotation(workspace, "S", table, timestamp="20240101T000000.0Z")
    newest = write_annotation(workspace, "S", table,
                              timestamp="20240102T000000.0Z")
    assert latest_annotation(workspace, "S") == newest
    assert len(annotation_files(workspace, "S")) == 2
    assert latest_annotation(workspace, "missing") is None


def test_results_round_trip(workspace):
    row = {"timestamp": "T1", "n_records": 10, "n_pos": 2, "replications": 0}
    write_result(workspace, "S", row, timestamp="T1")
    write_result(workspace, "S", {**row, "timestamp": "T2", "replications": 1},
                 timestamp="T2")
    results = read_results(workspace, "S")
    assert len(results) == 2
    assert results[-1][1]["replications"] == 1


def test_consolidate_recomputes_counts_from_reviewed_labels(workspace):
    table = small_table()
    path = write_annotation(workspace, "S", table, timestamp="T1")
    write_result(workspace, "S", {"timestamp": "T1", "n_pos": 0},
                 timestamp="T1")
    # review flips one record to positive after the result was written
    table.loc[0, "Rev_manual"] = "y"
    table.to_csv(path, index=False)
    updated = consolidate_results(workspace, "S")
    assert len(updated) == 1
    row = pd.read_csv(updated[0]).iloc[0]
    assert int(row["n_pos"]) == 1


def test_consolidate_without_session_raises(workspace):
    with pytest.raises(FileNotFoundError):
        consolidate_results(workspace, "nope")


def test_samples_round_trip(workspace):
    ids = [f"r{i}" for i in range(5)]
    draws = np.random.default_rng(0).random((5, 7)).astype(np.float32)
    path = save_samples(workspace, "S", ids, draws, timestamp="T1")
    back_ids, back = load_samples(path)
    assert back_ids == ids
    np.testing.assert_array_equal(back, draws)
    assert latest_samples(workspace, "S") == path


def test_samples_never_contain_credentials(workspace, monkeypatch):
    # file contents carry only record ids and draws
    monkeypatch.setenv("BAYSCREEN_WOS_KEY", "super-secret-token")
    ids = ["r0"]
    draws = np.ones((1, 3), dtype=np.float32)
    path = save_samples(workspace, "S", ids, draws, timestamp="T1")
    assert b"super-secret-token" not in path.read_bytes()


def test_journal_never_contains_credentials(workspace, monkeypatch):
    monkeypatch.setenv("BAYSCREEN_PUBMED_KEY", "another-secret")
    update_journal(workspace.journal_path, "S", "Q", "a", "", {"Pubmed": 1})
    assert "another-secret" not in workspace.journal_path.read_text()
