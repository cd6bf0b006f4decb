import numpy as np
import pandas as pd
import pytest

from bayscreen.bart import BartConfig
from bayscreen.ensemble import EnsembleConfig, Limits
from bayscreen.records import REVIEW_MARKER, manual_labels
from bayscreen.screening import (LabelingLimitReachedError,
                                 PosTargetReachedError, ScreeningError,
                                 SessionCompleteError, UnreviewedRecordsError,
                                 apply_previous_labels, auto_review,
                                 auto_screen, label_initial, run_cr_iteration)
from bayscreen.store import (annotation_files, latest_annotation,
                             read_annotation, read_results, write_annotation)

from conftest import corpus_table


def small_config(stop_after=2, **limits):
    return EnsembleConfig(
        n_models=2, oversample_mult=2,
        limits=Limits(stop_after=stop_after, **limits),
        bart=BartConfig(n_trees=10, n_iterations=120, n_burnin=20, seed=0))


def seeded_session(workspace, session="S", n=60, n_pos=10, n_init=20, seed=0):
    table, oracle = corpus_table(n, n_pos, seed=seed)
    table = label_initial(table, oracle, n_init)
    write_annotation(workspace, session, table)
    return oracle


# --- helpers -------------------------------------------------------------------

def test_label_initial_extends_until_both_classes():
    table, oracle = corpus_table(40, 5, seed=1, query="zeta")
    only_neg = {k: "n" for k in oracle}
    pos_id = [k for k, v in oracle.items() if v == "y"][0]
    only_neg[pos_id] = "y"
    labelled = label_initial(table, only_neg, 3)
    labels = manual_labels(labelled)
    assert "y" in set(labels) and "n" in set(labels)
    assert (labels != "").sum() >= 3


def test_label_initial_requires_both_classes():
    table, oracle = corpus_table(20, 3)
    with pytest.raises(ScreeningError):
        label_initial(table, {k: "n" for k in oracle}, 5)


def test_apply_previous_labels_only_fills_flagged_unlabelled():
    table, _ = corpus_table(4, 1)
    table.loc[0, "Rev_prediction_new"] = REVIEW_MARKER
    table.loc[0, "Rev_previous"] = "y"
    table.loc[1, "Rev_previous"] = "y"              # not flagged
    table.loc[2, "Rev_prediction_new"] = REVIEW_MARKER
    table.loc[2, "Rev_manual"] = "n"                # already answered
    table.loc[2, "Rev_previous"] = "y"
    out = apply_previous_labels(table)
    assert out.loc[0, "Rev_manual"] == "y"
    assert out.loc[1, "Rev_manual"] in ("", None) or pd.isna(out.loc[1, "Rev_manual"])
    assert out.loc[2, "Rev_manual"] == "n"


def test_auto_review_answers_flagged_rows():
    table, oracle = corpus_table(6, 2)
    table.loc[0, "Rev_prediction_new"] = REVIEW_MARKER
    out = auto_review(table, oracle)
    assert out.loc[0, "Rev_manual"] == oracle[str(out.loc[0, "ID"])]


# --- iteration -----------------------------------------------------------------

def test_iteration_writes_artifacts(workspace):
    seeded_session(workspace)
    result = run_cr_iteration(workspace, "S", small_config())
    assert result.annotation_path.is_file()
    assert result.result_path.is_file()
    assert result.samples_path.is_file()
    terms = list(workspace.session_dir("S").glob("Terms_*.csv"))
    assert len(terms) == 1
    table = read_annotation(result.annotation_path)
    assert table["Pred_Med"].notna().all()
    flagged = (table["Rev_prediction_new"] == REVIEW_MARKER).sum()
    assert flagged == result.n_to_review


def test_iteration_requires_annotation(workspace):
    with pytest.raises(ScreeningError):
        run_cr_iteration(workspace, "missing", small_config())


def test_unreviewed_rows_block_next_iteration(workspace):
    seeded_session(workspace)
    result = run_cr_iteration(workspace, "S", small_config())
    if result.n_to_review == 0:
        pytest.skip("no review queue in this fixture")
    with pytest.raises(UnreviewedRecordsError):
        run_cr_iteration(workspace, "S", small_config())
    # explicit override proceeds
    run_cr_iteration(workspace, "S", small_config(), stop_on_unreviewed=False)


def test_pos_target_stops(workspace):
    seeded_session(workspace, n_init=30)
    with pytest.raises(PosTargetReachedError) as err:
        run_cr_iteration(workspace, "S", small_config(pos_target=1))
    assert err.value.status == "positive target reached"


def test_labeling_limit_absolute_and_fraction(workspace):
    seeded_session(workspace, n_init=30)
    with pytest.raises(LabelingLimitReachedError):
        run_cr_iteration(workspace, "S", small_config(labeling_limit=10))
    with pytest.raises(LabelingLimitReachedError) as err:
        run_cr_iteration(workspace, "S", small_config(labeling_limit=0.25))
    assert err.value.status == "labeling limit reached"


def test_replication_counter_and_session_complete(workspace):
    oracle = seeded_session(workspace, n=60, n_pos=8, n_init=30, seed=3)
    config = small_config(stop_after=2)
    results = auto_screen(workspace, "S", config, oracle)
    assert results, "expected at least one completed iteration"
    reps = [r.replications for r in results]
    # counter resets on new positives and increments otherwise
    for prev, cur in zip(reps, reps[1:]):
        assert cur in (0, prev + 1)
    assert reps[-1] == config.limits.stop_after - 1
    with pytest.raises(SessionCompleteError) as err:
        run_cr_iteration(workspace, "S", config, stop_on_unreviewed=False)
    assert err.value.status == "session complete"


def test_auto_screen_finds_planted_positives(workspace):
    oracle = seeded_session(workspace, n=80, n_pos=12, n_init=25, seed=5)
    auto_screen(workspace, "S", small_config(stop_after=2), oracle)
    table = read_annotation(latest_annotation(workspace, "S"))
    labels = manual_labels(table)
    found = int((labels == "y").sum())
    total = sum(1 for v in oracle.values() if v == "y")
    assert found == total


def test_results_track_change_counts(workspace):
    seeded_session(workspace)
    run_cr_iteration(workspace, "S", small_config())
    _, row = read_results(workspace, "S")[-1]
    for key in ("unlab_to_y", "unlab_to_n", "unlab_to_star", "n_to_y",
                "y_to_n", "total_changed", "n_features"):
        assert key in row
    assert int(row["unlab_to_star"]) >= 0
