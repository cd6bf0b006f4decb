"""Classify-review iteration loop over a session's annotation files.

Each iteration trains on the human labels in Rev_manual (review answers are
written there, by hand or through the web UI), refits the ensemble, and
writes a new annotation file in which confidently-classified records carry a
predicted label and records needing human eyes are flagged "*".  A review
round that surfaces no new positive is a replication; stop_after consecutive
replications end the session.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .dtm import build_dtm
from .ensemble import (EnsembleConfig, assign_labels, compute_uncertainty_zone,
                       fit_ensemble, pooled_draws, summarise_ppd, term_importance)
from .records import REVIEW_MARKER, compute_changes, manual_labels, records_from_table
from .store import (Workspace, annotation_files, latest_annotation, read_annotation,
                    read_results, save_samples, write_annotation, write_result)

__all__ = [
    "ScreeningError", "SessionCompleteError", "PosTargetReachedError",
    "LabelingLimitReachedError", "UnreviewedRecordsError", "IterationResult",
    "apply_previous_labels", "run_cr_iteration", "auto_review", "label_initial",
    "auto_screen",
]


class ScreeningError(Exception):
    status = "error"


class SessionCompleteError(ScreeningError):
    status = "session complete"


class PosTargetReachedError(ScreeningError):
    status = "positive target reached"


class LabelingLimitReachedError(ScreeningError):
    status = "labeling limit reached"


class UnreviewedRecordsError(ScreeningError):
    status = "unreviewed records"


@dataclass
class IterationResult:
    annotation_path: Path
    result_path: Path
    samples_path: Path
    n_records: int
    n_features: int
    n_pos: int
    n_neg: int
    n_to_review: int
    n_new_positives: int
    replications: int
    zone_lower: float
    zone_upper: float
    changes: dict


def _flagged(table: pd.DataFrame) -> pd.Series:
    return table["Rev_prediction_new"].fillna("").astype(str) == REVIEW_MARKER


def apply_previous_labels(table: pd.DataFrame) -> pd.DataFrame:
    """Auto-answer flagged rows from Rev_previous where no human label exists."""
    table = table.copy()
    manual = manual_labels(table)
    previous = table["Rev_previous"].fillna("").astype(str)
    auto = _flagged(table) & (manual == "") & previous.isin(["y", "n"])
    table.loc[auto, "Rev_manual"] = previous[auto]
    return table


def _manual_positive_count(table: pd.DataFrame) -> int:
    return int((manual_labels(table) == "y").sum())


def _count_new_positives(ws: Workspace, session: str,
                         current: pd.DataFrame) -> int:
    """Positives the latest review round added, measured as the growth of the
    human positive count since the file before it."""
    files = annotation_files(ws, session)
    if len(files) < 2:
        return _manual_positive_count(current)
    previous = read_annotation(files[-2])
    return max(0, _manual_positive_count(current) - _manual_positive_count(previous))


def _last_replications(ws: Workspace, session: str) -> int:
    results = read_results(ws, session)
    if not results:
        return 0
    return int(results[-1][1].get("replications", 0))


def run_cr_iteration(ws: Workspace, session: str, config: EnsembleConfig,
                     stop_on_unreviewed: bool = True,
                     timestamp: str | None = None) -> IterationResult:
    """One classification round; raises a ScreeningError subtype on any of
    the terminal conditions instead of fitting."""
    path = latest_annotation(ws, session)
    if path is None:
        raise ScreeningError(f"session {session!r} has no annotation file")
    table = apply_previous_labels(read_annotation(path))

    n_new_positives = _count_new_positives(ws, session, table)
    replications = 0 if n_new_positives > 0 else _last_replications(ws, session) + 1
    if len(annotation_files(ws, session)) >= 2 and replications >= config.limits.stop_after:
        raise SessionCompleteError(
            f"session complete: {replications} consecutive iterations "
            "without new positives")

    labels = manual_labels(table)
    n_pos = int((labels == "y").sum())
    n_labelled = int((labels != "").sum())
    limits = config.limits
    if limits.pos_target is not None and n_pos >= limits.pos_target:
        raise PosTargetReachedError(
            f"positive target reached: {n_pos} >= {limits.pos_target}")
    if limits.labeling_limit is not None:
        cap = limits.labeling_limit
        if isinstance(cap, float) and cap <= 1.0:
            cap = cap * len(table)
        if n_labelled >= cap:
            raise LabelingLimitReachedError(
                f"labeling limit reached: {n_labelled} >= {cap}")

    unreviewed = int((_flagged(table) & (labels == "")).sum())
    if unreviewed and stop_on_unreviewed:
        raise UnreviewedRecordsError(
            f"{unreviewed} flagged records await review; rerun with "
            "stop_on_unreviewed=False to proceed anyway")

    records = records_from_table(table)
    dtm = build_dtm(records, list(labels))
    labelled_mask = (labels != "").to_numpy()
    y_train = (labels[labelled_mask] == "y").to_numpy().astype(int)
    fit = fit_ensemble(dtm.matrix[labelled_mask], y_train, config)
    draws = pooled_draws(fit, dtm.matrix)
    summary = summarise_ppd(draws, config.pred_quantiles)
    zone = compute_uncertainty_zone(summary, list(labels))
    predicted, needs_review = assign_labels(summary, zone, list(labels))

    out = table.copy()
    out["Rev_prediction"] = table["Rev_prediction_new"].fillna("").astype(str)
    new_labels = np.where(needs_review, REVIEW_MARKER, predicted.astype(str))
    out["Rev_prediction_new"] = new_labels
    out["Pred_Low"] = np.round(summary.lo, 6)
    out["Pred_Med"] = np.round(summary.med, 6)
    out["Pred_Up"] = np.round(summary.hi, 6)

    changes = compute_changes(out, table)
    annotation_path = write_annotation(ws, session, out, timestamp=timestamp)
    ts = annotation_path.name[len("Records_"):-len(".csv")]
    n_to_review = int((new_labels == REVIEW_MARKER).sum())
    summary_row = {
        "timestamp": ts,
        "parent_file": path.name,
        "n_records": len(out),
        "n_features": dtm.n_features,
        "n_pos": n_pos,
        "n_neg": n_labelled - n_pos,
        "n_to_review": n_to_review,
        "n_new_positives": n_new_positives,
        "replications": replications,
        "zone_lower": zone.lower,
        "zone_upper": zone.upper,
        **changes,
    }
    result_path = write_result(ws, session, summary_row, timestamp=ts)
    samples_path = save_samples(ws, session, dtm.record_ids, draws, timestamp=ts)
    importance = term_importance(fit, dtm.feature_names,
                                 dtm.matrix[labelled_mask], y_train)
    importance.to_csv(ws.session_dir(session) / f"Terms_{ts}.csv", index=False)

    return IterationResult(
        annotation_path=annotation_path, result_path=result_path,
        samples_path=samples_path, n_records=len(out),
        n_features=dtm.n_features, n_pos=n_pos, n_neg=n_labelled - n_pos,
        n_to_review=n_to_review, n_new_positives=n_new_positives,
        replications=replications, zone_lower=zone.lower, zone_upper=zone.upper,
        changes=changes)


def auto_review(table: pd.DataFrame, oracle: dict[str, str]) -> pd.DataFrame:
    """Answer every flagged row from an oracle label map (testing/tuning)."""
    table = table.copy()
    for idx in table.index[_flagged(table)]:
        label = oracle.get(str(table.at[idx, "ID"]))
        if label in ("y", "n"):
            table.at[idx, "Rev_manual"] = label
    return table


def label_initial(table: pd.DataFrame, oracle: dict[str, str],
                  n_init: int) -> pd.DataFrame:
    """Oracle-label the first n_init records in file order, extending past
    n_init if needed until both classes appear."""
    table = table.copy()
    n_labelled = 0
    has_pos = has_neg = False
    for idx in table.index:
        label = oracle.get(str(table.at[idx, "ID"]))
        if label not in ("y", "n"):
            continue
        table.at[idx, "Rev_manual"] = label
        n_labelled += 1
        has_pos |= label == "y"
        has_neg |= label == "n"
        if n_labelled >= n_init and has_pos and has_neg:
            break
    if not (has_pos and has_neg):
        raise ScreeningError("oracle labels lack one of the classes")
    return table


def auto_screen(ws: Workspace, session: str, config: EnsembleConfig,
                oracle: dict[str, str],
                max_iterations: int = 50) -> list[IterationResult]:
    """Drive CR iterations with oracle review until a terminal condition."""
    results = []
    for _ in range(max_iterations):
        try:
            result = run_cr_iteration(ws, session, config)
        except (SessionCompleteError, PosTargetReachedError,
                LabelingLimitReachedError):
            break
        results.append(result)
        table = auto_review(read_annotation(result.annotation_path), oracle)
        table.to_csv(result.annotation_path, index=False)
    return results
