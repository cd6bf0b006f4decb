"""Engine operations shared verbatim by the CLI and the HTTP API."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from .dtm import build_dtm
from .ensemble import export_ppd_density
from .records import REVIEW_MARKER, manual_labels, records_from_table
from .rulegen import (SHEET_COLUMNS, build_selection_set, extend_with_negatives,
                      extract_rules, rules_to_query, sheet_to_rules,
                      simplify_ruleset, collapse_terms)
from .queries import render_query, DIALECTS
from .store import (Workspace, latest_annotation, latest_samples, load_samples,
                    read_annotation, read_results)

__all__ = [
    "session_status", "needs_review_table", "apply_label",
    "generate_selection_sheet", "selection_sheet_path", "finalize_rules",
    "compute_densities", "display_labels",
]


def selection_sheet_path(ws: Workspace, session: str) -> Path:
    return ws.session_dir(session) / "Selected_rules.csv"


def display_labels(table: pd.DataFrame) -> pd.Series:
    """Per-record label shown to the reviewer: manual, else latest prediction."""
    manual = manual_labels(table)
    predicted = table["Rev_prediction_new"].fillna("").astype(str)
    return manual.where(manual != "", predicted)


def session_status(ws: Workspace, session: str) -> dict:
    path = latest_annotation(ws, session)
    results = read_results(ws, session)
    status: dict = {
        "session": session,
        "n_iterations": len(results),
        "has_annotation": path is not None,
    }
    if path is not None:
        table = read_annotation(path)
        labels = manual_labels(table)
        flagged = table["Rev_prediction_new"].fillna("").astype(str) == REVIEW_MARKER
        status.update(
            n_records=len(table),
            n_pos=int((labels == "y").sum()),
            n_neg=int((labels == "n").sum()),
            needs_review=int((flagged & (labels == "")).sum()),
        )
    if results:
        last = results[-1][1]
        status["replications"] = int(last.get("replications", 0) or 0)
        status["last_timestamp"] = str(last.get("timestamp", ""))
    return status


def needs_review_table(ws: Workspace, session: str) -> pd.DataFrame:
    path = latest_annotation(ws, session)
    if path is None:
        raise FileNotFoundError(f"session {session!r} has no annotation file")
    table = read_annotation(path)
    labels = manual_labels(table)
    flagged = table["Rev_prediction_new"].fillna("").astype(str) == REVIEW_MARKER
    return table[flagged & (labels == "")]


def apply_label(ws: Workspace, session: str, record_id: str, label: str) -> dict:
    if label not in ("y", "n"):
        raise ValueError(f"invalid label {label!r}; expected 'y' or 'n'")
    path = latest_annotation(ws, session)
    if path is None:
        raise FileNotFoundError(f"session {session!r} has no annotation file")
    table = read_annotation(path)
    mask = table["ID"].astype(str) == str(record_id)
    if not mask.any():
        raise KeyError(f"unknown record: {record_id!r}")
    table.loc[mask, "Rev_manual"] = label
    table.to_csv(path, index=False)
    return {"record_id": record_id, "rev_manual": label}


def _load_importance(ws: Workspace, session: str,
                     feature_names: list[str]) -> np.ndarray:
    files = sorted(ws.session_dir(session).glob("Terms_*.csv"))
    importance = np.zeros(len(feature_names))
    if not files:
        return importance
    terms = pd.read_csv(files[-1])
    rates = dict(zip(terms["feature"].astype(str), terms["inclusion_rate"]))
    for i, name in enumerate(feature_names):
        importance[i] = float(rates.get(name, 0.0))
    return importance


def generate_selection_sheet(ws: Workspace, session: str,
                             importance_cutoff: float = 10.0,
                             n_samples: int = 800,
                             seed: int = 0) -> pd.DataFrame:
    """Mine rules from the last iteration's posterior draws and write the
    human selection sheet."""
    path = latest_annotation(ws, session)
    if path is None:
        raise FileNotFoundError(f"session {session!r} has no annotation file")
    samples = latest_samples(ws, session)
    if samples is None:
        raise FileNotFoundError(
            "no persisted posterior draws; run a screening iteration first")
    table = read_annotation(path)
    labels = manual_labels(table)
    dtm = build_dtm(records_from_table(table), list(labels))
    record_ids, draws = load_samples(samples)
    if record_ids != dtm.record_ids:
        id_to_row = {rid: i for i, rid in enumerate(record_ids)}
        missing = [rid for rid in dtm.record_ids if rid not in id_to_row]
        if missing:
            raise ValueError(f"samples do not cover records {missing[:3]}")
        draws = draws[[id_to_row[rid] for rid in dtm.record_ids]]
    importance = _load_importance(ws, session, dtm.feature_names)
    rules, space = extract_rules(dtm, draws, list(labels), importance,
                                 n_samples=n_samples,
                                 importance_cutoff=importance_cutoff, seed=seed)
    rules = [extend_with_negatives(r, space, list(labels)) for r in rules]
    sheet = build_selection_set(rules, space, list(labels))
    sheet.to_csv(selection_sheet_path(ws, session), index=False)
    return sheet


def finalize_rules(ws: Workspace, session: str) -> dict:
    """Simplify the selected sheet rules and render the resulting query."""
    sheet_path = selection_sheet_path(ws, session)
    if not sheet_path.is_file():
        raise FileNotFoundError(
            f"no selection sheet for session {session!r}; generate one first")
    sheet = pd.read_csv(sheet_path).fillna("")
    for column in SHEET_COLUMNS:
        if column not in sheet.columns:
            raise ValueError(f"selection sheet missing column {column!r}")
    rules = sheet_to_rules(sheet)
    if not rules:
        raise ValueError("no rules selected; set selected_rule to TRUE")
    path = latest_annotation(ws, session)
    table = read_annotation(path)
    labels = manual_labels(table)
    dtm = build_dtm(records_from_table(table), list(labels))
    space = collapse_terms(dtm)
    simplified = simplify_ruleset(rules, space, list(labels))
    ast = rules_to_query(simplified)
    rendered = {}
    for dialect in DIALECTS:
        try:
            rendered[dialect] = render_query(ast, dialect)
        except ValueError as exc:
            rendered[dialect] = f"(not renderable: {exc})"
    return {
        "rules": [{"conditions": [
            {"term": c.term, "negated": c.negated} for c in r.conditions],
            "n_pos": r.n_pos, "n_neg": r.n_neg} for r in simplified],
        "rendered": rendered,
    }


def compute_densities(ws: Workspace, session: str) -> pd.DataFrame:
    path = latest_annotation(ws, session)
    samples = latest_samples(ws, session)
    if path is None or samples is None:
        raise FileNotFoundError(
            f"session {session!r} has no screening output yet")
    table = read_annotation(path)
    record_ids, draws = load_samples(samples)
    id_to_row = {rid: i for i, rid in enumerate(record_ids)}
    order = [id_to_row.get(str(rid)) for rid in table["ID"]]
    keep = [i for i, o in enumerate(order) if o is not None]
    draws = draws[[order[i] for i in keep]]
    labels = display_labels(table).iloc[keep]
    labels = labels.replace({REVIEW_MARKER: "unk"})
    return export_ppd_density(draws, labels.to_numpy(dtype=object))
