"""Citation record model, deduplication and the annotation table.

Annotation tables are pandas DataFrames with a fixed column order, persisted
as UTF-8 CSV.  Unlabelled cells are empty strings; list-valued fields are
"; "-joined in the CSV.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

import pandas as pd

from .queries import Node, order_by_query_match, score_record

__all__ = [
    "LABELS", "CitationRecord", "merge_and_deduplicate",
    "ANNOTATION_COLUMNS", "create_annotation_file", "compute_changes",
    "records_from_table", "effective_labels", "manual_labels",
    "normalize_doi", "normalize_title",
]

# y/n are human decisions, unk/check come from prediction; "" = unlabelled
LABELS = ("y", "n", "unk", "check")

ANNOTATION_COLUMNS = [
    "Order", "ID", "Title", "Abstract", "Authors", "Keywords", "Mesh", "Year",
    "Sources", "DOI", "Rev_manual", "Rev_prediction", "Rev_prediction_new",
    "Rev_previous", "Pred_Low", "Pred_Med", "Pred_Up",
]

REVIEW_MARKER = "*"


@dataclass
class CitationRecord:
    record_id: str
    title: str = ""
    abstract: str = ""
    doi: str | None = None
    authors: list[str] = field(default_factory=list)
    keywords: list[str] = field(default_factory=list)
    mesh: list[str] = field(default_factory=list)
    year: int | None = None
    sources: set[str] = field(default_factory=set)
    source_ids: dict[str, str] = field(default_factory=dict)
    url: str | None = None


def normalize_doi(doi: str | None) -> str | None:
    if not doi or not str(doi).strip():
        return None
    doi = str(doi).strip().lower()
    for prefix in ("https://doi.org/", "http://doi.org/", "https://dx.doi.org/",
                   "http://dx.doi.org/", "doi:"):
        if doi.startswith(prefix):
            doi = doi[len(prefix):]
    return doi or None


def normalize_title(title: str) -> str:
    return re.sub(r"[^a-z0-9]+", " ", (title or "").lower()).strip()


def make_record_id(doi: str | None, title: str) -> str:
    doi = normalize_doi(doi)
    if doi:
        return f"doi:{doi}"
    digest = hashlib.sha1(normalize_title(title).encode("utf-8")).hexdigest()[:16]
    return f"ttl:{digest}"


def _merge_group(group: list[CitationRecord]) -> CitationRecord:
    def longest(values: list[str]) -> str:
        values = [v for v in values if v]
        if not values:
            return ""
        return sorted(values, key=lambda v: (-len(v), v))[0]

    dois = sorted({d for d in (normalize_doi(r.doi) for r in group) if d})
    title = longest([r.title for r in group])
    abstract = longest([r.abstract for r in group])
    author_lists = [r.authors for r in group if r.authors]
    authors = sorted(author_lists, key=lambda a: (-len(a), a))[0] if author_lists else []
    years = [r.year for r in group if r.year]
    source_ids: dict[str, str] = {}
    for r in group:
        for k, v in sorted(r.source_ids.items()):
            source_ids.setdefault(k, v)
    urls = sorted({r.url for r in group if r.url})
    doi = dois[0] if dois else None
    return CitationRecord(
        record_id=make_record_id(doi, title),
        title=title,
        abstract=abstract,
        doi=doi,
        authors=authors,
        keywords=sorted({k for r in group for k in r.keywords}),
        mesh=sorted({m for r in group for m in r.mesh}),
        year=min(years) if years else None,
        sources={s for r in group for s in r.sources},
        source_ids=source_ids,
        url=urls[0] if urls else None,
    )


def merge_and_deduplicate(batches: list[list[CitationRecord]]) -> list[CitationRecord]:
    """Merge record batches into one deduplicated list.

    Two records refer to the same publication when their normalized DOIs match
    (both present) or their normalized titles match.  Merging unions
    sources/keywords/mesh and keeps the longest abstract.
    """
    groups: list[list[CitationRecord]] = []
    by_doi: dict[str, int] = {}
    by_title: dict[str, int] = {}

    def find(record: CitationRecord) -> int | None:
        doi = normalize_doi(record.doi)
        title = normalize_title(record.title)
        gi = by_doi.get(doi) if doi else None
        gj = by_title.get(title) if title else None
        if gi is not None and gj is not None and gi != gj:
            # same record bridges two groups: merge them
            groups[gi].extend(groups[gj])
            groups[gj] = []
            for key, idx in list(by_doi.items()):
                if idx == gj:
                    by_doi[key] = gi
            for key, idx in list(by_title.items()):
                if idx == gj:
                    by_title[key] = gi
            return gi
        return gi if gi is not None else gj

    for batch in batches:
        for record in batch:
            idx = find(record)
            if idx is None:
                idx = len(groups)
                groups.append([])
            groups[idx].append(record)
            doi = normalize_doi(record.doi)
            title = normalize_title(record.title)
            if doi:
                by_doi[doi] = idx
            if title:
                by_title[title] = idx

    return [_merge_group(g) for g in groups if g]


def _join(values) -> str:
    return "; ".join(values)


def _record_row(record: CitationRecord, order: float) -> dict:
    return {
        "Order": order,
        "ID": record.record_id,
        "Title": record.title,
        "Abstract": record.abstract,
        "Authors": _join(record.authors),
        "Keywords": _join(record.keywords),
        "Mesh": _join(record.mesh),
        "Year": record.year if record.year is not None else "",
        "Sources": _join(sorted(record.sources)),
        "DOI": record.doi or "",
        "Rev_manual": "", "Rev_prediction": "", "Rev_prediction_new": "",
        "Rev_previous": "", "Pred_Low": "", "Pred_Med": "", "Pred_Up": "",
    }


def _split(value) -> list[str]:
    if value is None or (isinstance(value, float) and pd.isna(value)) or value == "":
        return []
    return [part.strip() for part in str(value).split(";") if part.strip()]


def records_from_table(table: pd.DataFrame) -> list[CitationRecord]:
    records = []
    for _, row in table.iterrows():
        year = row.get("Year", "")
        records.append(CitationRecord(
            record_id=str(row["ID"]),
            title=str(row.get("Title", "") or ""),
            abstract=str(row.get("Abstract", "") or ""),
            doi=normalize_doi(row.get("DOI", "")) or None,
            authors=_split(row.get("Authors")),
            keywords=_split(row.get("Keywords")),
            mesh=_split(row.get("Mesh")),
            year=int(year) if str(year).strip() not in ("", "nan") else None,
            sources=set(_split(row.get("Sources"))),
        ))
    return records


def create_annotation_file(
    records: list[CitationRecord],
    query: Node,
    prev_records: pd.DataFrame | None = None,
    prev_classification: pd.DataFrame | None = None,
) -> pd.DataFrame:
    """Build the annotation table: deduplicated records, ordered by query score.

    New records are re-deduplicated against ``prev_records``; labels from the
    previous table are carried over, and ``prev_classification`` labels are
    joined into Rev_previous by record id or DOI.
    """
    prev_label_cols = ("Rev_manual", "Rev_prediction", "Rev_prediction_new", "Rev_previous")
    carried: dict[str, dict] = {}
    all_records = list(records)
    if prev_records is not None and len(prev_records):
        prev_recs = records_from_table(prev_records)
        all_records = prev_recs + all_records
        for rec, (_, row) in zip(prev_recs, prev_records.iterrows()):
            labels = {col: str(row.get(col, "") or "") for col in prev_label_cols}
            labels = {k: ("" if v == "nan" else v) for k, v in labels.items()}
            carried[rec.record_id] = labels
            if rec.doi:
                carried[f"doi:{rec.doi}"] = labels

    merged = merge_and_deduplicate([all_records])

    seen: set[str] = set()
    for rec in merged:
        if rec.record_id in seen:
            raise ValueError(f"duplicate record_id after deduplication: {rec.record_id}")
        seen.add(rec.record_id)

    ordered = order_by_query_match(merged, query)
    rows = [_record_row(rec, score_record(query, rec)) for rec in ordered]
    table = pd.DataFrame(rows, columns=ANNOTATION_COLUMNS)

    for i, rec in enumerate(ordered):
        labels = carried.get(rec.record_id) or (carried.get(f"doi:{rec.doi}") if rec.doi else None)
        if labels:
            for col in prev_label_cols:
                table.loc[table.index[i], col] = labels[col]

    if prev_classification is not None and len(prev_classification):
        prev_map: dict[str, str] = {}
        for _, row in prev_classification.iterrows():
            label = _current_label(row)
            if not label:
                continue
            prev_map[str(row["ID"])] = label
            doi = normalize_doi(row.get("DOI", ""))
            if doi:
                prev_map[f"doi:{doi}"] = label
        for i, rec in enumerate(ordered):
            label = prev_map.get(rec.record_id) or (prev_map.get(f"doi:{rec.doi}") if rec.doi else None)
            if label:
                table.loc[table.index[i], "Rev_previous"] = label

    return table


def _clean(value) -> str:
    if value is None or (isinstance(value, float) and pd.isna(value)):
        return ""
    value = str(value)
    return "" if value == "nan" else value


def _current_label(row) -> str:
    """Displayed y/n classification: the human label wins over the
    predicted one."""
    manual = _clean(row.get("Rev_manual"))
    if manual in ("y", "n"):
        return manual
    new = _clean(row.get("Rev_prediction_new"))
    if new in ("y", "n"):
        return new
    return ""


def row_state(row) -> str:
    """Labelling state used for change tracking: y, n, unk, check, * or ''."""
    manual = _clean(row.get("Rev_manual"))
    if manual in ("y", "n"):
        return manual
    new = _clean(row.get("Rev_prediction_new"))
    if new == REVIEW_MARKER:
        return REVIEW_MARKER
    if new in LABELS:
        return new
    pred = _clean(row.get("Rev_prediction"))
    if pred in LABELS:
        return pred
    return ""


def manual_labels(table: pd.DataFrame) -> pd.Series:
    """Human-confirmed y/n labels only ('' elsewhere); the training signal."""
    manual = table["Rev_manual"].fillna("").astype(str)
    return manual.where(manual.isin(["y", "n"]), "")


def effective_labels(table: pd.DataFrame) -> pd.Series:
    """Per-row displayed y/n label ('' where undecided)."""
    return table.apply(_current_label, axis=1)


def compute_changes(current: pd.DataFrame, previous: pd.DataFrame) -> dict:
    """Count label transitions between two annotation tables."""
    cur_ids = set(current["ID"])
    prev_ids = set(previous["ID"])
    if cur_ids != prev_ids:
        offending = sorted(cur_ids.symmetric_difference(prev_ids))
        raise ValueError(f"record universes differ: {offending}")

    prev_state = {row["ID"]: row_state(row) for _, row in previous.iterrows()}
    summary = {"unlab_to_y": 0, "unlab_to_n": 0, "unlab_to_star": 0,
               "n_to_y": 0, "y_to_n": 0, "total_changed": 0}
    for _, row in current.iterrows():
        before = prev_state[row["ID"]]
        after = row_state(row)
        if before == after:
            continue
        summary["total_changed"] += 1
        if before == "" and after == "y":
            summary["unlab_to_y"] += 1
        elif before == "" and after == "n":
            summary["unlab_to_n"] += 1
        elif before == "" and after == REVIEW_MARKER:
            summary["unlab_to_star"] += 1
        elif before == "n" and after == "y":
            summary["n_to_y"] += 1
        elif before == "y" and after == "n":
            summary["y_to_n"] += 1
    return summary
