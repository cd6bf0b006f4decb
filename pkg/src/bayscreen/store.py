"""Session file store: journal, annotation files, results and posterior samples.

Layout:
    Records/<session>/<query>/<Source><n>.<ext>   raw downloads
    Sessions/<session>/Records_<timestamp>.csv    annotation files
    Sessions/<session>/Results/<timestamp>.csv    per-iteration summaries
    Sessions/<session>/Samples_<timestamp>.bin    pooled posterior draws
    Session_journal.csv                           search ledger
"""

from __future__ import annotations

import io
import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd

from .records import ANNOTATION_COLUMNS, REVIEW_MARKER, effective_labels

__all__ = [
    "Workspace", "utc_timestamp", "update_journal", "read_journal",
    "write_annotation", "read_annotation", "latest_annotation",
    "write_result", "read_results", "consolidate_results",
    "save_samples", "load_samples", "latest_samples",
]

JOURNAL_COLUMNS = ["session_name", "query_name", "query_text", "year_filter",
                   "source", "timestamp", "n_results", "file_path"]

SAMPLES_FORMAT_VERSION = 1


def utc_timestamp(now: datetime | None = None) -> str:
    """ISO-8601 UTC timestamp, filesystem-safe (colons removed)."""
    now = now or datetime.now(timezone.utc)
    return now.strftime("%Y%m%dT%H%M%S.%fZ")


@dataclass
class Workspace:
    root: Path

    def __post_init__(self):
        self.root = Path(self.root)

    @property
    def records_root(self) -> Path:
        return self.root / "Records"

    @property
    def sessions_root(self) -> Path:
        return self.root / "Sessions"

    @property
    def journal_path(self) -> Path:
        return self.root / "Session_journal.csv"

    def records_dir(self, session: str, query: str) -> Path:
        return self.records_root / session / query

    def session_dir(self, session: str) -> Path:
        return self.sessions_root / session

    def results_dir(self, session: str) -> Path:
        return self.session_dir(session) / "Results"

    def session_names(self) -> list[str]:
        if not self.sessions_root.is_dir():
            return []
        return sorted(p.name for p in self.sessions_root.iterdir() if p.is_dir())


def read_journal(path: Path) -> pd.DataFrame:
    if Path(path).is_file():
        return pd.read_csv(path, dtype=str).fillna("")
    return pd.DataFrame(columns=JOURNAL_COLUMNS)


def update_journal(path: Path, session_name: str, query_name: str, query_text: str,
                   year_filter: str, per_source_counts: dict[str, int],
                   file_paths: dict[str, list[str]] | None = None,
                   timestamp: str | None = None) -> pd.DataFrame:
    """Append one journal row per source; idempotent for identical keys."""
    path = Path(path)
    journal = read_journal(path)
    timestamp = timestamp or utc_timestamp()
    file_paths = file_paths or {}
    existing = {(r.session_name, r.query_name, r.source, r.timestamp)
                for r in journal.itertuples()}
    rows = []
    for source in sorted(per_source_counts):
        key = (session_name, query_name, source, timestamp)
        if key in existing:
            continue
        rows.append({
            "session_name": session_name,
            "query_name": query_name,
            "query_text": query_text,
            "year_filter": year_filter,
            "source": source,
            "timestamp": timestamp,
            "n_results": str(per_source_counts[source]),
            "file_path": "; ".join(file_paths.get(source, [])),
        })
    if rows:
        journal = pd.concat([journal, pd.DataFrame(rows)], ignore_index=True)
    path.parent.mkdir(parents=True, exist_ok=True)
    journal.to_csv(path, index=False)
    return journal


_ANNOTATION_RE = re.compile(r"^Records_(?P<ts>.+)\.csv$")


def write_annotation(ws: Workspace, session: str, table: pd.DataFrame,
                     timestamp: str | None = None) -> Path:
    timestamp = timestamp or utc_timestamp()
    directory = ws.session_dir(session)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"Records_{timestamp}.csv"
    table[ANNOTATION_COLUMNS].to_csv(path, index=False)
    return path


def read_annotation(path: Path) -> pd.DataFrame:
    table = pd.read_csv(path, dtype=str).fillna("")
    for col in ("Order", "Pred_Low", "Pred_Med", "Pred_Up"):
        table[col] = pd.to_numeric(table[col], errors="coerce")
    table["Order"] = table["Order"].fillna(0.0)
    return table


def annotation_files(ws: Workspace, session: str) -> list[Path]:
    directory = ws.session_dir(session)
    if not directory.is_dir():
        return []
    files = [p for p in directory.iterdir() if _ANNOTATION_RE.match(p.name)]
    return sorted(files, key=lambda p: p.name)


def latest_annotation(ws: Workspace, session: str) -> Path | None:
    files = annotation_files(ws, session)
    return files[-1] if files else None


def write_result(ws: Workspace, session: str, summary: dict,
                 timestamp: str | None = None) -> Path:
    timestamp = timestamp or utc_timestamp()
    directory = ws.results_dir(session)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{timestamp}.csv"
    pd.DataFrame([summary]).to_csv(path, index=False)
    return path


def read_results(ws: Workspace, session: str) -> list[tuple[Path, dict]]:
    directory = ws.results_dir(session)
    if not directory.is_dir():
        return []
    out = []
    for path in sorted(directory.glob("*.csv"), key=lambda p: p.name):
        frame = pd.read_csv(path)
        out.append((path, frame.iloc[0].to_dict()))
    return out


def _label_counts(table: pd.DataFrame) -> dict:
    labels = effective_labels(table)
    new_col = table["Rev_prediction_new"].fillna("").astype(str)
    return {
        "n_records": len(table),
        "n_pos": int((labels == "y").sum()),
        "n_neg": int((labels == "n").sum()),
        "n_to_review": int((new_col == REVIEW_MARKER).sum()),
    }


def consolidate_results(ws: Workspace, session: str) -> list[Path]:
    """Recompute per-iteration result summaries from post-review labels."""
    files = annotation_files(ws, session)
    results = read_results(ws, session)
    if not files:
        raise FileNotFoundError(f"no annotation files for session {session!r}")
    updated = []
    by_ts = {path.name[len("Records_"):-len(".csv")]: path for path in files}
    for result_path, summary in results:
        timestamp = result_path.name[:-len(".csv")]
        annotation_path = by_ts.get(timestamp)
        if annotation_path is None:
            continue
        table = read_annotation(annotation_path)
        summary.update(_label_counts(table))
        pd.DataFrame([summary]).to_csv(result_path, index=False)
        updated.append(result_path)
    return updated


def save_samples(ws: Workspace, session: str, record_ids: list[str],
                 draws: np.ndarray, timestamp: str | None = None) -> Path:
    """Persist pooled posterior draws in a versioned binary file."""
    timestamp = timestamp or utc_timestamp()
    directory = ws.session_dir(session)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"Samples_{timestamp}.bin"
    header = json.dumps({"version": SAMPLES_FORMAT_VERSION,
                         "record_ids": list(record_ids)}).encode("utf-8")
    buffer = io.BytesIO()
    np.save(buffer, np.asarray(draws, dtype=np.float32))
    with open(path, "wb") as fh:
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        fh.write(buffer.getvalue())
    return path


def load_samples(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, "rb") as fh:
        header_len = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("version") != SAMPLES_FORMAT_VERSION:
            raise ValueError(f"unsupported samples format: {header.get('version')}")
        draws = np.load(io.BytesIO(fh.read()))
    return header["record_ids"], draws


def latest_samples(ws: Workspace, session: str) -> Path | None:
    directory = ws.session_dir(session)
    if not directory.is_dir():
        return None
    files = sorted(directory.glob("Samples_*.bin"), key=lambda p: p.name)
    return files[-1] if files else None
