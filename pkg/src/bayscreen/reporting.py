"""Summary tables over the journal, corpus and screening results."""

from __future__ import annotations

from collections import Counter

import pandas as pd

from .records import CitationRecord
from .store import Workspace, read_results

__all__ = ["summarise_sources", "summarise_iterations", "get_source_distribution"]


def summarise_sources(journal: pd.DataFrame,
                      corpus: list[CitationRecord]) -> pd.DataFrame:
    """Per (session, source): retrieved records, share of the deduplicated
    corpus, records only that source found, and their share of the source."""
    n_corpus = len(corpus)
    with_source: Counter = Counter()
    only_source: Counter = Counter()
    for record in corpus:
        for source in record.sources:
            with_source[source] += 1
        if len(record.sources) == 1:
            only_source[next(iter(record.sources))] += 1

    rows = []
    if len(journal):
        grouped = journal.groupby(["session_name", "source"], sort=True)
        for (session, source), part in grouped:
            retrieved = int(pd.to_numeric(part["n_results"]).sum())
            specific = only_source.get(source, 0)
            in_corpus = with_source.get(source, 0)
            rows.append({
                "session": session,
                "source": source,
                "records": retrieved,
                "pct_over_total": retrieved / n_corpus if n_corpus else 0.0,
                "source_specific_records": specific,
                "pct_over_source": specific / in_corpus if in_corpus else 0.0,
            })
    return pd.DataFrame(rows, columns=[
        "session", "source", "records", "pct_over_total",
        "source_specific_records", "pct_over_source"])


ITERATION_COLUMNS = [
    "iteration", "timestamp", "n_pos", "n_neg", "total_labelled",
    "pct_labelled", "unlab_to_y", "unlab_to_n", "unlab_to_star",
    "n_to_y", "y_to_n", "total_changed", "n_features",
]


def summarise_iterations(ws: Workspace, session: str) -> pd.DataFrame:
    """One row per screening iteration from the stored result summaries."""
    rows = []
    for i, (_, summary) in enumerate(read_results(ws, session), start=1):
        n_records = int(summary.get("n_records", 0) or 0)
        n_pos = int(summary.get("n_pos", 0) or 0)
        n_neg = int(summary.get("n_neg", 0) or 0)
        total = n_pos + n_neg
        rows.append({
            "iteration": i,
            "timestamp": summary.get("timestamp", ""),
            "n_pos": n_pos,
            "n_neg": n_neg,
            "total_labelled": total,
            "pct_labelled": total / n_records if n_records else 0.0,
            "unlab_to_y": int(summary.get("unlab_to_y", 0) or 0),
            "unlab_to_n": int(summary.get("unlab_to_n", 0) or 0),
            "unlab_to_star": int(summary.get("unlab_to_star", 0) or 0),
            "n_to_y": int(summary.get("n_to_y", 0) or 0),
            "y_to_n": int(summary.get("y_to_n", 0) or 0),
            "total_changed": int(summary.get("total_changed", 0) or 0),
            "n_features": int(summary.get("n_features", 0) or 0),
        })
    return pd.DataFrame(rows, columns=ITERATION_COLUMNS)


def get_source_distribution(corpus: list[CitationRecord]) -> dict[int, int]:
    """Histogram of how many sources agreed on each record."""
    counts = Counter(len(record.sources) for record in corpus)
    return dict(sorted(counts.items()))
