import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bayscreen.bart import BartConfig
from bayscreen.ensemble import EnsembleConfig, Limits
from bayscreen.queries import parse_query
from bayscreen.records import CitationRecord, create_annotation_file
from bayscreen.store import Workspace

POS_TERMS = ["alpha", "beta", "kappa"]
FILLER_TERMS = ["gamma", "delta", "epsilon", "zeta", "theta", "lambda",
                "sigma", "omega"]


def make_corpus(n_records, n_positives, seed=0, n_signal_terms=2):
    """Synthetic records where a fixed set of signal words marks positives.

    Returns (records, truth) with truth maps keyed by the content-derived
    record id (records carry distinct DOIs so ids are stable under dedup).
    """
    rng = np.random.default_rng(seed)
    signal = POS_TERMS[:n_signal_terms]
    records = []
    truth = {}
    pos_rows = set(rng.choice(n_records, size=n_positives, replace=False).tolist())
    for i in range(n_records):
        is_pos = i in pos_rows
        words = list(rng.choice(FILLER_TERMS, 5))
        if is_pos:
            words = signal + words
        title = f"study {i:04d} " + " ".join(words[:4])
        abstract = " ".join(words) + " " + " ".join(rng.choice(FILLER_TERMS, 3))
        rec = CitationRecord(
            record_id=f"raw{i:04d}", title=title, abstract=abstract,
            doi=f"10.9999/synthetic.{i:04d}", authors=[f"Author {i % 7}"],
            keywords=list(words[:3]), year=2015 + i % 6, sources={"Pubmed"})
        records.append(rec)
        truth[rec.record_id] = "y" if is_pos else "n"
    return records, truth


def corpus_table(n_records, n_positives, seed=0, n_signal_terms=2,
                 query="alpha OR beta"):
    """Annotation table plus an oracle keyed on the table's record ids."""
    records, truth = make_corpus(n_records, n_positives, seed=seed,
                                 n_signal_terms=n_signal_terms)
    by_doi = {r.doi: truth[r.record_id] for r in records}
    table = create_annotation_file(records, parse_query(query))
    oracle = {str(rid): by_doi[doi] for rid, doi in zip(table["ID"], table["DOI"])}
    return table, oracle


@pytest.fixture
def fast_bart():
    return BartConfig(n_trees=10, n_iterations=120, n_burnin=20, seed=0)


@pytest.fixture
def fast_ensemble(fast_bart):
    return EnsembleConfig(n_models=2, oversample_mult=2,
                          limits=Limits(stop_after=2), bart=fast_bart)


@pytest.fixture
def workspace(tmp_path):
    return Workspace(tmp_path / "ws")
