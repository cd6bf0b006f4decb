"""Enriched binary document-term matrix.

Pipeline: per-field term occurrences -> rare-term pruning (labelled docs) ->
redundant-term merging (cosine > 0.9, "|"-joined names) -> nc-gram detection
(cosine > 0.5 maximal cliques, "&"-joined names) -> per-field token count
columns with missing markers for absent fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np
import pandas as pd

from .records import CitationRecord
from .textproc import FIELDS, preprocess_field

__all__ = [
    "TermOccurrence", "Dtm", "cosine_cooccurrence", "build_cooccurrence_graph",
    "enumerate_maximal_cliques", "merge_redundant_terms", "add_ncgrams",
    "prune_rare_terms", "build_dtm",
]

MAX_CLIQUE_SIZE = 10
NCGRAM_THRESHOLD = 0.5
REDUNDANT_THRESHOLD = 0.9
MIN_LABELLED_FRACTION = 0.05


@dataclass
class TermOccurrence:
    term: str               # may contain " & " (nc-grams) or " | " (merged)
    field: str
    doc_vector: np.ndarray  # bool, length = corpus size

    @property
    def name(self) -> str:
        return f"{self.field}:{self.term}"


@dataclass
class Dtm:
    record_ids: list[str]
    feature_names: list[str]
    feature_kinds: list[str]        # term | count
    matrix: np.ndarray              # float32, NaN = missing marker

    @property
    def n_records(self) -> int:
        return len(self.record_ids)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def rows(self, indices) -> np.ndarray:
        return self.matrix[np.asarray(indices)]

    def to_triplets(self) -> pd.DataFrame:
        """Sparse (record_id, feature_name, value) export for debugging."""
        rows, cols = np.nonzero(~np.isnan(self.matrix) & (self.matrix != 0))
        return pd.DataFrame({
            "record_id": [self.record_ids[r] for r in rows],
            "feature_name": [self.feature_names[c] for c in cols],
            "value": self.matrix[rows, cols],
        })


def cosine_cooccurrence(a: np.ndarray, b: np.ndarray) -> float:
    """Document co-occurrence cosine of two binary vectors."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    n_a = int(a.sum())
    n_b = int(b.sum())
    if n_a == 0 or n_b == 0:
        return 0.0
    n_ab = int((a & b).sum())
    return n_ab / np.sqrt(n_a * n_b)


def build_cooccurrence_graph(occurrences: list[TermOccurrence],
                             threshold: float) -> dict[int, set[int]]:
    """Adjacency over occurrence indices; edge iff cosine strictly > threshold."""
    n = len(occurrences)
    graph: dict[int, set[int]] = {i: set() for i in range(n)}
    if n < 2:
        return graph
    mat = np.stack([occ.doc_vector for occ in occurrences]).astype(np.float32)
    counts = mat.sum(axis=1)
    co = mat @ mat.T
    denom = np.sqrt(np.outer(counts, counts))
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = np.where(denom > 0, co / denom, 0.0)
    ii, jj = np.nonzero(np.triu(cos > threshold, k=1))
    for i, j in zip(ii.tolist(), jj.tolist()):
        graph[i].add(j)
        graph[j].add(i)
    return graph


def _degeneracy_order(graph: dict[int, set[int]]) -> list[int]:
    degrees = {v: len(neigh) for v, neigh in graph.items()}
    remaining = dict(degrees)
    order = []
    while remaining:
        v = min(remaining, key=lambda u: (remaining[u], u))
        order.append(v)
        del remaining[v]
        for u in graph[v]:
            if u in remaining:
                remaining[u] -= 1
    return order


def enumerate_maximal_cliques(graph: dict[int, set[int]],
                              max_size: int = MAX_CLIQUE_SIZE) -> set[frozenset[int]]:
    """All maximal cliques of size in [2, max_size], Bron-Kerbosch with
    degeneracy-ordered outer loop and pivoting."""
    cliques: set[frozenset[int]] = set()

    def expand(r: set[int], p: set[int], x: set[int]):
        if not p and not x:
            if 2 <= len(r) <= max_size:
                cliques.add(frozenset(r))
            return
        pivot = max(p | x, key=lambda u: (len(graph[u] & p), -u))
        for v in sorted(p - graph[pivot]):
            expand(r | {v}, p & graph[v], x & graph[v])
            p = p - {v}
            x = x | {v}

    order = _degeneracy_order(graph)
    position = {v: i for i, v in enumerate(order)}
    for v in order:
        later = {u for u in graph[v] if position[u] > position[v]}
        earlier = {u for u in graph[v] if position[u] < position[v]}
        expand({v}, later, earlier)
    return cliques


def prune_rare_terms(occurrences: list[TermOccurrence], labels: list[str],
                     min_frac: float = MIN_LABELLED_FRACTION) -> list[TermOccurrence]:
    """Drop terms present in < min_frac of labelled docs and absent from all
    labelled positives."""
    labels = np.asarray(labels, dtype=object)
    labelled = (labels == "y") | (labels == "n")
    positive = labels == "y"
    n_labelled = int(labelled.sum())
    if n_labelled == 0:
        return list(occurrences)
    kept = []
    for occ in occurrences:
        in_labelled = int(occ.doc_vector[labelled].sum())
        in_positive = int(occ.doc_vector[positive].sum())
        if in_labelled < min_frac * n_labelled and in_positive == 0:
            continue
        kept.append(occ)
    return kept


def _joined_term(members: list[TermOccurrence], sep: str) -> tuple[str, str]:
    names = sorted(m.term for m in members)
    fields = sorted({m.field for m in members})
    field = fields[0] if len(fields) == 1 else "+".join(fields)
    return sep.join(names), field


def merge_redundant_terms(occurrences: list[TermOccurrence],
                          threshold: float = REDUNDANT_THRESHOLD) -> list[TermOccurrence]:
    """Merge cliques of near-always-co-occurring terms into "|"-joined features."""
    graph = build_cooccurrence_graph(occurrences, threshold)
    cliques = enumerate_maximal_cliques(graph)
    merged: dict[int, TermOccurrence] = {}
    consumed: set[int] = set()
    # overlapping cliques: first (by canonical name) wins, rest keep leftovers
    def clique_key(c):
        return _joined_term([occurrences[i] for i in c], " | ")[0]
    for clique in sorted(cliques, key=clique_key):
        members = sorted(clique)
        if any(i in consumed for i in members):
            continue
        occs = [occurrences[i] for i in members]
        term, field = _joined_term(occs, " | ")
        vector = np.logical_or.reduce([o.doc_vector for o in occs])
        merged[members[0]] = TermOccurrence(term, field, vector)
        consumed.update(members)
    out = []
    for i, occ in enumerate(occurrences):
        if i in merged:
            out.append(merged[i])
        elif i not in consumed:
            out.append(occ)
    return out


def add_ncgrams(occurrences: list[TermOccurrence],
                cliques: set[frozenset[int]]) -> list[TermOccurrence]:
    """Append one "&"-joined intersection feature per clique; members retained."""
    out = list(occurrences)
    extras = []
    for clique in cliques:
        if len(clique) < 2:
            continue
        occs = [occurrences[i] for i in sorted(clique)]
        vector = np.logical_and.reduce([o.doc_vector for o in occs])
        if not vector.any():
            continue
        term, field = _joined_term(occs, " & ")
        extras.append(TermOccurrence(term, field, vector))
    extras.sort(key=lambda o: o.name)
    out.extend(extras)
    return out


def _field_text(record: CitationRecord, field: str) -> str:
    if field == "title":
        return record.title or ""
    if field == "abstract":
        return record.abstract or ""
    if field == "authors":
        return "; ".join(record.authors)
    if field == "keywords":
        return "; ".join(record.keywords)
    return "; ".join(record.mesh)


def build_dtm(records: list[CitationRecord], labels: list[str]) -> Dtm:
    """Full DTM pipeline over a corpus with (possibly partial) labels."""
    if len(records) != len(labels):
        raise ValueError("records and labels must align")
    labelled = [l for l in labels if l in ("y", "n")]
    if not labelled:
        raise ValueError("at least one labelled record is required")

    n = len(records)
    term_docs: dict[tuple[str, str], set[int]] = {}
    token_counts = np.zeros((n, len(FIELDS)), dtype=np.float32)
    field_missing = np.zeros((n, len(FIELDS)), dtype=bool)
    for i, record in enumerate(records):
        for j, field in enumerate(FIELDS):
            text = _field_text(record, field)
            if not text.strip():
                field_missing[i, j] = True
                continue
            terms = preprocess_field(text, field)
            token_counts[i, j] = len(terms)
            for term in terms:
                term_docs.setdefault((field, term), set()).add(i)

    occurrences = []
    for (field, term) in sorted(term_docs):
        vector = np.zeros(n, dtype=bool)
        vector[sorted(term_docs[(field, term)])] = True
        occurrences.append(TermOccurrence(term, field, vector))

    occurrences = prune_rare_terms(occurrences, labels)
    occurrences = merge_redundant_terms(occurrences)
    cliques = enumerate_maximal_cliques(
        build_cooccurrence_graph(occurrences, NCGRAM_THRESHOLD))
    occurrences = add_ncgrams(occurrences, cliques)
    occurrences = [o for o in occurrences if o.doc_vector.any()]

    names = [occ.name for occ in occurrences]
    kinds = ["term"] * len(occurrences)
    columns = [occ.doc_vector.astype(np.float32) for occ in occurrences]

    for j, field in enumerate(FIELDS):
        col = token_counts[:, j].copy()
        col[field_missing[:, j]] = np.nan
        if np.nansum(col) == 0 and not field_missing[:, j].any():
            continue
        names.append(f"count:{field}")
        kinds.append("count")
        columns.append(col)

    matrix = np.column_stack(columns) if columns else np.zeros((n, 0), dtype=np.float32)
    return Dtm([r.record_id for r in records], names, kinds, matrix.astype(np.float32))
