"""Citation sources: API clients over an injected transport plus parsers for
manually downloaded bibliography files.

A transport is any callable (method, url, params) -> (status, headers, body);
tests supply fixture transports, the CLI wires an HTTP one.  Raw responses
are persisted verbatim under Records/<session>/<query>/ and parsed back with
the same parsers used for manual downloads.
"""

from __future__ import annotations

import csv
import io
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

from .queries import Node, YearFilter, render_query
from .records import CitationRecord, make_record_id, normalize_doi
from .store import Workspace, update_journal

__all__ = [
    "SourceDescriptor", "SOURCES", "ApiCredentials", "SourceError",
    "SourceAuthError", "search_source", "parse_bib_file", "parse_bib_path",
    "infer_source_and_format", "perform_search_session",
]

MAX_RETRIES = 5

ENV_KEYS = {
    "Pubmed": "BAYSCREEN_PUBMED_KEY",
    "WOS": "BAYSCREEN_WOS_KEY",
    "IEEE": "BAYSCREEN_IEEE_KEY",
}


@dataclass(frozen=True)
class SourceDescriptor:
    name: str
    supports_api: bool
    needs_key: bool
    page_size: int
    rate_limit: float               # requests per second
    dialect: str
    extension: str
    url: str = ""

    def __post_init__(self):
        if self.page_size <= 0:
            raise ValueError("page_size must be positive")


SOURCES = {
    "Pubmed": SourceDescriptor(
        "Pubmed", supports_api=True, needs_key=False, page_size=100,
        rate_limit=3.0, dialect="pubmed", extension="nbib",
        url="https://eutils.ncbi.nlm.nih.gov/entrez/eutils/esearch.fcgi"),
    "WOS": SourceDescriptor(
        "WOS", supports_api=True, needs_key=True, page_size=100,
        rate_limit=2.0, dialect="wos", extension="txt",
        url="https://wos-api.clarivate.com/api/wos"),
    "IEEE": SourceDescriptor(
        "IEEE", supports_api=True, needs_key=True, page_size=100,
        rate_limit=2.0, dialect="ieee", extension="csv",
        url="https://ieeexploreapi.ieee.org/api/v1/search/articles"),
    "Scopus": SourceDescriptor(
        "Scopus", supports_api=False, needs_key=False, page_size=100,
        rate_limit=1.0, dialect="scopus", extension="csv"),
    "Embase": SourceDescriptor(
        "Embase", supports_api=False, needs_key=False, page_size=100,
        rate_limit=1.0, dialect="embase", extension="csv"),
}

FORMATS = {"Pubmed": "nbib", "WOS": "wos", "IEEE": "ieee_csv",
           "Scopus": "scopus_csv", "Embase": "embase_csv"}


class ApiCredentials:
    """Source -> API key map; keys are never exposed via repr or iteration."""

    def __init__(self, keys: dict[str, str] | None = None):
        self._keys = dict(keys or {})

    @classmethod
    def from_env(cls, environ=None) -> "ApiCredentials":
        environ = environ if environ is not None else os.environ
        keys = {}
        for source, var in ENV_KEYS.items():
            value = environ.get(var, "").strip()
            if value:
                keys[source] = value
        return cls(keys)

    def get(self, source: str) -> str | None:
        return self._keys.get(source)

    def __repr__(self) -> str:
        return f"ApiCredentials(sources={sorted(self._keys)})"


class SourceError(Exception):
    pass


class SourceAuthError(SourceError):
    pass


def _count_records(body: bytes, fmt: str) -> int:
    records, _ = parse_bib_file(body, fmt)
    return len(records)


def search_source(source: str, ast: Node, year: YearFilter | None,
                  creds: ApiCredentials, transport, out_dir: Path,
                  sleep=time.sleep) -> list[Path]:
    """Paginated fetch; each raw page persisted as <Source><n>.<ext>.

    Pagination stops at the first page shorter than page_size.  Retries with
    exponential backoff on transient failures, honours Retry-After on 429.
    """
    desc = SOURCES[source]
    if not desc.supports_api:
        raise SourceError(f"{source} has no API; download records manually")
    key = creds.get(source)
    if desc.needs_key and not key:
        raise SourceAuthError(
            f"{source} requires an API key; set {ENV_KEYS[source]}")
    query = render_query(ast, desc.dialect, year=year)
    out_dir = Path(out_dir)
    fmt = FORMATS[source]
    pages: list[tuple[int, bytes]] = []
    offset = 0
    page_no = 1
    while True:
        params = {"query": query, "offset": offset, "limit": desc.page_size}
        if key:
            params["api_key"] = key
        body = _fetch_with_retries(transport, desc.url, params, source, sleep)
        n_records = _count_records(body, fmt)
        if n_records > 0:
            pages.append((page_no, body))
        if n_records < desc.page_size:
            break
        offset += desc.page_size
        page_no += 1
        sleep(1.0 / desc.rate_limit)

    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for page_no, body in pages:
        path = out_dir / f"{source}{page_no}.{desc.extension}"
        path.write_bytes(body)
        paths.append(path)
    return paths


def _fetch_with_retries(transport, url: str, params: dict, source: str,
                        sleep) -> bytes:
    last_error = None
    for attempt in range(MAX_RETRIES):
        try:
            status, headers, body = transport("GET", url, params)
        except Exception as exc:            # network failure: retry
            last_error = exc
            sleep(2.0 ** attempt)
            continue
        if status in (401, 403):
            raise SourceAuthError(
                f"{source} rejected the API key; check {ENV_KEYS.get(source)}")
        if status == 429:
            retry_after = float(headers.get("Retry-After", 2.0 ** attempt))
            sleep(retry_after)
            continue
        if status >= 500:
            last_error = SourceError(f"{source} returned HTTP {status}")
            sleep(2.0 ** attempt)
            continue
        if status != 200:
            raise SourceError(f"{source} returned HTTP {status}")
        return body
    raise SourceError(f"{source} failed after {MAX_RETRIES} attempts: {last_error}")


# ---------------------------------------------------------------------------
# bibliography parsing

def _finish_nbib(fields: dict, source: str) -> CitationRecord | None:
    title = " ".join(fields.get("TI", []))
    if not title:
        return None
    doi = None
    for aid in fields.get("AID", []) + fields.get("LID", []):
        if "[doi]" in aid:
            doi = normalize_doi(aid.replace("[doi]", "").strip())
            break
    year = None
    for dp in fields.get("DP", []):
        match = re.search(r"\d{4}", dp)
        if match:
            year = int(match.group())
            break
    record = CitationRecord(
        record_id=make_record_id(doi, title),
        title=title,
        abstract=" ".join(fields.get("AB", [])),
        doi=doi,
        authors=fields.get("AU", []),
        keywords=fields.get("OT", []),
        mesh=[m.lstrip("*") for m in fields.get("MH", [])],
        year=year,
        sources={source},
    )
    pmid = fields.get("PMID", [])
    if pmid:
        record.source_ids[source] = pmid[0]
    return record


def _parse_nbib(text: str, source: str) -> tuple[list[CitationRecord], int]:
    records = []
    skipped = 0
    fields: dict[str, list[str]] = {}
    tag = None
    for line in text.splitlines() + [""]:
        if not line.strip():
            if fields:
                record = _finish_nbib(fields, source)
                if record:
                    records.append(record)
                else:
                    skipped += 1
            fields, tag = {}, None
            continue
        match = re.match(r"^([A-Z0-9]{2,4})\s*-\s(.*)$", line)
        if match:
            tag = match.group(1)
            fields.setdefault(tag, []).append(match.group(2).strip())
        elif line.startswith(" ") and tag and fields.get(tag):
            fields[tag][-1] += " " + line.strip()
    return records, skipped


_WOS_LIST_TAGS = {"AU", "AF", "DE", "ID"}


def _finish_wos(fields: dict, source: str) -> CitationRecord | None:
    title = " ".join(fields.get("TI", []))
    if not title:
        return None
    doi = normalize_doi(" ".join(fields.get("DI", []))) or None
    year = None
    py = " ".join(fields.get("PY", []))
    if re.fullmatch(r"\d{4}", py.strip()):
        year = int(py)

    def split_semis(tag):
        out = []
        for chunk in fields.get(tag, []):
            out.extend(p.strip() for p in chunk.split(";") if p.strip())
        return out

    record = CitationRecord(
        record_id=make_record_id(doi, title),
        title=title,
        abstract=" ".join(fields.get("AB", [])),
        doi=doi,
        authors=fields.get("AU", []),
        keywords=split_semis("DE") + split_semis("ID"),
        mesh=[],
        year=year,
        sources={source},
    )
    ut = " ".join(fields.get("UT", []))
    if ut:
        record.source_ids[source] = ut
    return record


def _parse_wos(text: str, source: str) -> tuple[list[CitationRecord], int]:
    records = []
    skipped = 0
    fields: dict[str, list[str]] = {}
    tag = None
    for line in text.splitlines():
        if line.startswith("ER"):
            if fields:
                record = _finish_wos(fields, source)
                if record:
                    records.append(record)
                else:
                    skipped += 1
            fields, tag = {}, None
            continue
        match = re.match(r"^([A-Z0-9]{2})\s(.*)$", line)
        if match and match.group(1) not in ("  ",):
            tag = match.group(1)
            fields.setdefault(tag, []).append(match.group(2).strip())
        elif line.startswith("   ") and tag:
            value = line.strip()
            if tag in _WOS_LIST_TAGS:
                fields[tag].append(value)
            elif fields.get(tag):
                fields[tag][-1] += " " + value
    return records, skipped


_CSV_MAPPINGS = {
    "ieee_csv": {"title": "Document Title", "abstract": "Abstract",
                 "authors": "Authors", "keywords": "Author Keywords",
                 "mesh": "IEEE Terms", "year": "Publication Year", "doi": "DOI"},
    "scopus_csv": {"title": "Title", "abstract": "Abstract",
                   "authors": "Authors", "keywords": "Author Keywords",
                   "mesh": "Index Keywords", "year": "Year", "doi": "DOI"},
    "embase_csv": {"title": "Title", "abstract": "Abstract",
                   "authors": "Author Names", "keywords": "Author Keywords",
                   "mesh": "Index Terms", "year": "Publication Year",
                   "doi": "DOI"},
}


def _split_list(value: str) -> list[str]:
    return [p.strip() for p in (value or "").split(";") if p.strip()]


def _parse_csv(text: str, fmt: str, source: str) -> tuple[list[CitationRecord], int]:
    mapping = _CSV_MAPPINGS[fmt]
    reader = csv.DictReader(io.StringIO(text))
    records = []
    skipped = 0
    for row in reader:
        try:
            title = (row.get(mapping["title"]) or "").strip()
            if not title:
                skipped += 1
                continue
            doi = normalize_doi(row.get(mapping["doi"]) or "")
            year_text = (row.get(mapping["year"]) or "").strip()
            year = int(year_text) if re.fullmatch(r"\d{4}", year_text) else None
            records.append(CitationRecord(
                record_id=make_record_id(doi, title),
                title=title,
                abstract=(row.get(mapping["abstract"]) or "").strip(),
                doi=doi,
                authors=_split_list(row.get(mapping["authors"]) or ""),
                keywords=_split_list(row.get(mapping["keywords"]) or ""),
                mesh=_split_list(row.get(mapping["mesh"]) or ""),
                year=year,
                sources={source},
            ))
        except Exception:
            skipped += 1
    return records, skipped


def parse_bib_file(data: bytes, fmt: str,
                   source: str | None = None) -> tuple[list[CitationRecord], int]:
    """Parse one bibliography file; returns (records, skipped row count)."""
    text = data.decode("utf-8-sig", errors="replace")
    if not text.strip():
        return [], 0
    source = source or {v: k for k, v in FORMATS.items()}.get(fmt, "unknown")
    if fmt == "nbib":
        return _parse_nbib(text, source)
    if fmt == "wos":
        return _parse_wos(text, source)
    if fmt in _CSV_MAPPINGS:
        return _parse_csv(text, fmt, source)
    raise ValueError(f"unknown bibliography format: {fmt!r}")


def infer_source_and_format(filename: str) -> tuple[str, str]:
    """Source and format from a filename like Pubmed2.nbib."""
    stem = Path(filename).name
    for source in SOURCES:
        if stem.lower().startswith(source.lower()):
            return source, FORMATS[source]
    raise ValueError(
        f"cannot infer source from {filename!r}; prefix the file name with "
        f"one of {sorted(SOURCES)}")


def parse_bib_path(path: Path) -> tuple[list[CitationRecord], int]:
    source, fmt = infer_source_and_format(path.name)
    return parse_bib_file(Path(path).read_bytes(), fmt, source)


def perform_search_session(ws: Workspace, session_name: str, query_name: str,
                           ast: Node, year: YearFilter | None = None,
                           actions: str = "both",
                           creds: ApiCredentials | None = None,
                           transports: dict[str, object] | None = None,
                           sleep=time.sleep
                           ) -> tuple[dict[str, list[CitationRecord]], dict[str, str]]:
    """Search per-source APIs and/or parse downloaded files for one query.

    Returns (records per source, error message per failed source) and
    updates the journal; one failing source never aborts the others.
    """
    if actions not in ("search", "parse", "both"):
        raise ValueError(f"unknown actions value: {actions!r}")
    creds = creds or ApiCredentials.from_env()
    transports = transports or {}
    out_dir = ws.records_dir(session_name, query_name)
    errors: dict[str, str] = {}

    if actions in ("search", "both"):
        for source, transport in sorted(transports.items()):
            try:
                search_source(source, ast, year, creds, transport, out_dir,
                              sleep=sleep)
            except SourceError as exc:
                errors[source] = str(exc)

    per_source: dict[str, list[CitationRecord]] = {}
    file_paths: dict[str, list[str]] = {}
    if out_dir.is_dir():
        for path in sorted(out_dir.iterdir()):
            try:
                source, fmt = infer_source_and_format(path.name)
            except ValueError:
                continue
            records, _ = parse_bib_file(path.read_bytes(), fmt, source)
            per_source.setdefault(source, []).extend(records)
            file_paths.setdefault(source, []).append(str(path))

    counts = {source: len(records) for source, records in per_source.items()}
    for source in errors:
        counts.setdefault(source, 0)
    year_text = "" if year is None else str(year)
    update_journal(ws.journal_path, session_name, query_name,
                   render_query(ast, "pubmed"), year_text, counts, file_paths)
    return per_source, errors
