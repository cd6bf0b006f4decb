"""Field preprocessing: tokenization, stopwords, POS filter, lemmatization.

Free-text fields (title, abstract) are lowercased and reduced to lemmas;
authors / keywords / MESH fields are split into logical units kept verbatim.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

__all__ = ["FIELDS", "FREE_TEXT_FIELDS", "preprocess_field", "lemmatize", "tokenize"]

FIELDS = ("title", "abstract", "authors", "keywords", "mesh")
FREE_TEXT_FIELDS = ("title", "abstract")

# POS tags dropped by the filter (kept: noun, verb, adj and untagged words)
_DROPPED_TAGS = {"adv", "det", "prep", "pron", "conj", "aux", "num", "interj"}

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def _data_lines(name: str) -> list[str]:
    text = resources.files("bayscreen.data").joinpath(name).read_text("utf-8")
    return [line for line in text.splitlines()
            if line.strip() and not line.startswith("#")]


@lru_cache(maxsize=1)
def _stopwords() -> frozenset[str]:
    return frozenset(_data_lines("stopwords.txt"))


@lru_cache(maxsize=1)
def _pos_lexicon() -> dict[str, str]:
    out = {}
    for line in _data_lines("pos_lexicon.tsv"):
        word, tag = line.split("\t")
        out[word] = tag
    return out


@lru_cache(maxsize=1)
def _lemma_exceptions() -> dict[str, str]:
    out = {}
    for line in _data_lines("lemma_exceptions.tsv"):
        word, lemma = line.split("\t")
        out[word] = lemma
    return out


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall((text or "").lower())


_DOUBLED_RE = re.compile(r"([b-df-hj-np-tv-z])\1$")


def _undouble(stem: str) -> str:
    # runn -> run, but keep -ll / -ss endings (fell, pass)
    if _DOUBLED_RE.search(stem) and not stem.endswith(("ll", "ss", "zz")):
        return stem[:-1]
    return stem


def lemmatize(word: str) -> str:
    """Lookup-table irregulars plus suffix stripping rules."""
    exceptions = _lemma_exceptions()
    if word in exceptions:
        return exceptions[word]
    if len(word) <= 3 or word.isdigit():
        return word
    if word.endswith("ies") and len(word) > 4:
        return word[:-3] + "y"
    if word.endswith(("ches", "shes", "xes", "zes", "sses")):
        return word[:-2]
    if word.endswith("s") and not word.endswith(("ss", "us", "is")):
        return word[:-1]
    if word.endswith("ied"):
        return word[:-3] + "y"
    if word.endswith("ing") and len(word) > 5:
        stem = _undouble(word[:-3])
        return stem if len(stem) >= 3 else word
    if word.endswith("ed") and not word.endswith("eed"):
        stem = _undouble(word[:-2])
        return stem if len(stem) >= 3 else word
    return word


def _split_units(text: str, extra_comma: bool) -> list[str]:
    if not text:
        return []
    parts = re.split(r"[;,]" if extra_comma else r";", text)
    return [p.strip() for p in parts if p.strip()]


def preprocess_field(text: str, field: str) -> list[str]:
    """Convert one record field into its list of terms."""
    if field not in FIELDS:
        raise ValueError(f"unknown field: {field!r}")
    if field in FREE_TEXT_FIELDS:
        stopwords = _stopwords()
        lexicon = _pos_lexicon()
        terms = []
        for token in tokenize(text):
            if token in stopwords:
                continue
            if lexicon.get(token) in _DROPPED_TAGS:
                continue
            lemma = lemmatize(token)
            if lemma in stopwords:
                continue
            terms.append(lemma)
        return terms
    if field == "authors":
        return _split_units(text, extra_comma=False)
    return _split_units(text, extra_comma=True)
