"""Boolean rule mining from the document-term matrix and posterior draws.

Partition trees map term presence to sampled posterior probability columns;
positive leaves become candidate rules, which are hardened with NOT
conditions, grouped for human selection, simplified, and rendered as a new
search query.  The tree learner is generic and reused by the tuning module.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .dtm import Dtm
from .queries import And, Node, Not, Or, Phrase, Term, render_query

__all__ = [
    "CartConfig", "CartNode", "fit_cart", "Condition", "Rule",
    "collapse_terms", "extract_rules", "extend_with_negatives",
    "build_selection_set", "simplify_ruleset", "rules_to_query",
    "format_rule", "parse_rule", "SHEET_COLUMNS",
]


# ---------------------------------------------------------------------------
# partition tree (greedy variance reduction on binary features)

@dataclass
class CartConfig:
    max_depth: int = 6
    min_leaf: int = 5
    min_improvement: float = 1e-7   # fraction of the root sum of squared error


@dataclass
class CartNode:
    mean: float
    count: int
    feature: int = -1               # -1 marks a leaf; rows with value 1 go right
    left: "CartNode | None" = None
    right: "CartNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


def fit_cart(X: np.ndarray, y: np.ndarray,
             config: CartConfig | None = None) -> CartNode:
    """Greedy regression tree; ties broken by lowest feature index."""
    config = config or CartConfig()
    X = np.asarray(X, dtype=bool)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise ValueError("empty design matrix")
    if X.shape[0] != len(y):
        raise ValueError("X and y must align")
    total_sse = float(((y - y.mean()) ** 2).sum())
    threshold = config.min_improvement * total_sse

    def build(idx: np.ndarray, depth: int) -> CartNode:
        yv = y[idx]
        node = CartNode(mean=float(yv.mean()), count=len(idx))
        if depth >= config.max_depth or len(idx) < 2 * config.min_leaf:
            return node
        sub = X[idx]
        n = len(idx)
        s_total = yv.sum()
        n1 = sub.sum(axis=0)
        s1 = yv @ sub
        n0 = n - n1
        valid = (n1 >= config.min_leaf) & (n0 >= config.min_leaf)
        with np.errstate(divide="ignore", invalid="ignore"):
            reduction = np.where(
                valid, n * (s1 - n1 * s_total / n) ** 2 / (n1 * n0), -np.inf)
        best = int(np.argmax(reduction))
        if not valid[best] or reduction[best] < max(threshold, 1e-12):
            return node
        node.feature = best
        right_mask = sub[:, best]
        node.left = build(idx[~right_mask], depth + 1)
        node.right = build(idx[right_mask], depth + 1)
        return node

    return build(np.arange(len(y)), 0)


# ---------------------------------------------------------------------------
# rules

@dataclass(frozen=True)
class Condition:
    term: str
    negated: bool = False


@dataclass
class Rule:
    conditions: tuple[Condition, ...]
    n_pos: int = 0
    n_neg: int = 0

    def key(self) -> frozenset:
        return frozenset(self.conditions)


@dataclass
class TermSpace:
    """Field-collapsed binary term presence used for rule evaluation."""
    terms: list[str]
    matrix: np.ndarray              # bool, records x terms
    importance: np.ndarray          # per-term inclusion rate (max over fields)
    index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.terms)}


def collapse_terms(dtm: Dtm, importance: np.ndarray | None = None) -> TermSpace:
    """Drop count columns and merge per-field duplicates of the same term."""
    if importance is None:
        importance = np.zeros(dtm.n_features)
    grouped: dict[str, list[int]] = {}
    for j, (name, kind) in enumerate(zip(dtm.feature_names, dtm.feature_kinds)):
        if kind != "term":
            continue
        term = name.split(":", 1)[1]
        grouped.setdefault(term, []).append(j)
    terms = sorted(grouped)
    matrix = np.zeros((dtm.n_records, len(terms)), dtype=bool)
    scores = np.zeros(len(terms))
    for i, term in enumerate(terms):
        cols = grouped[term]
        matrix[:, i] = (np.nan_to_num(dtm.matrix[:, cols], nan=0.0) > 0).any(axis=1)
        scores[i] = max(importance[c] for c in cols)
    return TermSpace(terms, matrix, scores)


def rule_mask(rule: Rule, space: TermSpace) -> np.ndarray:
    mask = np.ones(space.matrix.shape[0], dtype=bool)
    for cond in rule.conditions:
        if cond.term not in space.index:
            raise ValueError(f"unknown term in rule: {cond.term!r}")
        col = space.matrix[:, space.index[cond.term]]
        mask &= ~col if cond.negated else col
    return mask


def _count_rule(rule: Rule, space: TermSpace, labels) -> Rule:
    labels = np.asarray(labels, dtype=object)
    mask = rule_mask(rule, space)
    rule.n_pos = int((mask & (labels == "y")).sum())
    rule.n_neg = int((mask & (labels == "n")).sum())
    return rule


def _harvest_paths(node: CartNode, space: TermSpace,
                   path: tuple[Condition, ...], out: list[tuple[Condition, ...]]):
    if node.is_leaf:
        if node.mean > 0.5 and path:
            out.append(path)
        return
    term = space.terms[node.feature]
    _harvest_paths(node.left, space, path + (Condition(term, True),), out)
    _harvest_paths(node.right, space, path + (Condition(term, False),), out)


def extract_rules(dtm: Dtm, draws: np.ndarray, labels, importance: np.ndarray,
                  n_samples: int = 800, importance_cutoff: float = 10.0,
                  seed: int = 0, cart_config: CartConfig | None = None
                  ) -> tuple[list[Rule], TermSpace]:
    """Fit one tree per sampled posterior draw column and harvest the paths
    to positive leaves as candidate rules."""
    if draws is None or draws.size == 0:
        raise ValueError(
            "no persisted posterior draws; rerun a screening iteration "
            "with sample saving enabled")
    space = collapse_terms(dtm, importance)
    keep = space.importance >= importance_cutoff
    space = TermSpace([t for t, k in zip(space.terms, keep) if k],
                      space.matrix[:, keep], space.importance[keep])
    if not space.terms:
        return [], space
    rng = np.random.default_rng(seed)
    n_cols = draws.shape[1]
    cols = rng.choice(n_cols, size=n_samples, replace=n_samples > n_cols)
    seen: set[frozenset] = set()
    rules: list[Rule] = []
    for col in cols:
        tree = fit_cart(space.matrix, draws[:, col], cart_config)
        paths: list[tuple[Condition, ...]] = []
        _harvest_paths(tree, space, (), paths)
        for path in paths:
            rule = Rule(path)
            if not any(not c.negated for c in path):
                continue
            if rule.key() in seen:
                continue
            seen.add(rule.key())
            rules.append(_count_rule(rule, space, labels))
    return rules, space


def extend_with_negatives(rule: Rule, space: TermSpace, labels) -> Rule:
    """Iteratively add NOT conditions that remove matched negatives without
    touching any matched positive."""
    labels = np.asarray(labels, dtype=object)
    pos = labels == "y"
    neg = labels == "n"
    labelled = pos | neg
    conditions = list(rule.conditions)
    used = {c.term for c in conditions}
    while True:
        mask = rule_mask(Rule(tuple(conditions)), space)
        matched_pos = mask & pos
        matched_neg = mask & neg
        if not matched_neg.any():
            break
        best = None
        for i, term in enumerate(space.terms):
            if term in used:
                continue
            col = space.matrix[:, i]
            if (matched_pos & col).any():
                continue
            removed = int((matched_neg & col).sum())
            if removed == 0:
                continue
            total = int((col & labelled).sum())
            cand = (-removed, total, term)
            if best is None or cand < best:
                best = cand
        if best is None:
            break
        conditions.append(Condition(best[2], True))
        used.add(best[2])
    return _count_rule(Rule(tuple(conditions)), space, labels)


SHEET_COLUMNS = ["group", "rule", "n_pos", "n_neg", "cumulative_pos",
                 "selected_rule", "edited_rule"]


def build_selection_set(rules: list[Rule], space: TermSpace,
                        labels) -> pd.DataFrame:
    """Selection sheet: rules sorted by n_pos - n_neg, grouped at every
    strict increase of cumulative unique positives."""
    labels = np.asarray(labels, dtype=object)
    pos = labels == "y"
    rules = [_count_rule(r, space, labels) for r in rules]
    order = sorted(range(len(rules)),
                   key=lambda i: (-(rules[i].n_pos - rules[i].n_neg),
                                  format_rule(rules[i])))
    covered = np.zeros(len(labels), dtype=bool)
    cumulative = 0
    group = 0
    assigned: list[tuple[int, int, Rule, int]] = []
    for i in order:
        rule = rules[i]
        new_cov = covered | (rule_mask(rule, space) & pos)
        new_cum = int(new_cov.sum())
        if new_cum > cumulative:
            group += 1
        covered, cumulative = new_cov, new_cum
        assigned.append((group, cumulative, rule,
                         rule.n_pos + rule.n_neg))
    rows = []
    for g in sorted({a[0] for a in assigned}):
        members = [a for a in assigned if a[0] == g]
        members.sort(key=lambda a: (a[3], format_rule(a[2])))
        for grp, cum, rule, _ in members:
            rows.append({"group": grp, "rule": format_rule(rule),
                         "n_pos": rule.n_pos, "n_neg": rule.n_neg,
                         "cumulative_pos": cum, "selected_rule": False,
                         "edited_rule": ""})
    return pd.DataFrame(rows, columns=SHEET_COLUMNS)


def _union_matches(rules: list[Rule], space: TermSpace) -> np.ndarray:
    union = np.zeros(space.matrix.shape[0], dtype=bool)
    for rule in rules:
        union |= rule_mask(rule, space)
    return union


def simplify_ruleset(rules: list[Rule], space: TermSpace, labels) -> list[Rule]:
    """Drop rules whose positives other rules already cover, then drop
    conditions whose removal leaves coverage unchanged; iterate to fixpoint."""
    labels = np.asarray(labels, dtype=object)
    pos = labels == "y"
    neg = labels == "n"
    rules = [Rule(r.conditions) for r in rules]

    def coverage(rs):
        union = _union_matches(rs, space)
        return union & pos, union & neg

    changed = True
    while changed:
        changed = False
        # subset-drop pass
        i = 0
        while i < len(rules):
            others = rules[:i] + rules[i + 1:]
            if others:
                mine = rule_mask(rules[i], space) & pos
                if not (mine & ~(_union_matches(others, space) & pos)).any():
                    rules.pop(i)
                    changed = True
                    continue
            i += 1
        # condition-drop pass
        base_pos, base_neg = coverage(rules)
        for i, rule in enumerate(rules):
            conds = list(rule.conditions)
            j = 0
            while j < len(conds):
                if len(conds) == 1 and not conds[0].negated:
                    break
                trial = conds[:j] + conds[j + 1:]
                if not any(not c.negated for c in trial):
                    j += 1
                    continue
                candidate = rules[:i] + [Rule(tuple(trial))] + rules[i + 1:]
                new_pos, new_neg = coverage(candidate)
                if (np.array_equal(new_pos, base_pos)
                        and not (new_neg & ~base_neg).any()):
                    conds = trial
                    rules[i] = Rule(tuple(conds))
                    base_pos, base_neg = new_pos, new_neg
                    changed = True
                else:
                    j += 1
    return [_count_rule(Rule(r.conditions), space, labels) for r in rules]


# ---------------------------------------------------------------------------
# rendering and the sheet text format

def _term_ast(term: str) -> Node:
    if " | " in term:
        # merged groups may repeat a word across fields; render it once
        parts = list(dict.fromkeys(term.split(" | ")))
        if len(parts) == 1:
            return _term_ast(parts[0])
        return Or(tuple(_term_ast(p) for p in parts))
    if " & " in term:
        return And(tuple(_term_ast(p) for p in term.split(" & ")))
    words = term.split()
    if len(words) > 1:
        return Phrase(tuple(words))
    return Term(term)


def rules_to_query(rules: list[Rule]) -> Node:
    """OR of parenthesized conjunctions; NOT for negative conditions."""
    if not rules:
        raise ValueError("no rules to render")
    rule_asts = []
    for rule in rules:
        # positive conditions first: every dialect can then render the NOTs
        ordered = sorted(rule.conditions, key=lambda c: c.negated)
        parts: list[Node] = []
        for cond in ordered:
            ast = _term_ast(cond.term)
            parts.append(Not(ast) if cond.negated else ast)
        rule_asts.append(parts[0] if len(parts) == 1 else And(tuple(parts)))
    return rule_asts[0] if len(rule_asts) == 1 else Or(tuple(rule_asts))


_NEEDS_QUOTES = re.compile(r"[^A-Za-z0-9_-]")


def _format_term(term: str) -> str:
    return f'"{term}"' if _NEEDS_QUOTES.search(term) else term


def format_rule(rule: Rule) -> str:
    parts = []
    for cond in rule.conditions:
        text = _format_term(cond.term)
        parts.append(f"NOT {text}" if cond.negated else text)
    return " AND ".join(parts)


def parse_rule(text: str) -> Rule:
    """Inverse of format_rule; used to re-validate edited sheet rows."""
    conditions = []
    pattern = re.compile(r'\s*(NOT\s+)?("([^"]*)"|\S+)\s*(AND\s+|$)')
    pos = 0
    text = text.strip()
    while pos < len(text):
        match = pattern.match(text, pos)
        if not match:
            raise ValueError(f"cannot parse rule: {text!r}")
        negated = bool(match.group(1))
        term = match.group(3) if match.group(3) is not None else match.group(2)
        conditions.append(Condition(term, negated))
        pos = match.end()
    if not conditions:
        raise ValueError("empty rule")
    return Rule(tuple(conditions))


def sheet_to_rules(sheet: pd.DataFrame) -> list[Rule]:
    """Selected (possibly edited) rows of a selection sheet, in sheet order."""
    rules = []
    for _, row in sheet.iterrows():
        selected = str(row.get("selected_rule", "")).strip().lower()
        if selected not in ("true", "1", "yes"):
            continue
        text = str(row.get("edited_rule", "") or "").strip()
        if not text or text == "nan":
            text = str(row["rule"])
        rules.append(parse_rule(text))
    return rules
