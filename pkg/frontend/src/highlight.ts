/** Wrap occurrences of query terms in <mark> elements; purely visual. */

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function escapeRegExp(text: string): string {
  return text.replace(/[.*+?^${}()|[\]\\]/g, "\\$&");
}

export function highlightTerms(text: string, terms: string[]): string {
  const safe = escapeHtml(text);
  const words = terms.map((t) => t.trim()).filter((t) => t.length > 0);
  if (words.length === 0) return safe;
  const pattern = new RegExp(
    `\\b(${words.map(escapeRegExp).join("|")})\\b`,
    "gi",
  );
  return safe.replace(pattern, "<mark>$1</mark>");
}

/** Positive (non-negated) bare words of a boolean query, for highlighting. */
export function positiveQueryTerms(query: string): string[] {
  const withoutNegated = query.replace(/NOT\s*\([^)]*\)|NOT\s+\S+/g, " ");
  const tokens = withoutNegated.match(/"[^"]+"|[A-Za-z][\w-]*/g) ?? [];
  const terms: string[] = [];
  for (const token of tokens) {
    if (/^(AND|OR|NOT)$/i.test(token)) continue;
    const words = token.replace(/"/g, "").split(/\s+/);
    for (const word of words) {
      if (word && !terms.includes(word)) terms.push(word);
    }
  }
  return terms;
}
