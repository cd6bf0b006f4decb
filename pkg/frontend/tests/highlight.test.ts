import { describe, expect, it } from "vitest";
import { highlightTerms, positiveQueryTerms } from "../src/highlight";

describe("highlightTerms", () => {
  it("wraps whole-word matches in <mark>", () => {
    const out = highlightTerms("alpha beta alphabet", ["alpha"]);
    expect(out).toBe("<mark>alpha</mark> beta alphabet");
  });

  it("is case-insensitive and handles multiple terms", () => {
    const out = highlightTerms("Alpha and BETA", ["alpha", "beta"]);
    expect(out).toBe("<mark>Alpha</mark> and <mark>BETA</mark>");
  });

  it("escapes HTML before marking", () => {
    const out = highlightTerms("<b>alpha</b>", ["alpha"]);
    expect(out).toBe("&lt;b&gt;<mark>alpha</mark>&lt;/b&gt;");
  });

  it("returns escaped text unchanged when no terms", () => {
    expect(highlightTerms("a & b", [])).toBe("a &amp; b");
  });

  it("escapes regex metacharacters in terms", () => {
    expect(highlightTerms("c++ is fun", ["c++"])).toContain("c++");
  });
});

describe("positiveQueryTerms", () => {
  it("extracts bare words without operators", () => {
    expect(positiveQueryTerms("alpha AND (beta OR gamma)")).toEqual([
      "alpha",
      "beta",
      "gamma",
    ]);
  });

  it("splits quoted phrases into words", () => {
    expect(positiveQueryTerms('"patient transfer" OR unit')).toEqual([
      "patient",
      "transfer",
      "unit",
    ]);
  });

  it("drops negated terms", () => {
    expect(positiveQueryTerms("alpha AND NOT veterinary")).toEqual(["alpha"]);
    expect(positiveQueryTerms("alpha AND NOT (cow OR pig)")).toEqual([
      "alpha",
    ]);
  });

  it("deduplicates terms", () => {
    expect(positiveQueryTerms("alpha OR alpha")).toEqual(["alpha"]);
  });
});
