import { describe, expect, it } from "vitest";
import { densityChart, performanceTable, trendChart } from "../src/charts";

describe("densityChart", () => {
  it("draws one polyline per label group from the server payload", () => {
    const html = densityChart({
      y: { x: [0, 0.5, 1], density: [0.1, 2.0, 0.4] },
      n: { x: [0, 0.5, 1], density: [1.5, 0.3, 0.1] },
    });
    const doc = parse(html);
    const lines = doc.querySelectorAll("polyline");
    expect(lines).toHaveLength(2);
    expect(doc.querySelector('polyline[data-label="y"]')).not.toBeNull();
    expect(doc.querySelector('polyline[data-label="n"]')).not.toBeNull();
  });

  it("shades the uncertainty zone when provided", () => {
    const html = densityChart(
      { y: { x: [0, 1], density: [1, 1] } },
      { lower: 0.3, upper: 0.7 },
    );
    expect(parse(html).querySelector("rect.zone")).not.toBeNull();
  });

  it("shows an empty state without data", () => {
    expect(densityChart({})).toContain("No predictions yet");
    expect(densityChart({ y: { x: [], density: [] } })).toContain(
      "No predictions yet",
    );
  });
});

describe("trendChart", () => {
  it("draws two bars per iteration", () => {
    const html = trendChart([
      {
        iteration: 1,
        timestamp: "t1",
        n_pos: 5,
        n_neg: 20,
        total_labelled: 25,
        pct_labelled: 0.25,
      },
      {
        iteration: 2,
        timestamp: "t2",
        n_pos: 8,
        n_neg: 40,
        total_labelled: 48,
        pct_labelled: 0.48,
      },
    ]);
    const doc = parse(html);
    const groups = doc.querySelectorAll("g[data-iteration]");
    expect(groups).toHaveLength(2);
    expect(groups[1].querySelectorAll("rect")).toHaveLength(2);
  });

  it("shows an empty state without iterations", () => {
    expect(trendChart([])).toContain("No iterations yet");
  });
});

describe("performanceTable", () => {
  it("renders rows verbatim from the payload", () => {
    const html = performanceTable({
      rows: [
        { indicator: "sensitivity", median: "0.97", q05: "0.91", q95: "0.99" },
      ],
      converged: true,
    });
    const doc = parse(html);
    const cells = [...doc.querySelectorAll("td")].map((c) => c.textContent);
    expect(cells).toEqual(["sensitivity", "0.97", "0.91", "0.99"]);
    expect(html).not.toContain("did not converge");
  });

  it("warns when the surrogate did not converge", () => {
    const html = performanceTable({
      rows: [{ indicator: "sensitivity", median: "0.97" }],
      converged: false,
    });
    expect(html).toContain("did not converge");
  });

  it("shows an empty state without an estimate", () => {
    expect(performanceTable({ rows: [], converged: true })).toContain(
      "No performance estimate yet",
    );
  });
});

function parse(html: string): HTMLElement {
  const el = document.createElement("div");
  el.innerHTML = html;
  return el;
}
