import { beforeEach, describe, expect, it, vi } from "vitest";
import { RuleSheet } from "../src/rules";

const RULES = [
  {
    group: 1,
    rule: "alpha",
    n_pos: 30,
    n_neg: 2,
    cumulative_pos: 30,
    selected_rule: "TRUE",
    edited_rule: "",
  },
  {
    group: 1,
    rule: "beta",
    n_pos: 8,
    n_neg: 1,
    cumulative_pos: 38,
    selected_rule: "FALSE",
    edited_rule: "",
  },
  {
    group: 2,
    rule: "gamma AND delta",
    n_pos: 2,
    n_neg: 0,
    cumulative_pos: 40,
    selected_rule: "TRUE",
    edited_rule: "",
  },
];

function mockApi(): ReturnType<typeof vi.fn> {
  const fetchMock = vi.fn((url: string, init?: RequestInit) => {
    const respond = (body: unknown, status = 200) =>
      Promise.resolve({
        ok: status < 400,
        status,
        statusText: String(status),
        json: () => Promise.resolve(body),
      });
    if (url.endsWith("/rules/selection")) {
      const { selected } = JSON.parse(String(init?.body));
      return respond({
        rendered: {
          pubmed: selected.join(" OR "),
          scopus: `TITLE-ABS-KEY(${selected.join(" OR ")})`,
        },
      });
    }
    if (url.endsWith("/rules")) {
      return respond({ rules: RULES });
    }
    return respond({}, 404);
  });
  vi.stubGlobal("fetch", fetchMock);
  return fetchMock;
}

describe("RuleSheet", () => {
  let root: HTMLElement;
  let fetchMock: ReturnType<typeof vi.fn>;

  beforeEach(() => {
    document.body.innerHTML = '<div id="root"></div>';
    root = document.getElementById("root") as HTMLElement;
    fetchMock = mockApi();
  });

  it("renders rules grouped with server-side selection state", async () => {
    const sheet = new RuleSheet(root, "demo");
    await sheet.load();
    expect(root.querySelectorAll("tbody[data-group]")).toHaveLength(2);
    const selected = sheet.states.filter((s) => s.selected).map((s) => s.rule.rule);
    expect(selected).toEqual(["alpha", "gamma AND delta"]);
  });

  it("toggling a rule changes the selection payload", async () => {
    const sheet = new RuleSheet(root, "demo");
    await sheet.load();
    sheet.toggleRule("beta");
    expect(sheet.selectionPayload().selected).toEqual([
      "alpha",
      "beta",
      "gamma AND delta",
    ]);
    sheet.toggleRule("alpha");
    expect(sheet.selectionPayload().selected).toEqual([
      "beta",
      "gamma AND delta",
    ]);
  });

  it("excluding a group removes its rules from the payload", async () => {
    const sheet = new RuleSheet(root, "demo");
    await sheet.load();
    sheet.excludeGroup(2, true);
    expect(sheet.selectionPayload().selected).toEqual(["alpha"]);
    sheet.excludeGroup(2, false);
    // exclusion deselects; re-including does not silently re-select
    expect(sheet.selectionPayload().selected).toEqual(["alpha"]);
  });

  it("edited rules are sent alongside the selection", async () => {
    const sheet = new RuleSheet(root, "demo");
    await sheet.load();
    sheet.setEdited("alpha", " alpha* ");
    expect(sheet.selectionPayload().edited).toEqual({ alpha: "alpha*" });
  });

  it("apply posts the selection and shows the rendered queries", async () => {
    const sheet = new RuleSheet(root, "demo");
    await sheet.load();
    await sheet.apply();
    const call = fetchMock.mock.calls.find(([u]) =>
      u.endsWith("/rules/selection"),
    );
    expect(JSON.parse(String(call?.[1]?.body))).toEqual({
      selected: ["alpha", "gamma AND delta"],
      edited: {},
    });
    const preview = root.querySelector('[data-testid="preview"]');
    expect(
      preview?.querySelector('[data-dialect="pubmed"]')?.textContent,
    ).toBe("alpha OR gamma AND delta");
    expect(
      preview?.querySelector('[data-dialect="scopus"]')?.textContent,
    ).toContain("TITLE-ABS-KEY");
  });

  it("toggling selection round-trips to an updated query preview", async () => {
    const sheet = new RuleSheet(root, "demo");
    await sheet.load();
    sheet.toggleRule("gamma AND delta");
    await sheet.apply();
    const preview = root.querySelector('[data-testid="preview"]');
    expect(
      preview?.querySelector('[data-dialect="pubmed"]')?.textContent,
    ).toBe("alpha");
  });

  it("checkbox interaction in the DOM drives the model", async () => {
    const sheet = new RuleSheet(root, "demo");
    await sheet.load();
    const row = root.querySelector('tr[data-rule="beta"]');
    const box = row?.querySelector("input.select") as HTMLInputElement;
    box.click();
    expect(
      sheet.states.find((s) => s.rule.rule === "beta")?.selected,
    ).toBe(true);
  });

  it("load(generate) POSTs to the rules endpoint", async () => {
    const sheet = new RuleSheet(root, "demo");
    await sheet.load(true);
    const call = fetchMock.mock.calls.find(([u]) => u.endsWith("/rules"));
    expect(call?.[1]?.method).toBe("POST");
  });

  it("errors surface through the callback", async () => {
    fetchMock.mockResolvedValue({
      ok: false,
      status: 409,
      statusText: "409",
      json: () => Promise.resolve({ detail: "no iterations yet" }),
    });
    const onError = vi.fn();
    const sheet = new RuleSheet(root, "demo", onError);
    await sheet.load();
    expect(onError).toHaveBeenCalledWith("no iterations yet");
  });
});
