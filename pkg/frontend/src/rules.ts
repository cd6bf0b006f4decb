import { generateRules, getRules, postSelection, RuleRow } from "./api";

export interface RuleState {
  rule: RuleRow;
  selected: boolean;
  edited: string;
  groupExcluded: boolean;
}

/** Grouped rule table with per-rule selection, inline editing and
 *  whole-group exclusion; the final query always comes from the server. */
export class RuleSheet {
  states: RuleState[] = [];
  rendered: Record<string, string> = {};
  private excludedGroups = new Set<number>();

  constructor(
    private root: HTMLElement,
    private session: string,
    private onError: (message: string) => void = () => undefined,
  ) {}

  async load(generate = false): Promise<void> {
    try {
      const payload = generate
        ? await generateRules(this.session)
        : await getRules(this.session);
      this.states = payload.rules.map((rule) => ({
        rule,
        selected: String(rule.selected_rule).toUpperCase() === "TRUE",
        edited: rule.edited_rule ?? "",
        groupExcluded: false,
      }));
      this.excludedGroups.clear();
      this.render();
    } catch (err) {
      this.onError(err instanceof Error ? err.message : String(err));
    }
  }

  toggleRule(ruleText: string): void {
    const state = this.states.find((s) => s.rule.rule === ruleText);
    if (state) state.selected = !state.selected;
    this.render();
  }

  setEdited(ruleText: string, edited: string): void {
    const state = this.states.find((s) => s.rule.rule === ruleText);
    if (state) state.edited = edited;
  }

  excludeGroup(group: number, excluded: boolean): void {
    if (excluded) this.excludedGroups.add(group);
    else this.excludedGroups.delete(group);
    for (const state of this.states) {
      if (state.rule.group === group) {
        state.groupExcluded = excluded;
        if (excluded) state.selected = false;
      }
    }
    this.render();
  }

  /** Rules that will be posted: selected and not in an excluded group. */
  selectionPayload(): { selected: string[]; edited: Record<string, string> } {
    const selected: string[] = [];
    const edited: Record<string, string> = {};
    for (const state of this.states) {
      if (state.groupExcluded || !state.selected) continue;
      selected.push(state.rule.rule);
      if (state.edited.trim()) edited[state.rule.rule] = state.edited.trim();
    }
    return { selected, edited };
  }

  async apply(): Promise<void> {
    const { selected, edited } = this.selectionPayload();
    try {
      const result = await postSelection(this.session, selected, edited);
      this.rendered = result.rendered;
      this.render();
    } catch (err) {
      this.onError(err instanceof Error ? err.message : String(err));
    }
  }

  render(): void {
    const groups = new Map<number, RuleState[]>();
    for (const state of this.states) {
      const list = groups.get(state.rule.group) ?? [];
      list.push(state);
      groups.set(state.rule.group, list);
    }
    const sections = [...groups.entries()]
      .sort((a, b) => a[0] - b[0])
      .map(([group, rows]) => {
        const excluded = this.excludedGroups.has(group);
        const body = rows
          .map(
            (state) => `
          <tr data-rule="${escapeAttr(state.rule.rule)}">
            <td><input type="checkbox" class="select"
              ${state.selected ? "checked" : ""}
              ${excluded ? "disabled" : ""}></td>
            <td class="rule-text">${escapeHtml(state.rule.rule)}</td>
            <td>${state.rule.n_pos}</td>
            <td>${state.rule.n_neg}</td>
            <td>${state.rule.cumulative_pos}</td>
            <td><input type="text" class="edit"
              value="${escapeAttr(state.edited)}"
              ${excluded ? "disabled" : ""}></td>
          </tr>`,
          )
          .join("");
        return `
        <tbody data-group="${group}">
          <tr class="group-row">
            <th colspan="6">group ${group}
              <label><input type="checkbox" class="exclude-group"
                ${excluded ? "checked" : ""}> exclude group</label></th>
          </tr>
          ${body}
        </tbody>`;
      })
      .join("");
    const preview = Object.entries(this.rendered)
      .map(
        ([dialect, query]) =>
          `<dt>${escapeHtml(dialect)}</dt><dd data-dialect="${escapeAttr(
            dialect,
          )}">${escapeHtml(query)}</dd>`,
      )
      .join("");
    this.root.innerHTML = `
      <div class="rule-actions">
        <button data-testid="generate">Generate rules</button>
        <button data-testid="apply">Apply selection</button>
      </div>
      <table class="rules">
        <thead><tr><th></th><th>rule</th><th>pos</th><th>neg</th>
          <th>cum. pos</th><th>edited</th></tr></thead>
        ${sections || "<tbody><tr><td colspan='6'>no rules yet</td></tr></tbody>"}
      </table>
      <dl class="query-preview" data-testid="preview">${preview}</dl>`;
    this.bind();
  }

  private bind(): void {
    this.root
      .querySelector('[data-testid="generate"]')
      ?.addEventListener("click", () => void this.load(true));
    this.root
      .querySelector('[data-testid="apply"]')
      ?.addEventListener("click", () => void this.apply());
    for (const row of this.root.querySelectorAll("tr[data-rule]")) {
      const rule = row.getAttribute("data-rule") ?? "";
      row
        .querySelector("input.select")
        ?.addEventListener("change", () => this.toggleRule(rule));
      row.querySelector("input.edit")?.addEventListener("input", (event) => {
        this.setEdited(rule, (event.target as HTMLInputElement).value);
      });
    }
    for (const tbody of this.root.querySelectorAll("tbody[data-group]")) {
      const group = Number(tbody.getAttribute("data-group"));
      tbody
        .querySelector("input.exclude-group")
        ?.addEventListener("change", (event) => {
          this.excludeGroup(group, (event.target as HTMLInputElement).checked);
        });
    }
  }
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;");
}

function escapeAttr(text: string): string {
  return escapeHtml(text).replace(/"/g, "&quot;");
}
