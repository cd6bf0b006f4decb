import { getQueue, postIterate, postLabel } from "./api.js";
import { highlightTerms } from "./highlight.js";
/** Keyboard-driven review queue: y/n labels the shown record and advances.
 *  Labels only ever leave the client from an explicit keypress or click. */
export class ReviewQueue {
    constructor(root, session, callbacks = {}) {
        this.root = root;
        this.session = session;
        this.callbacks = callbacks;
        this.records = [];
        this.index = 0;
        this.total = 0;
        this.labelled = 0;
        this.terms = [];
    }
    setHighlightTerms(terms) {
        this.terms = terms;
    }
    async load() {
        const page = await getQueue(this.session, 0, 200);
        this.records = page.records;
        this.total = page.total;
        this.index = 0;
        this.labelled = 0;
        this.render();
    }
    get queueEmpty() {
        return this.index >= this.records.length;
    }
    async handleKey(key) {
        if (key !== "y" && key !== "n")
            return;
        await this.label(key);
    }
    async label(value) {
        if (this.queueEmpty)
            return;
        const record = this.records[this.index];
        try {
            await postLabel(this.session, record.id, value);
        }
        catch (err) {
            this.callbacks.onError?.(err instanceof Error ? err.message : String(err));
            return;
        }
        this.labelled += 1;
        this.index += 1;
        this.render();
    }
    async iterate(override) {
        if (!this.queueEmpty && !override)
            return;
        try {
            await postIterate(this.session, !override);
            this.callbacks.onIterateStarted?.();
        }
        catch (err) {
            this.callbacks.onError?.(err instanceof Error ? err.message : String(err));
        }
    }
    render() {
        const record = this.queueEmpty ? null : this.records[this.index];
        const progress = `${this.labelled} labelled, ${this.total - this.labelled} remaining`;
        const card = record
            ? `
        <article class="record" data-record-id="${record.id}">
          <h2>${highlightTerms(record.title ?? "", this.terms)}</h2>
          <p class="meta">${record.authors ?? ""} ${record.year ?? ""}
            ${record.doi ?? ""}</p>
          <p class="abstract">${highlightTerms(record.abstract ?? "", this.terms)}</p>
          <p class="prediction">p(positive): ${fmt(record.pred_low)} /
            ${fmt(record.pred_med)} / ${fmt(record.pred_up)}</p>
          <p class="hint">press <kbd>y</kbd> to include,
            <kbd>n</kbd> to exclude</p>
        </article>`
            : `<p class="empty">Review queue empty.</p>`;
        this.root.innerHTML = `
      <p class="progress" data-testid="progress">${progress}</p>
      ${card}
      <div class="actions">
        <button data-testid="label-y" ${record ? "" : "disabled"}>
          include (y)</button>
        <button data-testid="label-n" ${record ? "" : "disabled"}>
          exclude (n)</button>
        <button data-testid="iterate" ${this.queueEmpty ? "" : "disabled"}>
          Run next iteration</button>
        <label><input type="checkbox" data-testid="override">
          iterate despite unreviewed records</label>
      </div>`;
        this.bind();
    }
    bind() {
        this.root
            .querySelector('[data-testid="label-y"]')
            ?.addEventListener("click", () => void this.label("y"));
        this.root
            .querySelector('[data-testid="label-n"]')
            ?.addEventListener("click", () => void this.label("n"));
        const iterate = this.root.querySelector('[data-testid="iterate"]');
        const override = this.root.querySelector('[data-testid="override"]');
        override?.addEventListener("change", () => {
            if (iterate instanceof HTMLButtonElement) {
                iterate.disabled = !this.queueEmpty && !override.checked;
            }
        });
        iterate?.addEventListener("click", () => void this.iterate(override?.checked ?? false));
    }
}
function fmt(value) {
    return value === null || value === undefined ? "-" : value.toFixed(3);
}
