import { getQueue, postIterate, postLabel, QueueRecord } from "./api";
import { highlightTerms } from "./highlight";

export interface QueueCallbacks {
  onIterateStarted?: () => void;
  onError?: (message: string) => void;
}

/** Keyboard-driven review queue: y/n labels the shown record and advances.
 *  Labels only ever leave the client from an explicit keypress or click. */
export class ReviewQueue {
  private records: QueueRecord[] = [];
  private index = 0;
  private total = 0;
  private labelled = 0;
  private terms: string[] = [];

  constructor(
    private root: HTMLElement,
    private session: string,
    private callbacks: QueueCallbacks = {},
  ) {}

  setHighlightTerms(terms: string[]): void {
    this.terms = terms;
  }

  async load(): Promise<void> {
    const page = await getQueue(this.session, 0, 200);
    this.records = page.records;
    this.total = page.total;
    this.index = 0;
    this.labelled = 0;
    this.render();
  }

  get queueEmpty(): boolean {
    return this.index >= this.records.length;
  }

  async handleKey(key: string): Promise<void> {
    if (key !== "y" && key !== "n") return;
    await this.label(key);
  }

  async label(value: "y" | "n"): Promise<void> {
    if (this.queueEmpty) return;
    const record = this.records[this.index];
    try {
      await postLabel(this.session, record.id, value);
    } catch (err) {
      this.callbacks.onError?.(err instanceof Error ? err.message : String(err));
      return;
    }
    this.labelled += 1;
    this.index += 1;
    this.render();
  }

  async iterate(override: boolean): Promise<void> {
    if (!this.queueEmpty && !override) return;
    try {
      await postIterate(this.session, !override);
      this.callbacks.onIterateStarted?.();
    } catch (err) {
      this.callbacks.onError?.(err instanceof Error ? err.message : String(err));
    }
  }

  render(): void {
    const record = this.queueEmpty ? null : this.records[this.index];
    const progress = `${this.labelled} labelled, ${
      this.total - this.labelled
    } remaining`;
    const card = record
      ? `
        <article class="record" data-record-id="${record.id}">
          <h2>${highlightTerms(record.title ?? "", this.terms)}</h2>
          <p class="meta">${record.authors ?? ""} ${record.year ?? ""}
            ${record.doi ?? ""}</p>
          <p class="abstract">${highlightTerms(
            record.abstract ?? "",
            this.terms,
          )}</p>
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

  private bind(): void {
    this.root
      .querySelector('[data-testid="label-y"]')
      ?.addEventListener("click", () => void this.label("y"));
    this.root
      .querySelector('[data-testid="label-n"]')
      ?.addEventListener("click", () => void this.label("n"));
    const iterate = this.root.querySelector('[data-testid="iterate"]');
    const override = this.root.querySelector(
      '[data-testid="override"]',
    ) as HTMLInputElement | null;
    override?.addEventListener("change", () => {
      if (iterate instanceof HTMLButtonElement) {
        iterate.disabled = !this.queueEmpty && !override.checked;
      }
    });
    iterate?.addEventListener("click", () =>
      void this.iterate(override?.checked ?? false),
    );
  }
}

function fmt(value: number | null): string {
  return value === null || value === undefined ? "-" : value.toFixed(3);
}
