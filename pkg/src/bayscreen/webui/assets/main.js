import { getDensities, getPerformance, getStatus, getTrends, listSessions } from "./api.js";
import { densityChart, performanceTable, trendChart } from "./charts.js";
import { positiveQueryTerms } from "./highlight.js";
import { ReviewQueue } from "./queue.js";
import { RuleSheet } from "./rules.js";
const TABS = ["review", "rules", "dashboard"];
/** Single-page app: session picker, tab bar, and 1 Hz status polling.
 *  All state lives server-side; a page reload rebuilds the view from the
 *  API alone. */
class App {
    constructor(root) {
        this.root = root;
        this.session = "";
        this.tab = "review";
        this.queue = null;
        this.rules = null;
        this.wasIterating = false;
    }
    async start() {
        this.root.innerHTML = `
      <header>
        <h1>bayscreen</h1>
        <select data-testid="session-picker"></select>
        <nav>${TABS.map((t) => `<button data-tab="${t}">${t}</button>`).join("")}</nav>
        <span class="status" data-testid="status-line"></span>
      </header>
      <p class="error" data-testid="error" hidden></p>
      <main data-testid="panel"></main>`;
        const picker = this.picker();
        picker.addEventListener("change", () => {
            void this.selectSession(picker.value);
        });
        for (const button of this.root.querySelectorAll("nav button")) {
            button.addEventListener("click", () => {
                this.tab = button.getAttribute("data-tab");
                void this.showTab();
            });
        }
        await this.refreshSessions();
        this.pollTimer = window.setInterval(() => void this.poll(), 1000);
    }
    stop() {
        if (this.pollTimer !== undefined)
            window.clearInterval(this.pollTimer);
    }
    picker() {
        return this.root.querySelector('[data-testid="session-picker"]');
    }
    panel() {
        return this.root.querySelector('[data-testid="panel"]');
    }
    showError(message) {
        const box = this.root.querySelector('[data-testid="error"]');
        box.textContent = message;
        box.hidden = message === "";
    }
    async refreshSessions() {
        try {
            const { sessions } = await listSessions();
            const picker = this.picker();
            picker.innerHTML = sessions
                .map((s) => `<option value="${s.session}">${s.session} (${s.n_records})</option>`)
                .join("");
            if (!this.session && sessions.length > 0) {
                await this.selectSession(sessions[0].session);
            }
        }
        catch (err) {
            this.showError(err instanceof Error ? err.message : String(err));
        }
    }
    async selectSession(session) {
        this.session = session;
        this.queue = new ReviewQueue(this.panel(), session, {
            onIterateStarted: () => {
                this.wasIterating = true;
            },
            onError: (message) => this.showError(message),
        });
        this.rules = new RuleSheet(this.panel(), session, (message) => this.showError(message));
        await this.showTab();
    }
    async showTab() {
        this.showError("");
        if (!this.session)
            return;
        if (this.tab === "review" && this.queue) {
            await this.queue.load();
        }
        else if (this.tab === "rules" && this.rules) {
            await this.rules.load();
            const query = Object.values(this.rules.rendered)[0];
            if (query)
                this.queue?.setHighlightTerms(positiveQueryTerms(query));
        }
        else if (this.tab === "dashboard") {
            await this.renderDashboard();
        }
    }
    /** Dashboards render server-computed payloads only. */
    async renderDashboard() {
        const panel = this.panel();
        panel.innerHTML = `
      <section data-testid="densities"><h2>Predictive densities</h2></section>
      <section data-testid="trends"><h2>Labels per iteration</h2></section>
      <section data-testid="performance"><h2>Estimated performance</h2></section>`;
        try {
            const [dens, trends, perf] = await Promise.all([
                getDensities(this.session),
                getTrends(this.session),
                getPerformance(this.session).catch(() => ({
                    rows: [],
                    converged: true,
                })),
            ]);
            section(panel, "densities").insertAdjacentHTML("beforeend", densityChart(dens.densities));
            section(panel, "trends").insertAdjacentHTML("beforeend", trendChart(trends.iterations));
            section(panel, "performance").insertAdjacentHTML("beforeend", performanceTable(perf));
        }
        catch (err) {
            this.showError(err instanceof Error ? err.message : String(err));
        }
    }
    async poll() {
        if (!this.session)
            return;
        try {
            const status = await getStatus(this.session);
            const line = this.root.querySelector('[data-testid="status-line"]');
            line.textContent = status.iterating
                ? "iterating…"
                : `${status.n_pos} included / ${status.n_neg} excluded, ` +
                    `${status.needs_review} to review`;
            if (this.wasIterating && !status.iterating) {
                this.wasIterating = false;
                await this.showTab();
            }
        }
        catch {
            // transient polling failures are ignored; next tick retries
        }
    }
}
const mount = document.getElementById("app");
if (mount) {
    const app = new App(mount);
    void app.start();
    document.addEventListener("keydown", (event) => {
        const target = event.target;
        if (target && ["INPUT", "TEXTAREA", "SELECT"].includes(target.tagName)) {
            return;
        }
        void app["queue"]?.handleKey(event.key);
    });
}
function section(panel, id) {
    return panel.querySelector(`[data-testid="${id}"]`);
}
export { App };
