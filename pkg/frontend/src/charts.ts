import { DensityGroup, PerformancePayload, TrendRow } from "./api";

const WIDTH = 640;
const HEIGHT = 240;
const PAD = 36;

const GROUP_COLORS: Record<string, string> = {
  y: "#2a9d8f",
  n: "#e76f51",
  unk: "#e9c46a",
  check: "#9b5de5",
  unlabelled: "#8d99ae",
};

function scale(
  value: number,
  lo: number,
  hi: number,
  outLo: number,
  outHi: number,
): number {
  if (hi === lo) return (outLo + outHi) / 2;
  return outLo + ((value - lo) / (hi - lo)) * (outHi - outLo);
}

function polyline(xs: number[], ys: number[], yMax: number): string {
  return xs
    .map((x, i) => {
      const px = scale(x, 0, 1, PAD, WIDTH - PAD);
      const py = scale(ys[i], 0, yMax, HEIGHT - PAD, PAD);
      return `${px.toFixed(1)},${py.toFixed(1)}`;
    })
    .join(" ");
}

/** Density curves per label group, with the uncertainty zone shaded.
 *  The payload arrives fully computed; this function only draws it. */
export function densityChart(
  groups: Record<string, DensityGroup>,
  zone?: { lower: number; upper: number },
): string {
  const entries = Object.entries(groups).filter(([, g]) => g.x.length > 0);
  if (entries.length === 0) {
    return `<p class="empty">No predictions yet.</p>`;
  }
  const yMax = Math.max(...entries.flatMap(([, g]) => g.density)) || 1;
  const band = zone
    ? `<rect class="zone" x="${scale(zone.lower, 0, 1, PAD, WIDTH - PAD)}"
        y="${PAD}" width="${Math.max(
          0,
          scale(zone.upper, 0, 1, PAD, WIDTH - PAD) -
            scale(zone.lower, 0, 1, PAD, WIDTH - PAD),
        )}" height="${HEIGHT - 2 * PAD}" fill="#00000018"></rect>`
    : "";
  const lines = entries
    .map(
      ([label, g]) =>
        `<polyline data-label="${label}" fill="none"
          stroke="${GROUP_COLORS[label] ?? "#555"}" stroke-width="2"
          points="${polyline(g.x, g.density, yMax)}"></polyline>`,
    )
    .join("");
  const legend = entries
    .map(
      ([label]) =>
        `<span class="legend" style="color:${GROUP_COLORS[label] ?? "#555"}">
          ${label}</span>`,
    )
    .join(" ");
  return `
    <svg viewBox="0 0 ${WIDTH} ${HEIGHT}" role="img"
      aria-label="posterior predictive densities">
      ${band}${lines}
      <line x1="${PAD}" y1="${HEIGHT - PAD}" x2="${WIDTH - PAD}"
        y2="${HEIGHT - PAD}" stroke="#333"></line>
    </svg>
    <p>${legend}</p>`;
}

/** Positive / negative counts per iteration as grouped bars. */
export function trendChart(rows: TrendRow[]): string {
  if (rows.length === 0) {
    return `<p class="empty">No iterations yet.</p>`;
  }
  const maxCount = Math.max(...rows.map((r) => r.total_labelled)) || 1;
  const slot = (WIDTH - 2 * PAD) / rows.length;
  const bars = rows
    .map((row, i) => {
      const x = PAD + i * slot;
      const hPos = scale(row.n_pos, 0, maxCount, 0, HEIGHT - 2 * PAD);
      const hNeg = scale(row.n_neg, 0, maxCount, 0, HEIGHT - 2 * PAD);
      return `
      <g data-iteration="${row.iteration}">
        <rect x="${x + 2}" width="${slot / 2 - 3}" fill="#2a9d8f"
          y="${HEIGHT - PAD - hPos}" height="${hPos}"></rect>
        <rect x="${x + slot / 2}" width="${slot / 2 - 3}" fill="#e76f51"
          y="${HEIGHT - PAD - hNeg}" height="${hNeg}"></rect>
        <text x="${x + slot / 2}" y="${HEIGHT - PAD + 14}"
          text-anchor="middle" font-size="10">${row.iteration}</text>
      </g>`;
    })
    .join("");
  return `
    <svg viewBox="0 0 ${WIDTH} ${HEIGHT}" role="img"
      aria-label="labels per iteration">
      ${bars}
      <line x1="${PAD}" y1="${HEIGHT - PAD}" x2="${WIDTH - PAD}"
        y2="${HEIGHT - PAD}" stroke="#333"></line>
    </svg>
    <p><span class="legend" style="color:#2a9d8f">positive</span>
       <span class="legend" style="color:#e76f51">negative</span></p>`;
}

/** Indicator table straight from the performance payload. */
export function performanceTable(payload: PerformancePayload): string {
  if (payload.rows.length === 0) {
    return `<p class="empty">No performance estimate yet.</p>`;
  }
  const rows = payload.rows
    .map((row) => {
      const cells = Object.values(row)
        .map((v) => `<td>${String(v)}</td>`)
        .join("");
      return `<tr>${cells}</tr>`;
    })
    .join("");
  const warning = payload.converged
    ? ""
    : `<p class="warning">surrogate model did not converge;
        intervals unavailable</p>`;
  return `<table class="performance">${rows}</table>${warning}`;
}
