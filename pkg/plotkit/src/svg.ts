/**
 * Minimal deterministic SVG chart builder: linear scales, axes with tick
 * labels, polyline series, shaded bands, bars with error whiskers, and a
 * legend. No DOM, no dependencies; output is a plain SVG string.
 */

export const PALETTE = [
  "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
  "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f",
];

const WIDTH = 640;
const HEIGHT = 420;
const MARGIN = { top: 44, right: 150, bottom: 52, left: 64 };

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function niceTicks(lo: number, hi: number, count = 5): number[] {
  if (!(hi > lo)) {
    const pad = Math.abs(lo) > 0 ? Math.abs(lo) * 0.5 : 1;
    lo -= pad;
    hi += pad;
  }
  const span = hi - lo;
  const step0 = span / Math.max(1, count);
  const mag = Math.pow(10, Math.floor(Math.log10(step0)));
  const norm = step0 / mag;
  const step = (norm >= 5 ? 5 : norm >= 2 ? 2 : 1) * mag;
  const start = Math.ceil(lo / step) * step;
  const ticks: number[] = [];
  for (let v = start; v <= hi + 1e-12; v += step) {
    ticks.push(Number(v.toFixed(10)));
  }
  return ticks;
}

function fmt(value: number): string {
  if (Number.isInteger(value)) return String(value);
  const text = value.toPrecision(4);
  return String(Number(text));
}

export interface Series {
  key: string;
  label: string;
  points: [number, number][];
  color: string;
}

export interface Band {
  key: string;
  upper: [number, number][];
  lower: [number, number][];
  color: string;
}

export interface Bar {
  label: string;
  value: number;
  lo?: number;
  hi?: number;
  color: string;
}

export class Chart {
  private series: Series[] = [];
  private bands: Band[] = [];
  private bars: Bar[] = [];

  constructor(
    private title: string,
    private xLabel: string,
    private yLabel: string,
  ) {}

  addSeries(series: Series): void {
    if (series.points.length === 0) {
      throw new Error(`series "${series.key}" has no points`);
    }
    this.series.push(series);
  }

  addBand(band: Band): void {
    this.bands.push(band);
  }

  addBar(bar: Bar): void {
    this.bars.push(bar);
  }

  private extent(): { x: [number, number]; y: [number, number] } {
    const xs: number[] = [];
    const ys: number[] = [];
    for (const s of this.series) {
      for (const [x, y] of s.points) {
        xs.push(x);
        ys.push(y);
      }
    }
    for (const b of this.bands) {
      for (const [x, y] of [...b.upper, ...b.lower]) {
        xs.push(x);
        ys.push(y);
      }
    }
    this.bars.forEach((bar, i) => {
      xs.push(i);
      ys.push(0, bar.value, bar.lo ?? bar.value, bar.hi ?? bar.value);
    });
    if (xs.length === 0) throw new Error("chart has no data");
    return {
      x: [Math.min(...xs), Math.max(...xs)],
      y: [Math.min(...ys), Math.max(...ys)],
    };
  }

  render(): string {
    const { x: xDom, y: yDom } = this.extent();
    const plotW = WIDTH - MARGIN.left - MARGIN.right;
    const plotH = HEIGHT - MARGIN.top - MARGIN.bottom;
    const xTicks = niceTicks(xDom[0], xDom[1]);
    const yTicks = niceTicks(yDom[0], yDom[1]);
    const xLo = Math.min(xDom[0], xTicks[0]);
    const xHi = Math.max(xDom[1], xTicks[xTicks.length - 1]);
    const yLo = Math.min(yDom[0], yTicks[0]);
    const yHi = Math.max(yDom[1], yTicks[yTicks.length - 1]);
    const sx = (v: number) =>
      MARGIN.left + ((v - xLo) / (xHi - xLo || 1)) * plotW;
    const sy = (v: number) =>
      MARGIN.top + plotH - ((v - yLo) / (yHi - yLo || 1)) * plotH;

    const parts: string[] = [];
    parts.push(
      `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}" font-family="sans-serif">`,
      `<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>`,
      `<text x="${WIDTH / 2}" y="24" text-anchor="middle" font-size="16">${esc(this.title)}</text>`,
    );
    for (const tick of xTicks) {
      const px = sx(tick);
      parts.push(
        `<line x1="${px}" y1="${MARGIN.top}" x2="${px}" y2="${MARGIN.top + plotH}" stroke="#eee"/>`,
        `<text x="${px}" y="${MARGIN.top + plotH + 18}" text-anchor="middle" font-size="11">${fmt(tick)}</text>`,
      );
    }
    for (const tick of yTicks) {
      const py = sy(tick);
      parts.push(
        `<line x1="${MARGIN.left}" y1="${py}" x2="${MARGIN.left + plotW}" y2="${py}" stroke="#eee"/>`,
        `<text x="${MARGIN.left - 8}" y="${py + 4}" text-anchor="end" font-size="11">${fmt(tick)}</text>`,
      );
    }
    parts.push(
      `<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${plotW}" height="${plotH}" fill="none" stroke="#444"/>`,
      `<text x="${MARGIN.left + plotW / 2}" y="${HEIGHT - 14}" text-anchor="middle" font-size="13">${esc(this.xLabel)}</text>`,
      `<text x="18" y="${MARGIN.top + plotH / 2}" text-anchor="middle" font-size="13" transform="rotate(-90 18 ${MARGIN.top + plotH / 2})">${esc(this.yLabel)}</text>`,
    );

    for (const band of this.bands) {
      const ring = [...band.upper, ...band.lower.slice().reverse()];
      const path = ring.map(([x, y]) => `${sx(x)},${sy(y)}`).join(" ");
      parts.push(
        `<polygon class="band" data-key="${esc(band.key)}" points="${path}" fill="${band.color}" opacity="0.2"/>`,
      );
    }
    const barSlot = this.bars.length > 0 ? plotW / this.bars.length : 0;
    this.bars.forEach((bar, i) => {
      const cx = sx(i);
      const w = Math.min(46, barSlot * 0.6);
      const y0 = sy(Math.max(0, yLo));
      const y1 = sy(bar.value);
      parts.push(
        `<rect class="bar" data-key="${esc(bar.label)}" x="${cx - w / 2}" y="${Math.min(y0, y1)}" width="${w}" height="${Math.abs(y0 - y1)}" fill="${bar.color}"/>`,
      );
      if (bar.lo !== undefined && bar.hi !== undefined) {
        parts.push(
          `<line class="whisker" x1="${cx}" y1="${sy(bar.lo)}" x2="${cx}" y2="${sy(bar.hi)}" stroke="#222"/>`,
          `<line class="whisker" x1="${cx - 6}" y1="${sy(bar.lo)}" x2="${cx + 6}" y2="${sy(bar.lo)}" stroke="#222"/>`,
          `<line class="whisker" x1="${cx - 6}" y1="${sy(bar.hi)}" x2="${cx + 6}" y2="${sy(bar.hi)}" stroke="#222"/>`,
        );
      }
      parts.push(
        `<text x="${cx}" y="${MARGIN.top + plotH + 32}" text-anchor="middle" font-size="11">${esc(bar.label)}</text>`,
      );
    });
    for (const series of this.series) {
      const path = series.points.map(([x, y]) => `${sx(x)},${sy(y)}`).join(" ");
      parts.push(
        `<polyline class="series" data-key="${esc(series.key)}" points="${path}" fill="none" stroke="${series.color}" stroke-width="1.8"/>`,
      );
    }
    const legendEntries = this.series.map((s) => ({ label: s.label, color: s.color }));
    legendEntries.forEach((entry, i) => {
      const ly = MARGIN.top + 10 + i * 18;
      const lx = MARGIN.left + plotW + 12;
      parts.push(
        `<line x1="${lx}" y1="${ly}" x2="${lx + 18}" y2="${ly}" stroke="${entry.color}" stroke-width="2"/>`,
        `<text class="legend" x="${lx + 24}" y="${ly + 4}" font-size="11">${esc(entry.label)}</text>`,
      );
    });
    parts.push("</svg>");
    return parts.join("\n");
  }
}
