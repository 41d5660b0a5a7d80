import { TelemetrySample } from "./protocol.js";

export interface ChartPoint {
  x: number;
  y: number;
}

/**
 * Scale a telemetry series into pixel space.  The x axis follows step
 * numbers, not sample index, so gaps from dropped samples stay visible.
 */
export function scaleSeries(
  samples: TelemetrySample[],
  pick: (s: TelemetrySample) => number,
  width: number,
  height: number,
  pad = 4,
): { points: ChartPoint[]; min: number; max: number } {
  if (samples.length === 0) return { points: [], min: 0, max: 0 };
  const s0 = samples[0].step;
  const sN = samples[samples.length - 1].step;
  const stepSpan = Math.max(sN - s0, 1);
  let min = Infinity;
  let max = -Infinity;
  for (const s of samples) {
    const v = pick(s);
    if (v < min) min = v;
    if (v > max) max = v;
  }
  const span = max - min;
  const innerW = width - 2 * pad;
  const innerH = height - 2 * pad;
  const points = samples.map((s) => {
    const fx = (s.step - s0) / stepSpan;
    // Flat series draws as a midline rather than dividing by zero.
    const fy = span > 0 ? (pick(s) - min) / span : 0.5;
    return { x: pad + fx * innerW, y: pad + (1 - fy) * innerH };
  });
  return { points, min, max };
}

function formatValue(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 10000 || a < 0.001) return v.toExponential(2);
  if (Number.isInteger(v)) return String(v);
  return v.toPrecision(4);
}

/** One live strip chart for a single telemetry metric. */
export class TelemetryChart {
  private ctx: CanvasRenderingContext2D;

  constructor(
    private canvas: HTMLCanvasElement,
    private label: string,
    private pick: (s: TelemetrySample) => number,
    private color = "#6fc3df",
  ) {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("2d canvas context unavailable");
    this.ctx = ctx;
  }

  update(samples: TelemetrySample[]): void {
    const { ctx, canvas } = this;
    const w = canvas.width;
    const h = canvas.height;
    ctx.fillStyle = "#14161a";
    ctx.fillRect(0, 0, w, h);
    if (samples.length === 0) return;
    const { points, min, max } = scaleSeries(samples, this.pick, w, h - 14);
    ctx.strokeStyle = this.color;
    ctx.lineWidth = 1;
    ctx.beginPath();
    ctx.moveTo(points[0].x, points[0].y + 14);
    for (let i = 1; i < points.length; i++) {
      ctx.lineTo(points[i].x, points[i].y + 14);
    }
    ctx.stroke();
    const latest = this.pick(samples[samples.length - 1]);
    ctx.font = "10px monospace";
    ctx.fillStyle = "#9aa0a6";
    ctx.fillText(this.label, 4, 10);
    const tag = formatValue(latest);
    ctx.fillStyle = this.color;
    ctx.fillText(tag, w - 4 - ctx.measureText(tag).width, 10);
    ctx.fillStyle = "#5f6368";
    ctx.fillText(formatValue(max), 4, 22);
    ctx.fillText(formatValue(min), 4, h - 4);
  }
}

const PANELS: Array<{ key: string; label: string; pick: (s: TelemetrySample) => number; color: string }> = [
  { key: "total_energy", label: "total energy", pick: (s) => s.total_energy, color: "#e06c75" },
  { key: "total_infrastructure", label: "total infrastructure", pick: (s) => s.total_infrastructure, color: "#98c379" },
  { key: "live_genomes", label: "live genomes", pick: (s) => s.live_genomes, color: "#61afef" },
  { key: "msc", label: "structural complexity", pick: (s) => s.msc, color: "#c678dd" },
  { key: "mean_distance", label: "mean genome distance", pick: (s) => s.mean_distance, color: "#e5c07b" },
];

/** Build the full telemetry panel strip; returns the per-sample updater. */
export function buildCharts(root: HTMLElement): (samples: TelemetrySample[]) => void {
  const charts: TelemetryChart[] = [];
  for (const panel of PANELS) {
    const canvas = document.createElement("canvas");
    canvas.width = 300;
    canvas.height = 90;
    canvas.style.display = "block";
    canvas.style.marginBottom = "6px";
    root.appendChild(canvas);
    charts.push(new TelemetryChart(canvas, panel.label, panel.pick, panel.color));
  }
  return (samples) => {
    for (const chart of charts) chart.update(samples);
  };
}
