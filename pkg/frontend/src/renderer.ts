import { FramePayload } from "./protocol.js";

/**
 * Map a click position on the scaled canvas to cell coordinates.
 * Pure so the mapping rule is testable without a DOM.
 */
export function canvasToCell(
  px: number,
  py: number,
  viewWidth: number,
  viewHeight: number,
  gridWidth: number,
  gridHeight: number,
): { x: number; y: number } {
  const clamp = (v: number, hi: number) => Math.min(Math.max(v, 0), hi - 1);
  const x = clamp(Math.floor((px / viewWidth) * gridWidth), gridWidth);
  const y = clamp(Math.floor((py / viewHeight) * gridHeight), gridHeight);
  return { x, y };
}

/**
 * Draws raw RGBA frames onto a display canvas.
 *
 * Frames land on an offscreen canvas at grid resolution and are blitted up
 * with smoothing disabled so cells stay crisp.  The last frame is kept so a
 * resize redraws without another network round trip.
 */
export class FrameRenderer {
  private ctx: CanvasRenderingContext2D;
  private cells: HTMLCanvasElement;
  private cellsCtx: CanvasRenderingContext2D;
  private last: FramePayload | null = null;

  constructor(private canvas: HTMLCanvasElement) {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("2d canvas context unavailable");
    this.ctx = ctx;
    this.cells = document.createElement("canvas");
    const cellsCtx = this.cells.getContext("2d");
    if (!cellsCtx) throw new Error("2d canvas context unavailable");
    this.cellsCtx = cellsCtx;
  }

  draw(frame: FramePayload): void {
    if (this.last && frame.step < this.last.step) return; // stale
    this.last = frame;
    if (this.cells.width !== frame.width || this.cells.height !== frame.height) {
      this.cells.width = frame.width;
      this.cells.height = frame.height;
    }
    const image = this.cellsCtx.createImageData(frame.width, frame.height);
    image.data.set(frame.pixels);
    this.cellsCtx.putImageData(image, 0, 0);
    this.blit();
  }

  /** Redraw the held frame, e.g. after a resize. */
  redraw(): void {
    if (this.last) this.blit();
  }

  lastStep(): number | null {
    return this.last ? this.last.step : null;
  }

  private blit(): void {
    const { canvas, ctx } = this;
    ctx.imageSmoothingEnabled = false;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.drawImage(this.cells, 0, 0, canvas.width, canvas.height);
    if (this.last) {
      const label = `step ${this.last.step}`;
      ctx.font = "12px monospace";
      const w = ctx.measureText(label).width;
      ctx.fillStyle = "rgba(0, 0, 0, 0.6)";
      ctx.fillRect(4, 4, w + 8, 18);
      ctx.fillStyle = "#e8e8e8";
      ctx.fillText(label, 8, 17);
    }
  }
}
