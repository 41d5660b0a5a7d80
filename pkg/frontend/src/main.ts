import { buildCharts } from "./charts.js";
import { buildBrushPanel, buildParamPanel, buildStatusLine, buildTransport } from "./controls.js";
import { FrameRenderer, canvasToCell } from "./renderer.js";
import { SessionModel } from "./session.js";

const FRAME_FPS = 10;
const TELEMETRY_FPS = 4;
const RECONNECT_MS = 1500;

function serverUrl(): string {
  const q = new URLSearchParams(window.location.search).get("server");
  return q ?? "ws://127.0.0.1:8765";
}

function connect(model: SessionModel, url: string): void {
  const ws = new WebSocket(url);
  ws.binaryType = "arraybuffer";
  model.attach((text) => ws.send(text));
  ws.onopen = () => {
    model.handleOpen();
    model.subscribe("frame", FRAME_FPS);
    model.subscribe("telemetry", TELEMETRY_FPS);
    model.describeParams();
  };
  ws.onmessage = (event) => model.handleMessage(event.data);
  ws.onclose = () => {
    model.handleClose();
    setTimeout(() => connect(model, url), RECONNECT_MS);
  };
  ws.onerror = () => ws.close();
}

function main(): void {
  const model = new SessionModel();
  const canvas = document.getElementById("view") as HTMLCanvasElement;
  const renderer = new FrameRenderer(canvas);

  // Network receipt and drawing are decoupled: the socket only updates the
  // model, and each animation frame draws whatever is newest.
  let drawnSeq = -1;
  const loop = () => {
    if (model.frame && model.frameSeq !== drawnSeq) {
      drawnSeq = model.frameSeq;
      renderer.draw(model.frame);
    }
    requestAnimationFrame(loop);
  };
  requestAnimationFrame(loop);

  canvas.addEventListener("click", (event) => {
    const grid = model.gridSize();
    if (!grid) return;
    const rect = canvas.getBoundingClientRect();
    const cell = canvasToCell(
      event.clientX - rect.left,
      event.clientY - rect.top,
      rect.width,
      rect.height,
      grid.width,
      grid.height,
    );
    model.brushAt(cell.x, cell.y);
  });

  window.addEventListener("resize", () => renderer.redraw());

  buildStatusLine(must("status"), model);
  buildTransport(must("transport"), model);
  buildBrushPanel(must("brush"), model);
  buildParamPanel(must("params"), model);
  const updateCharts = buildCharts(must("charts"));

  const prevTelemetry = model.onTelemetry;
  model.onTelemetry = (sample) => {
    prevTelemetry(sample);
    updateCharts(model.telemetry);
  };

  connect(model, serverUrl());
}

function must(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el;
}

main();
