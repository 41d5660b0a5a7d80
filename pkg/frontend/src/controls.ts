import { BRUSH_TOOLS, BrushTool, ParamItem } from "./protocol.js";
import { SessionModel } from "./session.js";

function button(label: string, onClick: () => void): HTMLButtonElement {
  const b = document.createElement("button");
  b.textContent = label;
  b.onclick = onClick;
  return b;
}

function row(root: HTMLElement, label: string): HTMLDivElement {
  const div = document.createElement("div");
  div.className = "row";
  const span = document.createElement("span");
  span.className = "row-label";
  span.textContent = label;
  div.appendChild(span);
  root.appendChild(div);
  return div;
}

/** Pause / resume / step buttons.  Step is only legal while paused. */
export function buildTransport(root: HTMLElement, model: SessionModel): void {
  const pause = button("pause", () => model.pause());
  const resume = button("resume", () => model.resume());
  const step = button("step", () => model.stepOnce(1));
  step.disabled = true;
  const sync = () => {
    step.disabled = !model.paused;
    pause.disabled = model.paused;
    resume.disabled = !model.paused;
  };
  const prev = model.onTelemetry;
  model.onTelemetry = (sample) => {
    prev(sample);
    sync();
  };
  for (const b of [pause, resume, step]) root.appendChild(b);
}

/** Brush tool picker writing straight into the session's brush settings. */
export function buildBrushPanel(root: HTMLElement, model: SessionModel): void {
  const toolRow = row(root, "tool");
  const select = document.createElement("select");
  for (const tool of BRUSH_TOOLS) {
    const opt = document.createElement("option");
    opt.value = tool;
    opt.textContent = tool.replace("_", " ");
    select.appendChild(opt);
  }
  select.value = model.brush.tool;
  select.onchange = () => {
    model.brush.tool = select.value as BrushTool;
  };
  toolRow.appendChild(select);

  const numeric = (label: string, value: number, min: number, max: number, step: number, apply: (v: number) => void) => {
    const r = row(root, label);
    const input = document.createElement("input");
    input.type = "number";
    input.value = String(value);
    input.min = String(min);
    input.max = String(max);
    input.step = String(step);
    input.onchange = () => {
      const v = Number(input.value);
      if (Number.isFinite(v) && v >= min && v <= max) apply(v);
      else input.value = String(value);
    };
    r.appendChild(input);
  };
  numeric("radius", model.brush.radius, 0, 64, 1, (v) => {
    model.brush.radius = Math.round(v);
  });
  numeric("amount", model.brush.amount, 0, 100, 0.1, (v) => {
    model.brush.amount = v;
  });
}

/**
 * Slider tree generated from the server's describe_params reply, grouped by
 * path prefix.  Nothing here is hardcoded: a new steerable constant on the
 * server shows up on the next refresh.
 */
export function buildParamPanel(root: HTMLElement, model: SessionModel): void {
  const render = (items: ParamItem[]) => {
    root.textContent = "";
    let section = "";
    for (const item of items) {
      const [prefix, name] = item.path.split(".", 2);
      if (prefix !== section) {
        section = prefix;
        const head = document.createElement("div");
        head.className = "param-section";
        head.textContent = section;
        root.appendChild(head);
      }
      const r = row(root, name ?? item.path);
      const slider = document.createElement("input");
      slider.type = "range";
      slider.min = String(item.min);
      slider.max = String(item.max);
      slider.step = item.max - item.min > 100 ? "1" : String((item.max - item.min) / 200);
      slider.value = String(item.value);
      const value = document.createElement("span");
      value.className = "param-value";
      value.textContent = String(item.value);
      slider.oninput = () => {
        value.textContent = slider.value;
      };
      slider.onchange = () => {
        model.setParam(item.path, Number(slider.value));
      };
      r.appendChild(slider);
      r.appendChild(value);
    }
  };
  const prev = model.onParams;
  model.onParams = (items) => {
    prev(items);
    render(items);
  };
  if (model.params.length > 0) render(model.params);
}

/** Status line fed by acks, errors, and local warnings. */
export function buildStatusLine(root: HTMLElement, model: SessionModel): void {
  const line = document.createElement("div");
  line.className = "status";
  root.appendChild(line);
  let clearTimer: ReturnType<typeof setTimeout> | null = null;
  const show = (text: string, cls: string) => {
    line.textContent = text;
    line.className = `status ${cls}`;
    if (clearTimer) clearTimeout(clearTimer);
    clearTimer = setTimeout(() => {
      line.textContent = "";
      line.className = "status";
    }, 4000);
  };
  const prevAck = model.onAck;
  model.onAck = (cmd, extra) => {
    prevAck(cmd, extra);
    show(`ok: ${cmd}`, "ok");
  };
  const prevErr = model.onServerError;
  model.onServerError = (msg) => {
    prevErr(msg);
    show(`server: ${msg}`, "err");
  };
  const prevWarn = model.onWarning;
  model.onWarning = (msg) => {
    prevWarn(msg);
    show(msg, "warn");
  };
  const prevConn = model.onConnection;
  model.onConnection = (connected) => {
    prevConn(connected);
    show(connected ? "connected" : "disconnected, retrying", connected ? "ok" : "warn");
  };
}
