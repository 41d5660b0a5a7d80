// End-to-end checks against a live simulation server.  The suite spawns
// `evoca serve` on an ephemeral port, drives a SessionModel through a real
// WebSocket, and verifies the steering loop: frame cadence, the energy
// brush, pause/step semantics, and the parameter tree refresh.

import { spawn, ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { createInterface } from "node:readline";
import { WebSocket } from "ws";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { SessionModel } from "../src/session.js";

const SERVE_CONFIG = {
  grid: { width: 256, height: 256 },
  seed: 99,
  initial_population: 64,
  serve: { host: "127.0.0.1", port: 0 },
};

let server: ChildProcess | null = null;
let ws: WebSocket | null = null;
let model: SessionModel;

const acks: Array<{ cmd: string; extra: Record<string, unknown> }> = [];
const errors: string[] = [];
const frames: Array<{ step: number; at: number }> = [];

function startServer(): Promise<string> {
  const dir = mkdtempSync(join(tmpdir(), "evoca-console-"));
  const cfgPath = join(dir, "serve.json");
  writeFileSync(cfgPath, JSON.stringify(SERVE_CONFIG));
  server = spawn("evoca", ["serve", "--config", cfgPath], {
    cwd: dir,
    stdio: ["ignore", "pipe", "pipe"],
  });
  return new Promise((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error("server startup timed out")), 60_000);
    const lines = createInterface({ input: server!.stdout! });
    lines.on("line", (line) => {
      const m = line.match(/listening on (ws:\/\/[\d.]+:\d+)/);
      if (m) {
        clearTimeout(timer);
        resolve(m[1]);
      }
    });
    server!.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`server exited early with code ${code}`));
    });
  });
}

function connect(url: string): Promise<void> {
  model = new SessionModel();
  model.onAck = (cmd, extra) => acks.push({ cmd, extra });
  model.onServerError = (msg) => errors.push(msg);
  model.onFrame = (frame) => frames.push({ step: frame.step, at: performance.now() });
  ws = new WebSocket(url);
  model.attach((text) => ws!.send(text));
  ws.on("message", (data: Buffer, isBinary: boolean) => {
    if (isBinary) model.handleMessage(new Uint8Array(data));
    else model.handleMessage(data.toString());
  });
  return new Promise((resolve, reject) => {
    ws!.on("open", () => {
      model.handleOpen();
      resolve();
    });
    ws!.on("error", reject);
  });
}

function waitFor(check: () => boolean, timeoutMs: number, what: string): Promise<void> {
  const started = performance.now();
  return new Promise((resolve, reject) => {
    const poll = () => {
      if (check()) return resolve();
      if (performance.now() - started > timeoutMs) {
        return reject(new Error(`timed out waiting for ${what}`));
      }
      setTimeout(poll, 15);
    };
    poll();
  });
}

function lastStep(): number {
  return model.telemetry[model.telemetry.length - 1].step;
}

async function settleWhilePaused(): Promise<number> {
  // Two consecutive telemetry reads at the same step mean the engine loop
  // has drained the pause and stopped advancing.
  let a = -1;
  await waitFor(() => {
    if (model.telemetry.length === 0 || !model.paused) return false;
    const s = lastStep();
    if (s === a) return true;
    a = s;
    return false;
  }, 10_000, "step counter to settle");
  return lastStep();
}

beforeAll(async () => {
  const url = await startServer();
  await connect(url);
  model.subscribe("telemetry", 20);
  model.describeParams();
  await waitFor(() => model.params.length > 0, 10_000, "initial params");
  await waitFor(() => model.telemetry.length > 0, 10_000, "first telemetry");
}, 90_000);

afterAll(() => {
  ws?.close();
  server?.kill("SIGTERM");
});

describe("live steering session", () => {
  it("streams frames at the subscribed rate", async () => {
    model.subscribe("frame", 10);
    // Let the first few frames flush startup costs before timing.
    await waitFor(() => frames.length >= 5, 10_000, "frame stream");
    const start = frames.length;
    const t0 = performance.now();
    await new Promise((r) => setTimeout(r, 3000));
    const got = frames.length - start;
    const seconds = (performance.now() - t0) / 1000;
    const rate = got / seconds;
    expect(rate).toBeGreaterThanOrEqual(8);
    expect(rate).toBeLessThanOrEqual(12);
    // Frames advance with the simulation, and none arrive out of order.
    expect(frames[frames.length - 1].step).toBeGreaterThan(frames[start].step);
    expect(model.framesDiscarded).toBe(0);
  }, 30_000);

  it("pause halts the step counter and step advances it exactly once", async () => {
    model.pause();
    await waitFor(() => acks.some((a) => a.cmd === "pause"), 5_000, "pause ack");
    const halted = await settleWhilePaused();

    // Still halted shortly after.
    await new Promise((r) => setTimeout(r, 400));
    expect(lastStep()).toBe(halted);

    model.stepOnce(1);
    await waitFor(() => lastStep() === halted + 1, 5_000, "single step");
    await new Promise((r) => setTimeout(r, 400));
    expect(lastStep()).toBe(halted + 1);
    expect(model.paused).toBe(true);
  }, 30_000);

  it("energy brush raises total energy by the disc cell count", async () => {
    expect(model.paused).toBe(true);
    const before = model.telemetry[model.telemetry.length - 1].total_energy;
    model.brush = { tool: "energy", radius: 3, amount: 1.0 };
    const ackCount = acks.filter((a) => a.cmd === "brush").length;
    model.brushAt(128, 128);
    await waitFor(
      () => acks.filter((a) => a.cmd === "brush").length > ackCount,
      5_000,
      "brush ack",
    );
    let after = before;
    await waitFor(() => {
      after = model.telemetry[model.telemetry.length - 1].total_energy;
      return after > before + 1;
    }, 10_000, "energy to land in telemetry");
    const added = after - before;
    // A radius-3 disc on the grid covers 29 cells.
    expect(Math.abs(added - 29)).toBeLessThanOrEqual(0.29);
  }, 30_000);

  it("set_param is acknowledged and lands in the parameter tree", async () => {
    const target = 0.27;
    model.setParam("physics.cycle_amplitude", target);
    await waitFor(
      () => acks.some((a) => a.cmd === "set_param" && a.extra.path === "physics.cycle_amplitude"),
      5_000,
      "set_param ack",
    );
    // The model re-reads the tree on the ack; wait for the refresh.
    await waitFor(() => {
      const item = model.params.find((p) => p.path === "physics.cycle_amplitude");
      return item !== undefined && Math.abs(item.value - target) < 1e-12;
    }, 10_000, "parameter tree refresh");
    expect(errors).toEqual([]);
  }, 30_000);

  it("rejects a bad parameter without closing the session", async () => {
    model.setParam("physics.no_such_knob", 1);
    await waitFor(() => errors.some((e) => e.includes("unknown parameter")), 5_000, "error reply");
    model.resume();
    await waitFor(() => acks.some((a) => a.cmd === "resume"), 5_000, "resume ack");
    await waitFor(() => !model.paused, 5_000, "sim running again");
  }, 30_000);
});
