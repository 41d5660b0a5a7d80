import {
  BrushTool,
  FramePayload,
  ParamItem,
  ServerMessage,
  TelemetrySample,
  cmdBrush,
  cmdDescribeParams,
  cmdPause,
  cmdResume,
  cmdSetParam,
  cmdSnapshot,
  cmdStep,
  cmdSubscribe,
  decodeFrame,
  parseServerMessage,
} from "./protocol.js";

export const TELEMETRY_CAPACITY = 2000;
export const OFFLINE_QUEUE_LIMIT = 16;

export interface BrushSettings {
  tool: BrushTool;
  radius: number;
  amount: number;
}

/**
 * Client-side mirror of one steering session.
 *
 * Owns no sockets: the network layer forwards open/close/message events in
 * and provides a send function, so the same model runs in the browser and
 * under node tests.  Commands issued while disconnected are queued (up to
 * OFFLINE_QUEUE_LIMIT) and flushed on reconnect; beyond that they are
 * dropped with a warning.
 */
export class SessionModel {
  connected = false;
  paused = false;

  // Latest frame wins; anything older than what we already hold is stale.
  frame: FramePayload | null = null;
  frameSeq = 0;
  framesDiscarded = 0;

  telemetry: TelemetrySample[] = [];
  params: ParamItem[] = [];
  brush: BrushSettings = { tool: "energy", radius: 3, amount: 1.0 };

  onFrame: (frame: FramePayload) => void = () => {};
  onTelemetry: (sample: TelemetrySample) => void = () => {};
  onParams: (items: ParamItem[]) => void = () => {};
  onAck: (cmd: string, extra: Record<string, unknown>) => void = () => {};
  onServerError: (msg: string) => void = () => {};
  onWarning: (msg: string) => void = () => {};
  onConnection: (connected: boolean) => void = () => {};

  private sender: ((text: string) => void) | null = null;
  private pending: string[] = [];
  private gridWidth = 0;
  private gridHeight = 0;

  attach(sender: (text: string) => void): void {
    this.sender = sender;
  }

  handleOpen(): void {
    this.connected = true;
    const queued = this.pending;
    this.pending = [];
    for (const text of queued) this.sender?.(text);
    this.onConnection(true);
  }

  handleClose(): void {
    this.connected = false;
    this.onConnection(false);
  }

  handleMessage(data: string | ArrayBuffer | Uint8Array): void {
    if (typeof data !== "string") {
      const frame = decodeFrame(data);
      if (frame) this.acceptFrame(frame);
      return;
    }
    const msg = parseServerMessage(data);
    if (!msg) return;
    this.acceptJson(msg);
  }

  private acceptFrame(frame: FramePayload): void {
    if (this.frame && frame.step < this.frame.step) {
      this.framesDiscarded += 1;
      return;
    }
    if (this.gridWidth === 0) {
      this.gridWidth = frame.width;
      this.gridHeight = frame.height;
    } else if (frame.width !== this.gridWidth || frame.height !== this.gridHeight) {
      this.onWarning(
        `frame size ${frame.width}x${frame.height} does not match grid ` +
          `${this.gridWidth}x${this.gridHeight}`,
      );
      this.gridWidth = frame.width;
      this.gridHeight = frame.height;
    }
    this.frame = frame;
    this.frameSeq += 1;
    this.onFrame(frame);
  }

  private acceptJson(msg: ServerMessage): void {
    switch (msg.type) {
      case "telemetry": {
        const sample = msg as TelemetrySample & { type: string };
        this.paused = sample.paused;
        this.recordTelemetry(sample);
        this.onTelemetry(sample);
        break;
      }
      case "params":
        this.params = msg.items;
        this.onParams(msg.items);
        break;
      case "ack": {
        const { type: _type, cmd, ...extra } = msg;
        // Server state changed under us; re-read the tree so the UI shows
        // the accepted value rather than an optimistic guess.
        if (cmd === "set_param") this.describeParams();
        this.onAck(cmd, extra);
        break;
      }
      case "error":
        this.onServerError(msg.msg);
        break;
      case "snapshot_saved":
        this.onAck("snapshot_saved", { path: msg.path });
        break;
    }
  }

  /** Buffer rule: steps strictly increase; a repeat step refreshes in place. */
  private recordTelemetry(sample: TelemetrySample): void {
    const last = this.telemetry[this.telemetry.length - 1];
    if (last !== undefined) {
      if (sample.step < last.step) return;
      if (sample.step === last.step) {
        this.telemetry[this.telemetry.length - 1] = sample;
        return;
      }
    }
    this.telemetry.push(sample);
    if (this.telemetry.length > TELEMETRY_CAPACITY) this.telemetry.shift();
  }

  gridSize(): { width: number; height: number } | null {
    if (this.gridWidth === 0) return null;
    return { width: this.gridWidth, height: this.gridHeight };
  }

  // Commands.  Each goes out immediately when connected, otherwise into the
  // bounded offline queue.

  pause(): void {
    this.send(cmdPause());
  }

  resume(): void {
    this.send(cmdResume());
  }

  stepOnce(n = 1): void {
    this.send(cmdStep(n));
  }

  setParam(path: string, value: number): void {
    this.send(cmdSetParam(path, value));
  }

  brushAt(x: number, y: number): void {
    const b = this.brush;
    this.send(cmdBrush(b.tool, x, y, b.radius, b.amount));
  }

  subscribe(stream: "frame" | "telemetry", fps: number): void {
    this.send(cmdSubscribe(stream, fps));
  }

  snapshot(): void {
    this.send(cmdSnapshot());
  }

  describeParams(): void {
    this.send(cmdDescribeParams());
  }

  queuedCount(): number {
    return this.pending.length;
  }

  private send(cmd: object): void {
    const text = JSON.stringify(cmd);
    if (this.connected && this.sender) {
      this.sender(text);
      return;
    }
    if (this.pending.length >= OFFLINE_QUEUE_LIMIT) {
      this.onWarning(`offline queue full, dropped ${JSON.stringify(cmd)}`);
      return;
    }
    this.pending.push(text);
  }
}
