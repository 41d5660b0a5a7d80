// Wire protocol spoken by the simulation server: JSON text messages both
// ways, plus binary frames ("FRME" + u32 step + u16 width + u16 height,
// little-endian, followed by width*height RGBA bytes).

export const FRAME_MAGIC = 0x454d5246; // "FRME" read as LE u32
export const FRAME_HEADER_BYTES = 12;

export type BrushTool = "energy" | "kill" | "seed_organism";
export const BRUSH_TOOLS: BrushTool[] = ["energy", "kill", "seed_organism"];

export interface TelemetrySample {
  step: number;
  fps: number;
  live_genomes: number;
  total_energy: number;
  total_infrastructure: number;
  msc: number;
  mean_distance: number;
  paused: boolean;
}

export interface ParamItem {
  path: string;
  value: number;
  min: number;
  max: number;
}

export interface AckMessage {
  type: "ack";
  cmd: string;
  [extra: string]: unknown;
}

export interface ErrorMessage {
  type: "error";
  msg: string;
}

export interface ParamsMessage {
  type: "params";
  items: ParamItem[];
}

export interface SnapshotSavedMessage {
  type: "snapshot_saved";
  path: string;
}

export type ServerMessage =
  | ({ type: "telemetry" } & TelemetrySample)
  | AckMessage
  | ErrorMessage
  | ParamsMessage
  | SnapshotSavedMessage;

export interface FramePayload {
  step: number;
  width: number;
  height: number;
  pixels: Uint8ClampedArray; // RGBA, row-major from the top-left cell
}

function asDataView(data: ArrayBuffer | Uint8Array): DataView {
  if (data instanceof Uint8Array) {
    return new DataView(data.buffer, data.byteOffset, data.byteLength);
  }
  return new DataView(data);
}

/** Decode a binary frame; returns null if the buffer is not a valid frame. */
export function decodeFrame(data: ArrayBuffer | Uint8Array): FramePayload | null {
  const view = asDataView(data);
  if (view.byteLength < FRAME_HEADER_BYTES) return null;
  if (view.getUint32(0, true) !== FRAME_MAGIC) return null;
  const step = view.getUint32(4, true);
  const width = view.getUint16(8, true);
  const height = view.getUint16(10, true);
  const expected = FRAME_HEADER_BYTES + width * height * 4;
  if (view.byteLength !== expected) return null;
  const pixels = new Uint8ClampedArray(
    view.buffer.slice(view.byteOffset + FRAME_HEADER_BYTES, view.byteOffset + expected),
  );
  return { step, width, height, pixels };
}

/** Parse a JSON text message; returns null for anything malformed. */
export function parseServerMessage(text: string): ServerMessage | null {
  let msg: unknown;
  try {
    msg = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof msg !== "object" || msg === null) return null;
  const type = (msg as { type?: unknown }).type;
  if (typeof type !== "string") return null;
  switch (type) {
    case "telemetry":
    case "ack":
    case "error":
    case "params":
    case "snapshot_saved":
      return msg as ServerMessage;
    default:
      return null;
  }
}

// Client -> server command constructors.  The server replies to each with
// an ack carrying the same "cmd" name, or an error message.

export function cmdPause(): object {
  return { type: "pause" };
}

export function cmdResume(): object {
  return { type: "resume" };
}

export function cmdStep(n = 1): object {
  return { type: "step", n };
}

export function cmdSetParam(path: string, value: number): object {
  return { type: "set_param", path, value };
}

export function cmdBrush(
  tool: BrushTool,
  x: number,
  y: number,
  radius: number,
  amount: number,
): object {
  return { type: "brush", tool, x, y, radius, amount };
}

export function cmdSubscribe(stream: "frame" | "telemetry", fps: number): object {
  return { type: "subscribe", stream, fps };
}

export function cmdSnapshot(): object {
  return { type: "snapshot" };
}

export function cmdDescribeParams(): object {
  return { type: "describe_params" };
}
