"""Live steering endpoint.

One thread steps the simulation; an asyncio loop owns the sockets.
Clients send JSON text commands (pause, resume, step, set_param, brush,
subscribe, snapshot, describe_params) and receive JSON telemetry plus
binary frames.  Commands mutate nothing directly: they are queued and
applied by the engine thread at the next step boundary, so a step never
sees half-applied steering.

Frame wire format: the bytes "FRME", then little-endian u32 step,
u16 width, u16 height, then width*height RGBA pixels row-major.

Outbound queues are bounded; when a client cannot keep up, the oldest
pending message is dropped so the stream stays current instead of
growing stale backlog.
"""

import asyncio
import json
import logging
import struct
import threading
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import engine, rng as rngmod
from .metrics import census, diversity, msc_of_substrate
from .neuroevo import init_genome
from .snapshot import save_snapshot
from .substrate import render_rgb

__all__ = ["SimServer", "serve_forever", "FRAME_MAGIC"]

log = logging.getLogger(__name__)

FRAME_MAGIC = b"FRME"
BRUSH_TOOLS = ("energy", "kill", "seed_organism")
_QUEUE_LIMIT = 8
_METRICS_STRIDE = 25  # cache msc/diversity for this many steps


@dataclass
class _Subscription:
    interval: float
    next_due: float


class _Client:
    """Connection-side state: outbound queue and active subscriptions.

    Text messages flow through a small bounded queue.  Frames never queue:
    a single slot holds the latest undelivered frame and a newer one simply
    replaces it, so a slow reader gets fresh frames instead of a backlog.
    """

    def __init__(self, ws, loop: asyncio.AbstractEventLoop):
        self.ws = ws
        self.loop = loop
        self.queue: asyncio.Queue = asyncio.Queue(maxsize=_QUEUE_LIMIT)
        self.subs: dict[str, _Subscription] = {}
        self.lock = threading.Lock()
        self.last_frame_step = -1
        self._frame: bytes | None = None
        self._wake = asyncio.Event()

    def push(self, payload) -> None:
        """Queue a text message from any thread, evicting the oldest if full."""
        self.loop.call_soon_threadsafe(self._put, payload)

    def push_frame(self, data: bytes) -> None:
        """Stage a frame from any thread; an undelivered older frame is dropped."""
        self.loop.call_soon_threadsafe(self._set_frame, data)

    def _put(self, payload) -> None:
        while True:
            try:
                self.queue.put_nowait(payload)
                break
            except asyncio.QueueFull:
                try:
                    self.queue.get_nowait()
                except asyncio.QueueEmpty:
                    pass
        self._wake.set()

    def _set_frame(self, data: bytes) -> None:
        self._frame = data
        self._wake.set()

    async def drain(self) -> None:
        while True:
            await self._wake.wait()
            self._wake.clear()
            while True:
                try:
                    payload = self.queue.get_nowait()
                except asyncio.QueueEmpty:
                    payload = None
                if payload is not None:
                    await self.ws.send(payload)
                frame = self._frame
                if frame is not None:
                    self._frame = None
                    await self.ws.send(frame)
                if payload is None and frame is None:
                    break


class SimServer:
    """Owns a SimState, an engine thread, and the websocket endpoint."""

    def __init__(self, state: engine.SimState, snapshot_dir: str | Path = "."):
        self.state = state
        self.snapshot_dir = Path(snapshot_dir)
        self.running = True
        self.pending_steps = 0
        self._commands: deque = deque()
        self._cmd_lock = threading.Lock()
        self._wake = threading.Event()
        self._stop = threading.Event()
        self._clients: set[_Client] = set()
        self._clients_lock = threading.Lock()
        self._fps = 0.0
        self._brush_counter = 0
        self._loop: asyncio.AbstractEventLoop | None = None
        self._thread: threading.Thread | None = None
        self._loop_thread: threading.Thread | None = None
        self._bound: tuple[str, int] | None = None
        self._started = threading.Event()
        self._shutdown: asyncio.Event | None = None
        self._metrics_cache: tuple[int, float, float] | None = None  # (step, msc, mean_dist)

    # ------------------------------------------------------------------
    # engine side

    def _engine_loop(self) -> None:
        cfg = self.state.config.serve
        min_dt = 1.0 / cfg.max_steps_per_second if cfg.max_steps_per_second > 0 else 0.0
        next_slot = time.monotonic()
        while not self._stop.is_set():
            self._drain_commands()
            stepped = False
            if self.running or self.pending_steps > 0:
                now = time.monotonic()
                if min_dt and now < next_slot:
                    time.sleep(min(next_slot - now, 0.05))
                else:
                    t0 = time.monotonic()
                    engine.step(self.state)
                    dt = max(time.monotonic() - t0, 1e-9)
                    inst = 1.0 / dt
                    self._fps = inst if self._fps == 0.0 else 0.9 * self._fps + 0.1 * inst
                    if self.pending_steps > 0:
                        self.pending_steps -= 1
                    next_slot = max(next_slot + min_dt, t0)
                    stepped = True
            else:
                self._wake.wait(timeout=0.02)
                self._wake.clear()
            self._publish(stepped)

    def _drain_commands(self) -> None:
        while True:
            with self._cmd_lock:
                if not self._commands:
                    return
                client, cmd = self._commands.popleft()
            try:
                self._apply_command(client, cmd)
            except Exception:
                log.exception("command failed: %r", cmd)

    def _apply_command(self, client: _Client | None, cmd: dict) -> None:
        kind = cmd["type"]
        if kind == "pause":
            self.running = False
        elif kind == "resume":
            self.running = True
        elif kind == "step":
            self.pending_steps += int(cmd.get("n", 1))
        elif kind == "set_param":
            engine.apply_param(self.state, cmd["path"], cmd["value"])
        elif kind == "brush":
            self._apply_brush(cmd)
        elif kind == "snapshot":
            path = self.snapshot_dir / f"state_{self.state.t:08d}.snap"
            save_snapshot(self.state, path)
            if client is not None:
                client.push(json.dumps({"type": "snapshot_saved", "path": str(path)}))

    def _brush_cells(self, x: int, y: int, radius: int) -> np.ndarray:
        sub = self.state.substrate
        offs = np.arange(-radius, radius + 1)
        dx, dy = np.meshgrid(offs, offs)
        inside = dx * dx + dy * dy <= radius * radius
        xs = (x + dx[inside]) % sub.width
        ys = (y + dy[inside]) % sub.height
        return np.unique(ys * sub.width + xs)

    def _apply_brush(self, cmd: dict) -> None:
        """Paint the front buffer between steps."""
        state = self.state
        front = state.substrate.front
        cells = self._brush_cells(int(cmd["x"]), int(cmd["y"]), int(cmd["radius"]))
        amount = np.float32(cmd.get("amount", 1.0))
        tool = cmd["tool"]
        if tool == "energy":
            front.plane("energy").ravel()[cells] += amount
        elif tool == "kill":
            front.genome_index.ravel()[cells] = -1
        elif tool == "seed_organism":
            t = state.t
            g = rngmod.stream(state.master_seed, t, "brush_seed", self._brush_counter)
            self._brush_counter += 1
            genome = init_genome(g, state.pool.innovations)
            slot = state.pool.admit(genome, parents=(), birth_step=t)
            if slot is None:
                log.warning("brush seed rejected: pool full")
                return
            front.genome_index.ravel()[cells] = slot
            front.plane("infrastructure").ravel()[cells] = amount
            front.rotation.ravel()[cells] = 0

    # ------------------------------------------------------------------
    # publishing (runs on the engine thread; front buffer is stable here)

    def _telemetry(self) -> str:
        state = self.state
        step_now = state.t
        if self._metrics_cache is None or step_now - self._metrics_cache[0] >= _METRICS_STRIDE:
            m = msc_of_substrate(state.substrate)
            d = diversity(state.pool, state.rates.c1, state.rates.c2, state.rates.c3)
            self._metrics_cache = (step_now, m.total, d.mean_distance)
        row = census(state.substrate, state.pool)
        return json.dumps(
            {
                "type": "telemetry",
                "step": row.step,
                "fps": round(self._fps, 3),
                "live_genomes": row.live_genomes,
                "total_energy": row.total_energy,
                "total_infrastructure": row.total_infrastructure,
                "msc": self._metrics_cache[1],
                "mean_distance": self._metrics_cache[2],
                "paused": not self.running,
            }
        )

    def _frame_bytes(self) -> bytes:
        frame = render_rgb(self.state.substrate)
        head = FRAME_MAGIC + struct.pack(
            "<IHH", self.state.t & 0xFFFFFFFF, frame.width, frame.height
        )
        return head + frame.tobytes()

    def _publish(self, stepped: bool) -> None:
        now = time.monotonic()
        with self._clients_lock:
            clients = list(self._clients)
        telemetry_msg = None
        frame_msg = None
        for client in clients:
            with client.lock:
                subs = list(client.subs.items())
            for stream, sub in subs:
                if now < sub.next_due:
                    continue
                if stream == "frame":
                    # Never re-send an unchanged world: frames flow only
                    # when the simulation has stepped since the last one.
                    if client.last_frame_step == self.state.t:
                        continue
                    if frame_msg is None:
                        frame_msg = self._frame_bytes()
                    client.push_frame(frame_msg)
                    client.last_frame_step = self.state.t
                else:
                    if telemetry_msg is None:
                        telemetry_msg = self._telemetry()
                    client.push(telemetry_msg)
                sub.next_due += sub.interval
                if sub.next_due < now:
                    sub.next_due = now + sub.interval

    # ------------------------------------------------------------------
    # socket side

    async def _handler(self, ws) -> None:
        loop = asyncio.get_running_loop()
        client = _Client(ws, loop)
        with self._clients_lock:
            self._clients.add(client)
        drain = asyncio.create_task(client.drain())
        try:
            async for raw in ws:
                reply = self._handle_message(client, raw)
                if reply is not None:
                    await ws.send(json.dumps(reply))
        except Exception:
            log.debug("client connection closed", exc_info=True)
        finally:
            drain.cancel()
            with self._clients_lock:
                self._clients.discard(client)

    def _handle_message(self, client: _Client, raw) -> dict | None:
        if isinstance(raw, bytes):
            return {"type": "error", "msg": "binary messages are not accepted"}
        try:
            msg = json.loads(raw)
        except json.JSONDecodeError:
            return {"type": "error", "msg": "not valid JSON"}
        if not isinstance(msg, dict) or not isinstance(msg.get("type"), str):
            return {"type": "error", "msg": "message must be an object with a type"}
        kind = msg["type"]

        if kind in ("pause", "resume"):
            self._enqueue(client, {"type": kind})
            return {"type": "ack", "cmd": kind}

        if kind == "step":
            n = msg.get("n", 1)
            if not isinstance(n, int) or isinstance(n, bool) or n < 1:
                return {"type": "error", "msg": "step.n must be a positive integer"}
            self._enqueue(client, {"type": "step", "n": n})
            return {"type": "ack", "cmd": "step", "n": n}

        if kind == "set_param":
            path = msg.get("path")
            value = msg.get("value")
            if not isinstance(path, str):
                return {"type": "error", "msg": "set_param.path must be a string"}
            try:
                engine.validate_param(path, value)
            except ValueError as e:
                return {"type": "error", "msg": str(e)}
            self._enqueue(client, {"type": "set_param", "path": path, "value": value})
            return {"type": "ack", "cmd": "set_param", "path": path}

        if kind == "brush":
            err = _check_brush(msg, self.state.substrate.width, self.state.substrate.height)
            if err:
                return {"type": "error", "msg": err}
            self._enqueue(client, msg)
            return {"type": "ack", "cmd": "brush", "tool": msg["tool"]}

        if kind == "subscribe":
            stream = msg.get("stream")
            fps = msg.get("fps", 10.0)
            if stream not in ("frame", "telemetry"):
                return {"type": "error", "msg": "subscribe.stream must be 'frame' or 'telemetry'"}
            if not isinstance(fps, (int, float)) or isinstance(fps, bool) or not 0 < fps <= 120:
                return {"type": "error", "msg": "subscribe.fps must be in (0, 120]"}
            with client.lock:
                client.subs[stream] = _Subscription(1.0 / float(fps), time.monotonic())
            self._wake.set()
            return {"type": "ack", "cmd": "subscribe", "stream": stream}

        if kind == "snapshot":
            self._enqueue(client, {"type": "snapshot"})
            return {"type": "ack", "cmd": "snapshot"}

        if kind == "describe_params":
            return {"type": "params", "items": engine.describe_params(self.state)}

        return {"type": "error", "msg": f"unknown message type {kind!r}"}

    def _enqueue(self, client: _Client, cmd: dict) -> None:
        with self._cmd_lock:
            self._commands.append((client, cmd))
        self._wake.set()

    # ------------------------------------------------------------------
    # lifecycle

    def start(self) -> tuple[str, int]:
        """Spawn the socket loop and engine thread; returns the bound address."""
        self._loop_thread = threading.Thread(target=self._run_loop, name="evoca-socket", daemon=True)
        self._loop_thread.start()
        self._started.wait()
        self._thread = threading.Thread(target=self._engine_loop, name="evoca-engine", daemon=True)
        self._thread.start()
        assert self._bound is not None
        return self._bound

    def _run_loop(self) -> None:
        asyncio.run(self._amain())

    async def _amain(self) -> None:
        from websockets.asyncio.server import serve

        self._loop = asyncio.get_running_loop()
        self._shutdown = asyncio.Event()
        cfg = self.state.config.serve
        async with serve(self._handler, cfg.host, cfg.port) as server:
            sock = next(iter(server.sockets))
            host, port = sock.getsockname()[:2]
            self._bound = (host, port)
            self._started.set()
            await self._shutdown.wait()

    def stop(self) -> None:
        self._stop.set()
        self._wake.set()
        if self._thread is not None:
            self._thread.join(timeout=10)
        if self._loop is not None and self._shutdown is not None:
            self._loop.call_soon_threadsafe(self._shutdown.set)
        if self._loop_thread is not None:
            self._loop_thread.join(timeout=10)


def _check_brush(msg: dict, width: int, height: int) -> str | None:
    tool = msg.get("tool")
    if tool not in BRUSH_TOOLS:
        return f"brush.tool must be one of {BRUSH_TOOLS}"
    for key in ("x", "y", "radius"):
        v = msg.get(key)
        if not isinstance(v, int) or isinstance(v, bool):
            return f"brush.{key} must be an integer"
    if not 0 <= msg["x"] < width or not 0 <= msg["y"] < height:
        return "brush position out of bounds"
    if not 0 <= msg["radius"] <= max(width, height):
        return "brush.radius out of range"
    amount = msg.get("amount", 1.0)
    if not isinstance(amount, (int, float)) or isinstance(amount, bool) or amount < 0:
        return "brush.amount must be a non-negative number"
    return None


def serve_forever(state: engine.SimState, snapshot_dir: str | Path = ".") -> None:
    """Blocking entry point used by the CLI."""
    server = SimServer(state, snapshot_dir)
    host, port = server.start()
    log.info("listening on ws://%s:%d", host, port)
    # flush so a parent process watching the pipe sees the port immediately
    print(f"listening on ws://{host}:{port}", flush=True)
    try:
        while True:
            time.sleep(0.5)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
