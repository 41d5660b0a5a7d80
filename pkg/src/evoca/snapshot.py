"""Whole-state serialization with bit-exact resume.

Layout: a fixed binary header (magic, version, dims, channel table,
step counter), raw little-endian planes in channel-table order followed
by the genome and rotation planes, then one length-prefixed JSON block
carrying the slot pool (genomes plus their cached dense parameters,
base64-encoded float32), the phylogeny, all counters, and the config.
Cached parameters are stored rather than regenerated so a resumed run
continues on exactly the bytes it left with.
"""

import base64
import json
import struct
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, config_to_dict, parse_config
from .engine import SimState
from .hypernet import DenseParams, N_ACTUATORS, N_SENSORS, generate_network, make_layout
from .neuroevo import (
    GenomePool,
    InnovationCounter,
    PhylogenyRecord,
    _Slot,
    genome_from_json,
    genome_to_json,
)
from .substrate import Substrate, create_substrate

__all__ = ["MAGIC", "VERSION", "save_snapshot", "load_snapshot", "SnapshotError"]

MAGIC = b"CRLS"
VERSION = 1


class SnapshotError(ValueError):
    """Raised for malformed, truncated, or incompatible snapshot files."""


def _b64(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f4").tobytes()).decode("ascii")


def _unb64(s: str, shape: tuple[int, ...]) -> np.ndarray:
    raw = base64.b64decode(s.encode("ascii"))
    arr = np.frombuffer(raw, dtype="<f4").reshape(shape)
    return arr.copy()


def save_snapshot(state: SimState, path: str | Path) -> None:
    """Write the complete simulation state to a file."""
    sub = state.substrate
    front = sub.front
    parts = [MAGIC, struct.pack("<HII", VERSION, sub.width, sub.height)]
    parts.append(struct.pack("<H", len(sub.specs)))
    for spec in sub.specs:
        name = spec.name.encode("utf-8")
        parts.append(struct.pack("<B", len(name)) + name + struct.pack("<B", spec.arity))
    parts.append(struct.pack("<Q", sub.step_counter))
    for spec in sub.specs:
        for sb in range(spec.arity):
            parts.append(np.ascontiguousarray(front.plane(spec.name, sb), dtype="<f4").tobytes())
    parts.append(np.ascontiguousarray(front.genome_index, dtype="<i4").tobytes())
    parts.append(np.ascontiguousarray(front.rotation, dtype=np.uint8).tobytes())

    pool = state.pool
    slots_json = []
    for i, s in enumerate(pool.slots):
        if s.state == "free":
            continue
        rec = pool.records[s.lineage_id]
        entry = {
            "slot": i,
            "state": s.state,
            "lineage": s.lineage_id,
            "parents": list(rec.parents),
            "birth": rec.birth_step,
            "death_step": s.death_step,
            **genome_to_json(s.genome),
        }
        if s.params is not None:
            p: DenseParams = s.params
            entry["params"] = {"w1": _b64(p.w1), "b1": _b64(p.b1), "w2": _b64(p.w2), "b2": _b64(p.b2)}
        slots_json.append(entry)

    blob = {
        "sim": {"seed": state.master_seed, "config": config_to_dict(state.config)},
        "pool": {
            "capacity": pool.capacity,
            "next_innovation": pool.innovations.next_innovation,
            "next_node_id": pool.innovations.next_node_id,
            "next_lineage": pool.next_lineage_id,
            "slots": slots_json,
        },
        "phylogeny": [
            {
                "lineage": r.lineage_id,
                "slot": r.slot,
                "parents": list(r.parents),
                "birth": r.birth_step,
                "death": r.death_step,
                "peak": r.peak_population,
            }
            for r in pool.records.values()
        ],
    }
    payload = json.dumps(blob, separators=(",", ":")).encode("utf-8")
    parts.append(struct.pack("<Q", len(payload)))
    parts.append(payload)

    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as f:
        f.write(b"".join(parts))
    tmp.replace(path)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise SnapshotError("snapshot truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_snapshot(path: str | Path, workers: int = 1) -> SimState:
    """Rebuild a SimState; resuming it reproduces the original run exactly."""
    with open(path, "rb") as f:
        rd = _Reader(f.read())

    if rd.take(4) != MAGIC:
        raise SnapshotError("bad magic; not a snapshot file")
    (version, width, height) = rd.unpack("<HII")
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    (n_channels,) = rd.unpack("<H")
    channels = []
    for _ in range(n_channels):
        (name_len,) = rd.unpack("<B")
        name = rd.take(name_len).decode("utf-8")
        (arity,) = rd.unpack("<B")
        channels.append((name, arity))
    (step_counter,) = rd.unpack("<Q")

    sub = create_substrate(width, height)
    expect = [(s.name, s.arity) for s in sub.specs]
    if channels != expect:
        raise SnapshotError(f"unexpected channel table {channels}")
    front = sub.front
    n = width * height
    for name, arity in channels:
        for sb in range(arity):
            raw = rd.take(4 * n)
            front.channels[name][sb] = np.frombuffer(raw, dtype="<f4").reshape(height, width)
    front.genome_index[:] = np.frombuffer(rd.take(4 * n), dtype="<i4").reshape(height, width)
    front.rotation[:] = np.frombuffer(rd.take(n), dtype=np.uint8).reshape(height, width)
    sub.step_counter = step_counter

    (json_len,) = rd.unpack("<Q")
    try:
        blob = json.loads(rd.take(json_len).decode("utf-8"))
    except json.JSONDecodeError as e:
        raise SnapshotError(f"corrupt metadata block: {e}") from None

    cfg = parse_config(blob["sim"]["config"])
    if (cfg.grid.width, cfg.grid.height) != (width, height):
        raise SnapshotError("config grid does not match plane dimensions")

    layout = make_layout(cfg.hypernet.hidden_size)
    hyper = cfg.hypernet

    def factory(genome):
        return generate_network(genome, layout, hyper.tau, hyper.w_max)

    pmeta = blob["pool"]
    pool = GenomePool(
        capacity=pmeta["capacity"],
        net_factory=factory,
        counter=InnovationCounter(pmeta["next_innovation"], pmeta["next_node_id"]),
    )
    pool.next_lineage_id = pmeta["next_lineage"]

    for entry in pmeta["slots"]:
        genome = genome_from_json(entry)
        params = None
        if "params" in entry:
            p = entry["params"]
            b1 = _unb64(p["b1"], (-1,))
            hidden = len(b1)
            params = DenseParams(
                w1=_unb64(p["w1"], (hidden, N_SENSORS)),
                b1=b1,
                w2=_unb64(p["w2"], (N_ACTUATORS, hidden)),
                b2=_unb64(p["b2"], (N_ACTUATORS,)),
            )
        pool.slots[entry["slot"]] = _Slot(
            state=entry["state"],
            genome=genome,
            params=params,
            lineage_id=entry["lineage"],
            death_step=entry["death_step"],
        )
    pool._recount()

    for r in blob["phylogeny"]:
        pool.records[r["lineage"]] = PhylogenyRecord(
            lineage_id=r["lineage"],
            slot=r["slot"],
            parents=tuple(r["parents"]),
            birth_step=r["birth"],
            death_step=r["death"],
            peak_population=r["peak"],
        )

    live_refs = set(front.genome_index[front.genome_index >= 0].tolist())
    for s in live_refs:
        if not pool.is_live(int(s)):
            raise SnapshotError(f"cell references non-live slot {s}")

    return SimState(substrate=sub, pool=pool, config=cfg, master_seed=blob["sim"]["seed"], workers=workers)
