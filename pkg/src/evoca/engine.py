"""Step scheduler: sense, act, apply physics, swap.

A step reads sensors for every occupied cell from the front buffer,
runs each organism's controller over its cells in one batched call,
applies the physics phases to the back buffer in a fixed order, then
swaps.  Work is grouped by genome so a genome's whole population goes
through a single matrix multiply; groups can be fanned out to worker
threads, and because groups touch disjoint output rows the result is
identical for any worker count.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numba
import numpy as np

from . import rng as rngmod
from .config import ExperimentConfig
from .hypernet import forward_batched, generate_network, make_layout
from .neuroevo import GenomePool, init_genome
from .physics import (
    KERNEL_OFFSETS,
    PERM_TABLE,
    ActionField,
    apply_invest_liquidate,
    apply_radiation,
    census_deaths,
    energy_cycle,
    resolve_exploration,
    rotation_permutation,
    write_communication,
)
from .substrate import Substrate, create_substrate

__all__ = [
    "SimState",
    "Hook",
    "new_state",
    "seed_initial_population",
    "gather_sensors",
    "build_action_field",
    "step",
    "run",
    "digest",
    "apply_param",
    "describe_params",
]

log = logging.getLogger(__name__)

_OFF_DX = KERNEL_OFFSETS[:, 0]
_OFF_DY = KERNEL_OFFSETS[:, 1]

_SENSE_PLANES = (("energy", 0), ("infrastructure", 0), ("communication", 0),
                 ("communication", 1), ("communication", 2))


@dataclass
class SimState:
    """Everything a running simulation owns."""

    substrate: Substrate
    pool: GenomePool
    config: ExperimentConfig
    master_seed: int
    workers: int = 1
    last_adoptions: int = 0
    last_extinctions: int = 0

    @property
    def t(self) -> int:
        return self.substrate.step_counter

    @property
    def physics(self):
        return self.config.physics

    @property
    def rates(self):
        return self.config.evolution


@dataclass(frozen=True)
class Hook:
    """Callback invoked after any step where t % every == 0."""

    every: int
    fn: Callable[[SimState], None]


def new_state(config: ExperimentConfig, workers: int = 1, seed_population: bool = True) -> SimState:
    """Build a ready-to-run state from a validated config."""
    sub = create_substrate(config.grid.width, config.grid.height)
    layout = make_layout(config.hypernet.hidden_size)
    hyper = config.hypernet

    def factory(genome):
        return generate_network(genome, layout, hyper.tau, hyper.w_max)

    pool = GenomePool(net_factory=factory)
    state = SimState(substrate=sub, pool=pool, config=config, master_seed=config.seed, workers=workers)
    if seed_population and config.initial_population > 0:
        seed_initial_population(state, config.initial_population)
    return state


def seed_initial_population(state: SimState, count: int) -> None:
    """Scatter fresh organisms onto distinct cells of the front buffer.

    Placement and headings come from one stream, each genome's weights
    from its own indexed stream, so the result is order-independent.
    """
    sub = state.substrate
    if count > state.pool.capacity:
        raise ValueError("initial population exceeds pool capacity")
    if count > sub.n_cells:
        raise ValueError("initial population exceeds cell count")
    t = sub.step_counter
    g = rngmod.stream(state.master_seed, t, "seed_cells")
    cells = g.choice(sub.n_cells, size=count, replace=False)
    rots = g.integers(0, 8, size=count)
    front = sub.front
    gi = front.genome_index.ravel()
    energy = front.plane("energy").ravel()
    infra = front.plane("infrastructure").ravel()
    rot = front.rotation.ravel()
    for i in range(count):
        genome = init_genome(rngmod.stream(state.master_seed, t, "init_genome", i), state.pool.innovations)
        slot = state.pool.admit(genome, parents=(), birth_step=t)
        if slot is None:
            raise RuntimeError("pool rejected a seed genome")
        c = int(cells[i])
        gi[c] = slot
        energy[c] = 1.0
        infra[c] = 1.0
        rot[c] = rots[i]


def gather_sensors(sub: Substrate, x: int, y: int) -> np.ndarray:
    """Reference sensor read for one cell: (45,) float32, front buffer.

    Slot 0 is the cell itself; slots 1..8 are the Moore neighbors in the
    cell's rotation-permuted order.  Each slot contributes energy,
    infrastructure, and the three signal planes, in that order.
    """
    front = sub.front
    perm = rotation_permutation(int(front.rotation[y, x]))
    planes = [front.plane(name, sb) for name, sb in _SENSE_PLANES]
    out = np.empty(45, dtype=np.float32)
    for c, p in enumerate(planes):
        out[c] = p[y, x]
    for s in range(8):
        dx, dy = KERNEL_OFFSETS[perm[s]]
        nx = (x + int(dx)) % sub.width
        ny = (y + int(dy)) % sub.height
        for c, p in enumerate(planes):
            out[(s + 1) * 5 + c] = p[ny, nx]
    return out


@numba.njit(cache=True)
def _gather_kernel(planes, occ, rot, perm, offx, offy, w, h, out):  # pragma: no cover
    for i in range(occ.shape[0]):
        c = occ[i]
        x = c % w
        y = c // w
        for ch in range(5):
            out[i, ch] = planes[ch, c]
        for s in range(8):
            j = perm[rot[i], s]
            nc = ((y + offy[j]) % h) * w + (x + offx[j]) % w
            base = (s + 1) * 5
            for ch in range(5):
                out[i, base + ch] = planes[ch, nc]


def _gather_batch(sub: Substrate, occ: np.ndarray) -> np.ndarray:
    """Vectorized gather_sensors for all occupied cells at once."""
    front = sub.front
    n = len(occ)
    planes = np.empty((5, sub.height * sub.width), dtype=np.float32)
    for c, (name, sb) in enumerate(_SENSE_PLANES):
        planes[c] = front.plane(name, sb).ravel()
    rot = front.rotation.ravel()[occ].astype(np.int64)
    out = np.empty((n, 45), dtype=np.float32)
    _gather_kernel(planes, occ, rot, PERM_TABLE, _OFF_DX, _OFF_DY, sub.width, sub.height, out)
    return out


def build_action_field(state: SimState) -> ActionField:
    """Sense and evaluate every occupied cell, grouped by genome."""
    sub = state.substrate
    gi = sub.front.genome_index.ravel()
    occ = np.flatnonzero(gi >= 0).astype(np.int64)
    if len(occ) == 0:
        return ActionField.empty()
    sensors = _gather_batch(sub, occ)
    slots = gi[occ]
    order = np.argsort(slots, kind="stable")
    sorted_slots = slots[order]
    sorted_sensors = sensors[order]  # contiguous runs per genome
    bounds = np.flatnonzero(np.r_[True, sorted_slots[1:] != sorted_slots[:-1]])
    bounds = np.r_[bounds, len(sorted_slots)]
    out_sorted = np.empty((len(occ), 13), dtype=np.float32)

    def eval_group(a: int, b: int) -> None:
        params = state.pool.params(int(sorted_slots[a]))
        out_sorted[a:b] = forward_batched(params, sorted_sensors[a:b])

    spans = list(zip(bounds[:-1], bounds[1:]))
    if state.workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=state.workers) as pool_:
            list(pool_.map(lambda ab: eval_group(*ab), spans))
    else:
        for a, b in spans:
            eval_group(a, b)

    out = np.empty_like(out_sorted)
    out[order] = out_sorted

    return ActionField(
        cells=occ,
        invest=out[:, 0],
        liquidate=out[:, 1],
        comm=out[:, 2:5],
        explore=out[:, 5:13],
    )


def step(state: SimState) -> None:
    """Advance one step: sense from front, mutate back, swap."""
    sub = state.substrate
    t = sub.step_counter
    sub.begin_step()
    actions = build_action_field(state)
    back = sub.back
    energy_cycle(back, t, state.physics)
    apply_invest_liquidate(back, actions, state.physics)
    write_communication(back, actions)
    events = resolve_exploration(back, actions, state.physics)
    apply_radiation(events, state.pool, state.rates, back, state.master_seed, t)
    newly_dead = census_deaths(back, state.pool, t + 1)
    sub.swap_buffers()
    state.last_adoptions = len(events)
    state.last_extinctions = len(newly_dead)


def run(
    state: SimState,
    steps: int,
    hooks: tuple[Hook, ...] = (),
    should_stop: Optional[Callable[[], bool]] = None,
) -> None:
    """Run a fixed number of steps, firing hooks on their cadence.

    Hook failures are logged and swallowed; the simulation never stops
    for an observer.
    """
    for _ in range(steps):
        if should_stop is not None and should_stop():
            break
        step(state)
        for h in hooks:
            if state.t % h.every == 0:
                try:
                    h.fn(state)
                except Exception:
                    log.exception("hook failed at step %d", state.t)


# --------------------------------------------------------------------------
# State digest

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

try:
    from numba import njit

    @njit(cache=True)
    def _fnv1a(h: np.uint64, data: np.ndarray) -> np.uint64:
        prime = np.uint64(0x100000001B3)
        for k in range(data.size):
            h = (h ^ np.uint64(data[k])) * prime
        return h

    _HAVE_NUMBA = True
except Exception:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def _fnv1a(h, data):
        h = int(h)
        for b in data.tobytes():
            h = ((h ^ b) * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
        return h


def digest(state: SimState) -> int:
    """64-bit FNV-1a over every front-buffer plane.

    Planes are hashed in channel-table order (sub-planes in order), then
    the genome plane, then rotation.  Used to compare whole states.
    """
    front = state.substrate.front
    h = _FNV_OFFSET
    for spec in state.substrate.specs:
        arr = front.channels[spec.name]
        for sb in range(spec.arity):
            h = int(_fnv1a(np.uint64(h), np.ascontiguousarray(arr[sb]).view(np.uint8).reshape(-1)))
    h = int(_fnv1a(np.uint64(h), np.ascontiguousarray(front.genome_index).view(np.uint8).reshape(-1)))
    h = int(_fnv1a(np.uint64(h), np.ascontiguousarray(front.rotation).reshape(-1)))
    return h


# --------------------------------------------------------------------------
# Live parameter steering

_PARAM_RANGES: dict[str, tuple[float, float]] = {
    "physics.cycle_amplitude": (0.0, 2.0),
    "physics.cycle_period": (2, 100000),
    "physics.drain_fraction": (0.0, 1.0),
    "physics.invest_rate": (0.0, 10.0),
    "physics.liquidate_rate": (0.0, 10.0),
    "physics.invest_efficiency": (0.0, 1.0),
    "physics.liquidate_efficiency": (0.0, 1.0),
    "physics.explore_fraction": (0.0, 1.0),
    "physics.upkeep": (0.0, 1.0),
    "physics.decay_on_starvation": (0.0, 1.0),
    "physics.death_threshold": (0.0, 1.0),
    "evolution.weight_perturb_prob": (0.0, 1.0),
    "evolution.weight_perturb_sigma": (1e-6, 5.0),
    "evolution.weight_reset_prob": (0.0, 1.0),
    "evolution.add_connection_prob": (0.0, 1.0),
    "evolution.add_node_prob": (0.0, 1.0),
    "evolution.toggle_enable_prob": (0.0, 1.0),
    "evolution.c1": (0.0, 10.0),
    "evolution.c2": (0.0, 10.0),
    "evolution.c3": (0.0, 10.0),
    "evolution.p_radiation": (0.0, 1.0),
    "evolution.p_merge": (0.0, 1.0),
    "hypernet.tau": (0.0, 0.99),
    "hypernet.w_max": (0.1, 10.0),
}

_INT_PARAMS = {"physics.cycle_period"}


def describe_params(state: SimState) -> list[dict]:
    """Enumerate steerable parameters with current values and ranges."""
    items = []
    for path, (lo, hi) in _PARAM_RANGES.items():
        section, name = path.split(".")
        obj = getattr(state.config, section)
        items.append({"path": path, "value": getattr(obj, name), "min": lo, "max": hi})
    return items


def validate_param(path: str, value) -> float:
    """Check a steering request without touching any state."""
    if path not in _PARAM_RANGES:
        raise ValueError(f"unknown parameter {path!r}")
    lo, hi = _PARAM_RANGES[path]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"{path} expects a number")
    if path in _INT_PARAMS:
        if value != int(value):
            raise ValueError(f"{path} must be an integer")
        value = int(value)
    else:
        value = float(value)
    if not lo <= value <= hi:
        raise ValueError(f"{path} must be in [{lo}, {hi}]")
    return value


def apply_param(state: SimState, path: str, value) -> None:
    """Set one steerable parameter; raises ValueError on anything off."""
    value = validate_param(path, value)
    section, name = path.split(".")
    obj = getattr(state.config, section)
    old = getattr(obj, name)
    setattr(obj, name, value)
    try:
        obj.validate()
    except ValueError:
        setattr(obj, name, old)
        raise
