"""Local update rules: energy cycle, conversion, signaling, expansion.

All rules operate on the back buffer of a substrate mid-step, in a fixed
phase order, and are written so that results do not depend on cell
iteration order.  The delicate part is exploration: several cells may
ship infrastructure into the same target in one step, and the sums and
tie-breaks there are defined to be exactly reproducible (value-sorted
arrival order, slot-position and source-index tie-breaks) so that a
naive per-cell reference implementation agrees bit for bit.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np

from . import rng as rngmod
from .neuroevo import EvolutionRates, GenomePool, crossover, mutate
from .substrate import PlaneSet

__all__ = [
    "KERNEL_OFFSETS",
    "PhysicsParams",
    "ActionField",
    "AdoptionEvent",
    "AdoptionEvents",
    "rotation_permutation",
    "energy_cycle",
    "apply_invest_liquidate",
    "write_communication",
    "resolve_exploration",
    "apply_radiation",
    "census_deaths",
]

# Moore neighborhood in counterclockwise order starting at east.
# Entry j is the offset at angle j * 45 degrees, as (dx, dy).
KERNEL_OFFSETS = np.array(
    [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)],
    dtype=np.int64,
)
_OFF_DX = KERNEL_OFFSETS[:, 0]
_OFF_DY = KERNEL_OFFSETS[:, 1]


def rotation_permutation(r: int) -> np.ndarray:
    """Neighbor visit order for a cell whose heading is r.

    Offsets are ranked by angular distance from the heading, nearer
    first, with the counterclockwise side winning ties.  This collapses
    to [r, r+1, r-1, r+2, r-2, r+3, r-3, r+4] mod 8.
    """
    if not 0 <= r < 8:
        raise ValueError("rotation must be in 0..7")
    deltas = (0, 1, -1, 2, -2, 3, -3, 4)
    return np.array([(r + d) % 8 for d in deltas], dtype=np.int64)


# Row r is rotation_permutation(r); lets vectorized code permute per cell.
PERM_TABLE = np.stack([rotation_permutation(r) for r in range(8)])


@dataclass
class PhysicsParams:
    """Environmental constants.  Mutable so they can be steered live."""

    cycle_amplitude: float = 0.1
    cycle_period: int = 100
    energy_source_map: Optional[np.ndarray] = None  # (H, W) float32, default uniform 1
    drain_fraction: float = 0.05
    invest_rate: float = 1.0
    liquidate_rate: float = 1.0
    invest_efficiency: float = 0.9
    liquidate_efficiency: float = 0.9
    explore_fraction: float = 0.5
    upkeep: float = 0.02
    decay_on_starvation: float = 0.1
    death_threshold: float = 1e-3

    def validate(self) -> None:
        if self.cycle_period < 2:
            raise ValueError("cycle_period must be >= 2")
        if self.cycle_amplitude < 0:
            raise ValueError("cycle_amplitude must be non-negative")
        for name in ("drain_fraction", "invest_efficiency", "liquidate_efficiency",
                     "explore_fraction", "decay_on_starvation"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        for name in ("invest_rate", "liquidate_rate", "upkeep", "death_threshold"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class ActionField:
    """Controller outputs for every cell that was occupied at sensing time.

    ``cells`` holds ascending linear indices; the row i arrays describe
    the organism at ``cells[i]``.  All values lie in (0, 1).
    """

    cells: np.ndarray      # (n,) int64
    invest: np.ndarray     # (n,) float32
    liquidate: np.ndarray  # (n,) float32
    comm: np.ndarray       # (n, 3) float32
    explore: np.ndarray    # (n, 8) float32

    @staticmethod
    def empty() -> "ActionField":
        return ActionField(
            cells=np.empty(0, dtype=np.int64),
            invest=np.empty(0, dtype=np.float32),
            liquidate=np.empty(0, dtype=np.float32),
            comm=np.empty((0, 3), dtype=np.float32),
            explore=np.empty((0, 8), dtype=np.float32),
        )


@dataclass(frozen=True)
class AdoptionEvent:
    """One successful takeover during exploration, used for radiation."""

    target: int         # linear index of the explored cell
    source: int         # linear index of the winning explorer
    winner_slot: int    # genome slot shipped by the winner
    defender_slot: int  # genome previously holding the target, -1 if empty
    direction: int      # geometric offset index of the shipment
    quantity: float     # infrastructure that arrived from the winner


@dataclass
class AdoptionEvents:
    """All takeovers of one step, column-wise, in ascending target order.

    Thousands of adoptions can land per step on a busy grid, so the
    batch is kept as parallel arrays; ``aslist`` materializes per-event
    records when convenience beats speed.
    """

    target: np.ndarray         # (m,) int64
    source: np.ndarray         # (m,) int64
    winner_slot: np.ndarray    # (m,) int32
    defender_slot: np.ndarray  # (m,) int32
    direction: np.ndarray      # (m,) int64
    quantity: np.ndarray       # (m,) float32

    def __len__(self) -> int:
        return len(self.target)

    @staticmethod
    def empty() -> "AdoptionEvents":
        return AdoptionEvents(
            target=np.empty(0, dtype=np.int64),
            source=np.empty(0, dtype=np.int64),
            winner_slot=np.empty(0, dtype=np.int32),
            defender_slot=np.empty(0, dtype=np.int32),
            direction=np.empty(0, dtype=np.int64),
            quantity=np.empty(0, dtype=np.float32),
        )

    def aslist(self) -> list[AdoptionEvent]:
        return [
            AdoptionEvent(
                target=int(self.target[k]),
                source=int(self.source[k]),
                winner_slot=int(self.winner_slot[k]),
                defender_slot=int(self.defender_slot[k]),
                direction=int(self.direction[k]),
                quantity=float(self.quantity[k]),
            )
            for k in range(len(self.target))
        ]


def energy_cycle(planes: PlaneSet, t: int, params: PhysicsParams) -> None:
    """Apply the day/night source term at step t.

    rho = A * sin(2 pi t / P).  In daytime (rho > 0) every cell gains
    rho times its source-map value; at night the drain removes a
    fraction d * |rho| of standing energy, which can never push a cell
    negative.
    """
    rho = params.cycle_amplitude * math.sin(2.0 * math.pi * t / params.cycle_period)
    energy = planes.plane("energy")
    if rho > 0.0:
        if params.energy_source_map is not None:
            energy += np.float32(rho) * params.energy_source_map
        else:
            energy += np.float32(rho)
    elif rho < 0.0:
        energy -= np.float32(params.drain_fraction * -rho) * energy


def apply_invest_liquidate(planes: PlaneSet, actions: ActionField, params: PhysicsParams) -> None:
    """Convert energy to infrastructure and back, then charge upkeep.

    Per occupied cell, in order: invest moves a*min(E, invest_rate) out
    of energy and lands it scaled by the invest efficiency; liquidate
    does the reverse on the updated stocks.  Upkeep then costs
    upkeep * I energy; a cell that cannot pay zeroes its energy and its
    infrastructure decays by the starvation fraction instead.  Cells
    whose infrastructure drops below the death threshold die (genome
    cleared; stocks stay in place).
    """
    gi = planes.genome_index.ravel()
    keep = gi[actions.cells] >= 0
    idx = actions.cells[keep]
    if len(idx) == 0:
        return
    energy = planes.plane("energy").ravel()
    infra = planes.plane("infrastructure").ravel()
    e = energy[idx]
    i = infra[idx]

    d_e = actions.invest[keep] * np.minimum(e, np.float32(params.invest_rate))
    e = e - d_e
    i = i + np.float32(params.invest_efficiency) * d_e
    d_i = actions.liquidate[keep] * np.minimum(i, np.float32(params.liquidate_rate))
    i = i - d_i
    e = e + np.float32(params.liquidate_efficiency) * d_i

    cost = np.float32(params.upkeep) * i
    fed = e >= cost
    e = np.where(fed, e - cost, np.float32(0.0))
    i = np.where(fed, i, i - np.float32(params.decay_on_starvation) * i)

    energy[idx] = e
    infra[idx] = i
    dead = idx[i < np.float32(params.death_threshold)]
    gi[dead] = -1


def write_communication(planes: PlaneSet, actions: ActionField) -> None:
    """Publish signal actuators; decay signals on unoccupied cells by 0.9."""
    comm = planes.channels["communication"]
    flat = comm.reshape(3, -1)
    gi = planes.genome_index.ravel()
    keep = gi[actions.cells] >= 0
    idx = actions.cells[keep]
    if len(idx):
        flat[:, idx] = actions.comm[keep].T
    empty = np.flatnonzero(gi < 0)
    if len(empty):
        flat[:, empty] *= np.float32(0.9)


def resolve_exploration(
    planes: PlaneSet, actions: ActionField, params: PhysicsParams
) -> AdoptionEvents:
    """Ship infrastructure outward and resolve contested targets.

    Each surviving organism picks the strongest of its eight explore
    actuators (lowest slot index wins ties), maps that slot through its
    rotation to a geometric direction, and ships
    q = (explore_fraction * actuator) * infrastructure to the neighbor.
    All withdrawals happen first.  Arrivals at a target are then added
    largest-first (ties by source index), which makes the sums
    independent of storage order.  The largest single arrival is the
    winner; it takes the cell's genome and rotation only if its shipment
    exceeds the infrastructure already sitting there after withdrawals.

    Returns adoption events in ascending target order.
    """
    gi = planes.genome_index.ravel()
    alive = gi[actions.cells] >= 0
    cells = actions.cells[alive]
    if len(cells) == 0:
        return AdoptionEvents.empty()
    explore = actions.explore[alive]
    n = len(cells)
    h, w = planes.genome_index.shape

    k_star = np.argmax(explore, axis=1)
    rot = planes.rotation.ravel()[cells].astype(np.int64)
    direction = PERM_TABLE[rot, k_star]

    infra = planes.plane("infrastructure").ravel()
    amount = explore[np.arange(n), k_star]
    q = (np.float32(params.explore_fraction) * amount) * infra[cells]

    x = cells % w
    y = cells // w
    tx = (x + _OFF_DX[direction]) % w
    ty = (y + _OFF_DY[direction]) % h
    target = ty * w + tx

    infra[cells] -= q

    # Group shipments by target: within a target, big arrivals first,
    # source index breaking ties.
    order = np.lexsort((cells, -q.astype(np.float64), target))
    out_t = np.empty(n, dtype=np.int64)
    out_s = np.empty(n, dtype=np.int64)
    out_w = np.empty(n, dtype=np.int32)
    out_d = np.empty(n, dtype=np.int32)
    out_dir = np.empty(n, dtype=np.int64)
    out_q = np.empty(n, dtype=np.float32)
    m = _explore_kernel(
        target[order], q[order], cells[order], direction[order],
        infra, gi, planes.rotation.ravel(),
        out_t, out_s, out_w, out_d, out_dir, out_q,
    )
    return AdoptionEvents(
        target=out_t[:m], source=out_s[:m], winner_slot=out_w[:m],
        defender_slot=out_d[:m], direction=out_dir[:m], quantity=out_q[:m],
    )


@numba.njit(cache=True)
def _explore_kernel(t_ord, q_ord, s_ord, d_ord, infra, gi, rot,
                    out_t, out_s, out_w, out_d, out_dir, out_q):  # pragma: no cover
    """Walk target groups in sorted order; adds stay serial per group.

    All genome reads happen before any genome writes so a source's slot
    is what it held when the step's sensing ran, even if that source
    cell is itself adopted this step.
    """
    n = t_ord.shape[0]
    m = 0
    i = 0
    while i < n:
        t = t_ord[i]
        before = infra[t]
        j = i
        while j < n and t_ord[j] == t:
            infra[t] += q_ord[j]
            j += 1
        if q_ord[i] > before:
            out_t[m] = t
            out_s[m] = s_ord[i]
            out_w[m] = gi[s_ord[i]]
            out_d[m] = gi[t]
            out_dir[m] = d_ord[i]
            out_q[m] = q_ord[i]
            m += 1
        i = j
    for k in range(m):
        gi[out_t[k]] = out_w[k]
        rot[out_t[k]] = np.uint8(out_dir[k])
    return m


def apply_radiation(
    events: AdoptionEvents,
    pool: GenomePool,
    rates: EvolutionRates,
    planes: PlaneSet,
    master_seed: int,
    step: int,
) -> None:
    """Roll variation on each adoption, in ascending target order.

    One step-level stream supplies two uniforms per event (row 0 the
    merge roll, row 1 the mutation roll).  A merge (crossover with the
    displaced live defender, winner treated as fitter) is tried first;
    otherwise a mutation may fire.  Each offspring is then built from
    its own stream keyed by the target cell ("merge" or "mutate"
    purpose), admitted to the pool, and installed at the target; if the
    pool cannot take another genome the target keeps the winner's.
    """
    n = len(events)
    if n == 0:
        return
    rolls = rngmod.stream(master_seed, step, "radiation").random((2, n))
    defender = events.defender_slot
    live = pool.live_mask()
    can_merge = defender >= 0
    can_merge &= defender != events.winner_slot
    can_merge &= live[np.where(can_merge, defender, 0)]
    do_merge = can_merge & (rolls[0] < rates.p_merge)
    do_mutate = ~do_merge & (rolls[1] < rates.p_radiation)

    gi = planes.genome_index.ravel()
    for k in np.flatnonzero(do_merge | do_mutate):
        if not pool.can_admit():
            break  # slots only fill during this loop, never free up
        target = int(events.target[k])
        winner = int(events.winner_slot[k])
        if do_merge[k]:
            g = rngmod.stream(master_seed, step, "merge", target)
            child = crossover(pool.genome(winner), pool.genome(int(defender[k])), g)
            parents = (pool.lineage(winner), pool.lineage(int(defender[k])))
        else:
            g = rngmod.stream(master_seed, step, "mutate", target)
            child = mutate(pool.genome(winner), rates, g, pool.innovations)
            parents = (pool.lineage(winner),)
        slot = pool.admit(child, parents=parents, birth_step=step + 1)
        if slot is not None:
            gi[target] = slot


def census_deaths(planes: PlaneSet, pool: GenomePool, step: int) -> list[int]:
    """Count cells per slot, retire slots that lost every cell.

    Returns the newly dead slot indices.  ``step`` is recorded as the
    death step (callers pass the post-step time).
    """
    gi = planes.genome_index
    occupied = gi[gi >= 0]
    counts = np.bincount(occupied, minlength=pool.capacity)
    return pool.update_census(counts, step)
