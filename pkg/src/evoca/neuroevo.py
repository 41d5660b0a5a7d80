"""Innovation-numbered genomes, their variation operators, and the slot pool.

Genomes describe small feed-forward pattern networks: five inputs (two
coordinate pairs plus a constant), two outputs (a weight signal and a
bias signal), and whatever hidden structure evolution grows.  Every
connection carries a globally unique innovation number handed out by a
shared counter, which is what lets crossover align genes from different
lineages by historical origin instead of by topology.

Structural rule kept throughout: the *full* gene graph, disabled genes
included, stays acyclic.  That makes enable/disable toggles always safe
and means a crossover child (whose edge set equals the fitter parent's)
is acyclic by construction.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional

import numpy as np

__all__ = [
    "ACTIVATIONS",
    "NodeGene",
    "ConnGene",
    "CppnGenome",
    "InnovationCounter",
    "EvolutionRates",
    "init_genome",
    "mutate",
    "crossover",
    "compatibility_distance",
    "GenomePool",
    "PhylogenyRecord",
    "DEFAULT_POOL_CAPACITY",
    "genome_to_json",
    "genome_from_json",
]

log = logging.getLogger(__name__)

ACTIVATIONS = ("sine", "gaussian", "sigmoid", "tanh", "identity", "abs")

N_INPUTS = 5   # u1, v1, u2, v2, constant 1
N_OUTPUTS = 2  # weight signal, bias signal
INPUT_IDS = (0, 1, 2, 3, 4)
OUTPUT_IDS = (5, 6)
FIRST_FREE_NODE_ID = 7

DEFAULT_POOL_CAPACITY = 512
SMALL_GENOME_CUTOFF = 20  # below this, distance is not normalized by size


@dataclass(frozen=True)
class NodeGene:
    id: int
    role: str  # "input" | "hidden" | "output"
    activation: str


@dataclass(frozen=True)
class ConnGene:
    innovation: int
    src: int
    dst: int
    weight: float
    enabled: bool


@dataclass(frozen=True)
class CppnGenome:
    """Immutable genome: nodes plus connections sorted by innovation."""

    nodes: tuple[NodeGene, ...]
    connections: tuple[ConnGene, ...]

    def node_ids(self) -> set[int]:
        return {n.id for n in self.nodes}

    def validate(self) -> None:
        """Raise ValueError on any structural corruption."""
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node ids")
        known = set(ids)
        innovs = [c.innovation for c in self.connections]
        if any(b <= a for a, b in zip(innovs, innovs[1:])):
            raise ValueError("innovation numbers must be strictly increasing")
        pairs = set()
        roles = {n.id: n.role for n in self.nodes}
        for c in self.connections:
            if c.src not in known or c.dst not in known:
                raise ValueError(f"connection {c.innovation} references unknown node")
            if roles[c.dst] == "input":
                raise ValueError("connections may not terminate at an input")
            if roles[c.src] == "output":
                raise ValueError("connections may not originate at an output")
            if (c.src, c.dst) in pairs:
                raise ValueError(f"duplicate connection {c.src}->{c.dst}")
            pairs.add((c.src, c.dst))
        if _has_cycle(known, [(c.src, c.dst) for c in self.connections]):
            raise ValueError("gene graph contains a cycle")


def _has_cycle(node_ids: Iterable[int], edges: list[tuple[int, int]]) -> bool:
    """Kahn's algorithm over the full edge set (enabled or not)."""
    indeg = {n: 0 for n in node_ids}
    out: dict[int, list[int]] = {n: [] for n in node_ids}
    for s, d in edges:
        indeg[d] += 1
        out[s].append(d)
    queue = [n for n, d in indeg.items() if d == 0]
    seen = 0
    while queue:
        n = queue.pop()
        seen += 1
        for m in out[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                queue.append(m)
    return seen != len(indeg)


def _creates_cycle(genome: CppnGenome, src: int, dst: int) -> bool:
    """Would adding src->dst close a cycle in the full gene graph?

    Equivalent to: is src reachable from dst.
    """
    if src == dst:
        return True
    out: dict[int, list[int]] = {}
    for c in genome.connections:
        out.setdefault(c.src, []).append(c.dst)
    stack = [dst]
    seen = {dst}
    while stack:
        n = stack.pop()
        if n == src:
            return True
        for m in out.get(n, ()):
            if m not in seen:
                seen.add(m)
                stack.append(m)
    return False


class InnovationCounter:
    """Monotone source of innovation numbers and node ids.

    Shared by every genome in a pool so that historical markings are
    comparable across lineages.  No deduplication: two mutations adding
    the same edge in the same step get distinct numbers.
    """

    def __init__(self, next_innovation: int = 0, next_node_id: int = FIRST_FREE_NODE_ID):
        self.next_innovation = next_innovation
        self.next_node_id = next_node_id

    def new_innovation(self) -> int:
        n = self.next_innovation
        self.next_innovation += 1
        return n

    def new_node_id(self) -> int:
        n = self.next_node_id
        self.next_node_id += 1
        return n


@dataclass
class EvolutionRates:
    """Probabilities and magnitudes for the variation operators."""

    weight_perturb_prob: float = 0.8
    weight_perturb_sigma: float = 0.5
    weight_reset_prob: float = 0.05
    add_connection_prob: float = 0.05
    add_node_prob: float = 0.03
    toggle_enable_prob: float = 0.01
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 0.4
    p_radiation: float = 0.02
    p_merge: float = 0.2

    def validate(self) -> None:
        for name in (
            "weight_perturb_prob",
            "weight_reset_prob",
            "add_connection_prob",
            "add_node_prob",
            "toggle_enable_prob",
            "p_radiation",
            "p_merge",
        ):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.weight_perturb_sigma <= 0:
            raise ValueError("weight_perturb_sigma must be positive")
        for name in ("c1", "c2", "c3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def _base_nodes() -> tuple[NodeGene, ...]:
    nodes = [NodeGene(i, "input", "identity") for i in INPUT_IDS]
    nodes += [NodeGene(i, "output", "tanh") for i in OUTPUT_IDS]
    return tuple(nodes)


def init_genome(rng: np.random.Generator, counter: InnovationCounter) -> CppnGenome:
    """Minimal fully connected genome: every input wired to both outputs.

    Topology is fixed; only the ten weights vary with the stream, drawn
    uniformly from [-1, 1).
    """
    conns = []
    for src in INPUT_IDS:
        for dst in OUTPUT_IDS:
            conns.append(
                ConnGene(
                    innovation=counter.new_innovation(),
                    src=src,
                    dst=dst,
                    weight=float(rng.uniform(-1.0, 1.0)),
                    enabled=True,
                )
            )
    return CppnGenome(nodes=_base_nodes(), connections=tuple(conns))


def mutate(
    genome: CppnGenome,
    rates: EvolutionRates,
    rng: np.random.Generator,
    counter: InnovationCounter,
) -> CppnGenome:
    """Return a mutated copy; the input genome is never modified.

    Order of operations is fixed (weights, toggles, add-connection,
    add-node) so a given stream yields a reproducible child.  With all
    rates zero this is the identity.
    """
    conns = list(genome.connections)
    nodes = list(genome.nodes)

    for i, c in enumerate(conns):
        if rng.random() < rates.weight_reset_prob:
            conns[i] = replace(c, weight=float(rng.uniform(-1.0, 1.0)))
        elif rng.random() < rates.weight_perturb_prob:
            w = c.weight + float(rng.normal(0.0, rates.weight_perturb_sigma))
            conns[i] = replace(c, weight=w)

    for i, c in enumerate(conns):
        if rng.random() < rates.toggle_enable_prob:
            conns[i] = replace(c, enabled=not c.enabled)

    work = CppnGenome(tuple(nodes), tuple(conns))

    if rng.random() < rates.add_connection_prob:
        roles = {n.id: n.role for n in work.nodes}
        taken = {(c.src, c.dst) for c in work.connections}
        ordered = sorted(roles)
        candidates = [
            (s, d)
            for s in ordered
            if roles[s] != "output"
            for d in ordered
            if roles[d] != "input" and (s, d) not in taken and not _creates_cycle(work, s, d)
        ]
        if candidates:
            s, d = candidates[int(rng.integers(len(candidates)))]
            conns.append(
                ConnGene(
                    innovation=counter.new_innovation(),
                    src=s,
                    dst=d,
                    weight=float(rng.uniform(-1.0, 1.0)),
                    enabled=True,
                )
            )
            work = CppnGenome(tuple(nodes), tuple(conns))

    if rng.random() < rates.add_node_prob:
        enabled = [i for i, c in enumerate(conns) if c.enabled]
        if enabled:
            pick = enabled[int(rng.integers(len(enabled)))]
            old = conns[pick]
            nid = counter.new_node_id()
            act = ACTIVATIONS[int(rng.integers(len(ACTIVATIONS)))]
            conns[pick] = replace(old, enabled=False)
            nodes.append(NodeGene(nid, "hidden", act))
            # Incoming edge takes weight 1 so the split is initially neutral.
            conns.append(ConnGene(counter.new_innovation(), old.src, nid, 1.0, True))
            conns.append(ConnGene(counter.new_innovation(), nid, old.dst, old.weight, True))

    child = CppnGenome(tuple(nodes), tuple(conns))
    return child


def _align_genes(a: CppnGenome, b: CppnGenome):
    """Merge-walk both connection lists by innovation number.

    Yields (gene_a | None, gene_b | None) pairs; both present means a
    matching gene.
    """
    ia, ib = 0, 0
    ca, cb = a.connections, b.connections
    while ia < len(ca) or ib < len(cb):
        if ib >= len(cb):
            yield ca[ia], None
            ia += 1
        elif ia >= len(ca):
            yield None, cb[ib]
            ib += 1
        elif ca[ia].innovation == cb[ib].innovation:
            yield ca[ia], cb[ib]
            ia += 1
            ib += 1
        elif ca[ia].innovation < cb[ib].innovation:
            yield ca[ia], None
            ia += 1
        else:
            yield None, cb[ib]
            ib += 1


def crossover(fitter: CppnGenome, other: CppnGenome, rng: np.random.Generator) -> CppnGenome:
    """Recombine two genomes; the first argument is treated as fitter.

    Matching genes take their weight from either parent with equal
    probability.  Disjoint and excess genes come from the fitter parent
    only, so the child's edge set (and node set) equals the fitter's.
    Any gene disabled in either parent is disabled in the child with
    probability 0.75.
    """
    out = []
    for ga, gb in _align_genes(fitter, other):
        if ga is None:
            continue  # disjoint/excess in the less fit parent: dropped
        if gb is None:
            chosen = ga
            broken = not ga.enabled
        else:
            chosen = ga if rng.random() < 0.5 else gb
            chosen = replace(ga, weight=chosen.weight)
            broken = not (ga.enabled and gb.enabled)
        enabled = (not broken) or (rng.random() >= 0.75)
        out.append(replace(chosen, enabled=enabled))
    return CppnGenome(nodes=fitter.nodes, connections=tuple(out))


def compatibility_distance(
    a: CppnGenome,
    b: CppnGenome,
    c1: float = 1.0,
    c2: float = 1.0,
    c3: float = 0.4,
) -> float:
    """Weighted sum of excess, disjoint, and matched-weight divergence.

    Excess genes lie beyond the other parent's highest innovation;
    disjoint genes are the remaining unmatched ones.  Counts are
    normalized by the larger genome size unless both genomes have fewer
    than 20 genes, in which case the divisor is 1.
    """
    max_a = a.connections[-1].innovation if a.connections else -1
    max_b = b.connections[-1].innovation if b.connections else -1
    disjoint = 0
    excess = 0
    diffs = 0.0
    matched = 0
    for ga, gb in _align_genes(a, b):
        if ga is not None and gb is not None:
            matched += 1
            diffs += abs(ga.weight - gb.weight)
        elif ga is not None:
            excess += 1 if ga.innovation > max_b else 0
            disjoint += 1 if ga.innovation <= max_b else 0
        else:
            excess += 1 if gb.innovation > max_a else 0
            disjoint += 1 if gb.innovation <= max_a else 0
    n = max(len(a.connections), len(b.connections))
    if len(a.connections) < SMALL_GENOME_CUTOFF and len(b.connections) < SMALL_GENOME_CUTOFF:
        n = 1
    n = max(n, 1)
    wbar = diffs / matched if matched else 0.0
    return c1 * excess / n + c2 * disjoint / n + c3 * wbar


# --------------------------------------------------------------------------
# Slot pool and phylogeny


@dataclass
class PhylogenyRecord:
    lineage_id: int
    slot: int
    parents: tuple[int, ...]
    birth_step: int
    death_step: Optional[int] = None
    peak_population: int = 0


@dataclass
class _Slot:
    state: str = "free"  # "free" | "live" | "dead"
    genome: Optional[CppnGenome] = None
    params: object = None
    lineage_id: int = -1
    death_step: int = -1


class GenomePool:
    """Fixed-capacity slot table for live genomes plus lineage records.

    Admission fills the lowest free slot; once none are free it evicts
    the dead slot with the oldest death step (lowest index on ties).
    When every slot is live, admission is rejected.  Dense network
    parameters are built once per admission by the injected factory and
    cached on the slot.
    """

    def __init__(
        self,
        capacity: int = DEFAULT_POOL_CAPACITY,
        net_factory: Optional[Callable[[CppnGenome], object]] = None,
        counter: Optional[InnovationCounter] = None,
    ):
        if capacity < 1:
            raise ValueError("pool capacity must be positive")
        self.capacity = capacity
        self.net_factory = net_factory
        self.innovations = counter if counter is not None else InnovationCounter()
        self.slots = [_Slot() for _ in range(capacity)]
        self.next_lineage_id = 0
        self.records: dict[int, PhylogenyRecord] = {}
        self._n_live = 0
        self._n_filled = 0  # live + dead (anything not free)
        self._live_mask = np.zeros(capacity, dtype=bool)

    def _recount(self) -> None:
        """Rebuild the cached occupancy counters from the slot table.

        Needed after code (the snapshot loader) assigns slots directly.
        """
        self._n_live = sum(1 for s in self.slots if s.state == "live")
        self._n_filled = sum(1 for s in self.slots if s.state != "free")
        self._live_mask = np.array([s.state == "live" for s in self.slots], dtype=bool)

    # -- admission ----------------------------------------------------

    def can_admit(self) -> bool:
        """True when a free or evictable (dead) slot exists."""
        return self._n_filled < self.capacity or self._n_live < self._n_filled

    def admit(
        self,
        genome: CppnGenome,
        parents: tuple[int, ...] = (),
        birth_step: int = 0,
    ) -> Optional[int]:
        """Place a genome; return its slot index or None when all live."""
        if not self.can_admit():
            return None
        idx = -1
        if self._n_filled < self.capacity:
            for i, s in enumerate(self.slots):
                if s.state == "free":
                    idx = i
                    break
            self._n_filled += 1
        else:
            oldest = None
            for i, s in enumerate(self.slots):
                if s.state == "dead" and (oldest is None or s.death_step < oldest[0]):
                    oldest = (s.death_step, i)
            idx = oldest[1]
        lineage = self.next_lineage_id
        self.next_lineage_id += 1
        params = self.net_factory(genome) if self.net_factory is not None else None
        self.slots[idx] = _Slot("live", genome, params, lineage, -1)
        self.records[lineage] = PhylogenyRecord(lineage, idx, tuple(parents), birth_step)
        self._n_live += 1
        self._live_mask[idx] = True
        return idx

    # -- accessors ----------------------------------------------------

    def is_live(self, slot: int) -> bool:
        return 0 <= slot < self.capacity and self.slots[slot].state == "live"

    def genome(self, slot: int) -> CppnGenome:
        s = self.slots[slot]
        if s.genome is None:
            raise KeyError(f"slot {slot} is empty")
        return s.genome

    def params(self, slot: int):
        return self.slots[slot].params

    def lineage(self, slot: int) -> int:
        return self.slots[slot].lineage_id

    def record_for_slot(self, slot: int) -> PhylogenyRecord:
        return self.records[self.slots[slot].lineage_id]

    def live_slots(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self._live_mask)]

    def live_count(self) -> int:
        return self._n_live

    def live_mask(self) -> np.ndarray:
        """Boolean liveness per slot.  Treat as read-only."""
        return self._live_mask

    # -- census support -------------------------------------------------

    def update_census(self, counts: np.ndarray, step: int) -> list[int]:
        """Record populations; kill slots whose count hit zero.

        Returns the newly dead slot indices.  ``counts`` must have one
        entry per slot (cells currently referencing it).
        """
        newly_dead = []
        for i, s in enumerate(self.slots):
            if s.state != "live":
                continue
            c = int(counts[i])
            rec = self.records[s.lineage_id]
            if c == 0:
                s.state = "dead"
                s.death_step = step
                rec.death_step = step
                self._n_live -= 1
                self._live_mask[i] = False
                newly_dead.append(i)
            elif c > rec.peak_population:
                rec.peak_population = c
        return newly_dead

    def deaths_at(self, step: int) -> list[int]:
        return [r.lineage_id for r in self.records.values() if r.death_step == step]


# --------------------------------------------------------------------------
# JSON


def genome_to_json(genome: CppnGenome) -> dict:
    return {
        "nodes": [{"id": n.id, "role": n.role, "act": n.activation} for n in genome.nodes],
        "conns": [
            {"innov": c.innovation, "from": c.src, "to": c.dst, "w": c.weight, "on": c.enabled}
            for c in genome.connections
        ],
    }


def genome_from_json(data: dict) -> CppnGenome:
    nodes = tuple(NodeGene(n["id"], n["role"], n["act"]) for n in data["nodes"])
    conns = tuple(
        ConnGene(c["innov"], c["from"], c["to"], float(c["w"]), bool(c["on"]))
        for c in data["conns"]
    )
    g = CppnGenome(nodes, conns)
    g.validate()
    return g
