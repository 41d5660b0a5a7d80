"""Dense controller parameters generated by querying a pattern network.

Each organism's controller is a fixed-shape two-layer perceptron.  Its
weights are not evolved directly: a genome encodes a small compositional
pattern network (see neuroevo) that is queried once per weight with the
coordinates of the two neurons it connects.  Geometry therefore shapes
connectivity, and a compact genome can paint an entire weight matrix.

A query vector is (u_src, v_src, u_dst, v_dst, 1).  Output 0 is the
weight signal, output 1 the bias signal.  Bias queries use (0, 0) as the
source coordinate.  Signals inside [-tau, tau] express no connection at
all; beyond tau the remaining magnitude is rescaled into [0, w_max].
"""

import math
from dataclasses import dataclass

import numpy as np

from .neuroevo import N_INPUTS, CppnGenome

__all__ = [
    "N_SENSORS",
    "N_ACTUATORS",
    "NeuronLayout",
    "DenseParams",
    "make_layout",
    "evaluate_cppn",
    "evaluate_cppn_batch",
    "generate_network",
    "forward",
    "forward_batched",
]

N_SENSOR_SLOTS = 9       # self plus eight neighbors
N_SENSE_SUBCHANNELS = 5  # energy, infrastructure, comm x3
N_SENSORS = N_SENSOR_SLOTS * N_SENSE_SUBCHANNELS
N_ACTUATORS = 13         # invest, liquidate, comm x3, explore x8
DEFAULT_HIDDEN = 16
DEFAULT_TAU = 0.2
DEFAULT_W_MAX = 3.0

# Outputs sit strictly inside (0, 1): clamp away the float32 saturation
# of the sigmoid for large logits.
_SIG_HI = np.nextafter(np.float32(1.0), np.float32(0.0))
_SIG_LO = np.float32(2.0 ** -126)


@dataclass(frozen=True)
class NeuronLayout:
    """Coordinates assigned to sensor, hidden, and actuator neurons.

    Sensors form a 9x5 grid (slot-major), hidden and actuator neurons
    single rows, all spread over [-1, 1] with v distinguishing layers.
    """

    input_coords: np.ndarray   # (N_SENSORS, 2) float64
    hidden_coords: np.ndarray  # (hidden, 2)
    output_coords: np.ndarray  # (N_ACTUATORS, 2)

    @property
    def hidden_size(self) -> int:
        return len(self.hidden_coords)


def make_layout(hidden: int = DEFAULT_HIDDEN) -> NeuronLayout:
    if hidden < 1:
        raise ValueError("hidden size must be positive")
    slots = np.linspace(-1.0, 1.0, N_SENSOR_SLOTS)
    subs = np.linspace(-1.0, 1.0, N_SENSE_SUBCHANNELS)
    inputs = np.array([(u, v) for u in slots for v in subs], dtype=np.float64)
    hid = np.stack([np.linspace(-1.0, 1.0, hidden), np.zeros(hidden)], axis=1)
    outs = np.stack([np.linspace(-1.0, 1.0, N_ACTUATORS), np.zeros(N_ACTUATORS)], axis=1)
    return NeuronLayout(inputs, hid, outs)


@dataclass
class DenseParams:
    """Controller parameters, all float32."""

    w1: np.ndarray  # (hidden, N_SENSORS)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (N_ACTUATORS, hidden)
    b2: np.ndarray  # (N_ACTUATORS,)


# --------------------------------------------------------------------------
# Pattern-network evaluation

_ACT_FUNCS = {
    "sine": np.sin,
    "gaussian": lambda x: np.exp(-np.square(x)),
    "sigmoid": lambda x: 1.0 / (1.0 + np.exp(-x)),
    "tanh": np.tanh,
    "identity": lambda x: x,
    "abs": np.abs,
}


def _topo_order(genome: CppnGenome) -> list[int]:
    """Deterministic topological order of the full gene graph.

    Kahn's algorithm with an id-sorted frontier; includes disabled
    edges, which is valid because the full graph is kept acyclic.
    """
    indeg = {n.id: 0 for n in genome.nodes}
    out: dict[int, list[int]] = {n.id: [] for n in genome.nodes}
    for c in genome.connections:
        indeg[c.dst] += 1
        out[c.src].append(c.dst)
    import heapq

    frontier = [n for n, d in indeg.items() if d == 0]
    heapq.heapify(frontier)
    order = []
    while frontier:
        n = heapq.heappop(frontier)
        order.append(n)
        for m in out[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                heapq.heappush(frontier, m)
    if len(order) != len(indeg):
        raise ValueError("gene graph contains a cycle")
    return order


def evaluate_cppn_batch(genome: CppnGenome, queries: np.ndarray) -> np.ndarray:
    """Evaluate the pattern network on an (n, 5) query block.

    Returns (n, 2) float64: weight signal and bias signal per row.
    Incoming contributions per node are summed in connection-list order,
    so a given genome always produces bit-identical results.
    """
    q = np.asarray(queries, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] != N_INPUTS:
        raise ValueError(f"queries must be (n, {N_INPUTS})")
    roles = {n.id: n for n in genome.nodes}
    input_pos = {nid: i for i, nid in enumerate(sorted(n.id for n in genome.nodes if n.role == "input"))}
    incoming: dict[int, list] = {}
    for c in genome.connections:
        if c.enabled:
            incoming.setdefault(c.dst, []).append(c)
    vals: dict[int, np.ndarray] = {}
    for nid in _topo_order(genome):
        node = roles[nid]
        if node.role == "input":
            vals[nid] = q[:, input_pos[nid]]
            continue
        total = np.zeros(len(q))
        for c in incoming.get(nid, ()):
            total = total + c.weight * vals[c.src]
        vals[nid] = _ACT_FUNCS[node.activation](total)
    out_ids = sorted(n.id for n in genome.nodes if n.role == "output")
    return np.stack([vals[i] for i in out_ids], axis=1)


def evaluate_cppn(genome: CppnGenome, u1: float, v1: float, u2: float, v2: float, bias: float = 1.0):
    """Single-query convenience wrapper; returns (weight_signal, bias_signal)."""
    out = evaluate_cppn_batch(genome, np.array([[u1, v1, u2, v2, bias]]))
    return float(out[0, 0]), float(out[0, 1])


# --------------------------------------------------------------------------
# Parameter generation


def _express(signals: np.ndarray, tau: float, w_max: float) -> np.ndarray:
    """Threshold-and-rescale raw signals into connection weights.

    |s| <= tau expresses nothing; beyond tau, the remaining magnitude is
    scaled into (0, w_max], saturating at w_max.  Non-finite signals
    express nothing.
    """
    s = np.asarray(signals, dtype=np.float64)
    mag = np.abs(s)
    scaled = np.sign(s) * np.minimum((mag - tau) / (1.0 - tau), 1.0) * w_max
    out = np.where(mag > tau, scaled, 0.0)
    out = np.where(np.isfinite(s), out, 0.0)
    return out.astype(np.float32)


def generate_network(
    genome: CppnGenome,
    layout: NeuronLayout,
    tau: float = DEFAULT_TAU,
    w_max: float = DEFAULT_W_MAX,
) -> DenseParams:
    """Query the pattern network once per parameter and build DenseParams.

    Weight queries are (src_coord, dst_coord, 1) and read the weight
    signal; bias queries are ((0, 0), dst_coord, 1) and read the bias
    signal.  Row order is destination-major so the reshape lands each
    query at its matrix position.
    """
    if not 0.0 <= tau < 1.0:
        raise ValueError("tau must be in [0, 1)")
    if w_max <= 0:
        raise ValueError("w_max must be positive")
    inp, hid, out = layout.input_coords, layout.hidden_coords, layout.output_coords
    nh, ni, no = len(hid), len(inp), len(out)

    blocks = []
    for dst, src in ((hid, inp), (out, hid)):
        d = np.repeat(dst, len(src), axis=0)
        s = np.tile(src, (len(dst), 1))
        blocks.append(np.column_stack([s, d, np.ones(len(d))]))
    zeros = np.zeros((nh + no, 2))
    bias_dst = np.vstack([hid, out])
    blocks.append(np.column_stack([zeros, bias_dst, np.ones(nh + no)]))

    queries = np.vstack(blocks)
    signals = evaluate_cppn_batch(genome, queries)

    n_w1 = nh * ni
    n_w2 = no * nh
    w1 = _express(signals[:n_w1, 0], tau, w_max).reshape(nh, ni)
    w2 = _express(signals[n_w1 : n_w1 + n_w2, 0], tau, w_max).reshape(no, nh)
    biases = _express(signals[n_w1 + n_w2 :, 1], tau, w_max)
    return DenseParams(w1=w1, b1=biases[:nh].copy(), w2=w2, b2=biases[nh:].copy())


# --------------------------------------------------------------------------
# Controller forward pass


def forward(params: DenseParams, sensors: np.ndarray) -> np.ndarray:
    """Run one sensor vector through the controller; returns (13,) float32."""
    s = np.asarray(sensors, dtype=np.float32)
    return forward_batched(params, s[None, :])[0]


def forward_batched(params: DenseParams, sensors: np.ndarray) -> np.ndarray:
    """Run an (n, 45) float32 sensor block through the controller.

    Hidden layer is tanh, output layer a sigmoid clamped to stay inside
    the open interval (0, 1) even where float32 would saturate.
    """
    s = np.asarray(sensors, dtype=np.float32)
    if s.ndim != 2 or s.shape[1] != N_SENSORS:
        raise ValueError(f"sensors must be (n, {N_SENSORS})")
    z1 = s @ params.w1.T
    z1 += params.b1
    np.tanh(z1, out=z1)
    z2 = z1 @ params.w2.T
    z2 += params.b2
    np.negative(z2, out=z2)
    np.exp(z2, out=z2)
    z2 += np.float32(1.0)
    np.reciprocal(z2, out=z2)
    np.clip(z2, _SIG_LO, _SIG_HI, out=z2)
    return z2
