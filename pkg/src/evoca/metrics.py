"""Observables: structural complexity, genetic diversity, census rows.

The structural complexity measure compares a field against versions of
itself blurred by repeated 2x2 block averaging.  Each scale contributes
C_k = |O_{k,k+1} - (O_{k,k} + O_{k+1,k+1}) / 2| where O_{m,n} is the
mean elementwise product of scales m and n upsampled back to the
original resolution.  A field that looks the same blurred contributes
nothing; structure living at scale k shows up in C_k.

Sums here are deliberately order-free: block members are sorted before
adding and full-field reductions use exact summation, so rotating or
transposing the input changes nothing, not even the last bit.
"""

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numba
import numpy as np

from .neuroevo import SMALL_GENOME_CUTOFF, GenomePool
from .substrate import Substrate

__all__ = [
    "MscReport",
    "msc",
    "msc_of_substrate",
    "DiversityReport",
    "diversity",
    "CensusRow",
    "census",
    "MetricsWriter",
]


@dataclass(frozen=True)
class MscReport:
    """Per-scale complexity contributions and their sum."""

    contributions: tuple[float, ...]
    total: float
    side: int
    channel: Optional[str] = None


def _block_means(f: np.ndarray) -> np.ndarray:
    """Halve resolution by averaging 2x2 blocks, order-independently.

    The four members of each block are sorted before summation so any
    spatial permutation of the input that preserves block membership
    produces bit-identical output.
    """
    q = np.stack([f[0::2, 0::2], f[0::2, 1::2], f[1::2, 0::2], f[1::2, 1::2]])
    q = np.sort(q, axis=0)
    return ((q[0] + q[1]) + (q[2] + q[3])) * 0.25


def _overlap(a: np.ndarray, b: np.ndarray, side: int) -> float:
    """Mean elementwise product after nearest-neighbor upsampling to side."""
    fa = np.repeat(np.repeat(a, side // a.shape[0], axis=0), side // a.shape[1], axis=1)
    fb = np.repeat(np.repeat(b, side // b.shape[0], axis=0), side // b.shape[1], axis=1)
    return math.fsum((fa * fb).ravel().tolist()) / (side * side)


def msc(field: np.ndarray, n_scales: Optional[int] = None) -> MscReport:
    """Multi-scale complexity of a square power-of-two field.

    Uses as many scales as fit (down to 1x1) unless n_scales caps them.
    """
    f = np.asarray(field, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] != f.shape[1]:
        raise ValueError("field must be square")
    side = f.shape[0]
    if side < 2 or side & (side - 1):
        raise ValueError("field side must be a power of two >= 2")
    max_scales = side.bit_length() - 1
    k_max = max_scales if n_scales is None else min(n_scales, max_scales)
    if k_max < 1:
        raise ValueError("n_scales must be >= 1")

    fields = [f]
    for _ in range(k_max):
        fields.append(_block_means(fields[-1]))
    o_diag = [_overlap(g, g, side) for g in fields]
    contribs = []
    for k in range(k_max):
        cross = _overlap(fields[k], fields[k + 1], side)
        contribs.append(abs(cross - 0.5 * (o_diag[k] + o_diag[k + 1])))
    return MscReport(tuple(contribs), math.fsum(contribs), side)


def msc_of_substrate(sub: Substrate, channel: str = "infrastructure", sub_plane: int = 0) -> MscReport:
    """MSC of one front-buffer plane, center-cropped to a power-of-two square."""
    plane = sub.front.plane(channel, sub_plane)
    h, w = plane.shape
    side = 1 << min(h.bit_length() - 1, w.bit_length() - 1)
    y0 = (h - side) // 2
    x0 = (w - side) // 2
    report = msc(plane[y0 : y0 + side, x0 : x0 + side])
    return MscReport(report.contributions, report.total, side, channel)


@dataclass(frozen=True)
class DiversityReport:
    live_count: int
    mean_distance: float
    hist_edges: tuple[float, ...]
    hist_counts: tuple[int, ...]


@numba.njit(cache=True)
def _pairwise_distances(innov, weights, lengths, c1, c2, c3, cutoff, out):  # pragma: no cover
    n = lengths.shape[0]
    k = 0
    for i in range(n):
        for j in range(i + 1, n):
            la = lengths[i]
            lb = lengths[j]
            max_a = innov[i, la - 1] if la > 0 else -1
            max_b = innov[j, lb - 1] if lb > 0 else -1
            ia = 0
            ib = 0
            disjoint = 0
            excess = 0
            matched = 0
            diffs = 0.0
            while ia < la or ib < lb:
                if ia < la and ib < lb and innov[i, ia] == innov[j, ib]:
                    matched += 1
                    diffs += abs(weights[i, ia] - weights[j, ib])
                    ia += 1
                    ib += 1
                elif ib >= lb or (ia < la and innov[i, ia] < innov[j, ib]):
                    if innov[i, ia] > max_b:
                        excess += 1
                    else:
                        disjoint += 1
                    ia += 1
                else:
                    if innov[j, ib] > max_a:
                        excess += 1
                    else:
                        disjoint += 1
                    ib += 1
            size = la if la > lb else lb
            if la < cutoff and lb < cutoff:
                size = 1
            if size < 1:
                size = 1
            wbar = diffs / matched if matched > 0 else 0.0
            out[k] = c1 * excess / size + c2 * disjoint / size + c3 * wbar
            k += 1


def diversity(pool: GenomePool, c1: float = 1.0, c2: float = 1.0, c3: float = 0.4) -> DiversityReport:
    """Pairwise compatibility distance over live genomes.

    The mean uses exact summation over unordered pairs, so it cannot
    depend on slot enumeration order.  Fewer than two live genomes give
    a mean of zero and an empty histogram.

    The pair sweep runs in a compiled merge walk over innovation-sorted
    gene arrays; it reproduces compatibility_distance bit for bit (same
    accumulation order, all f64) while keeping a full 512-genome pool,
    130k+ pairs, in the tens of milliseconds.
    """
    slots = pool.live_slots()
    n = len(slots)
    if n < 2:
        return DiversityReport(n, 0.0, (), ())
    genomes = [pool.genome(s) for s in slots]
    width = max(1, max(len(g.connections) for g in genomes))
    innov = np.full((n, width), -1, dtype=np.int64)
    weights = np.zeros((n, width), dtype=np.float64)
    lengths = np.empty(n, dtype=np.int64)
    for row, g in enumerate(genomes):
        lengths[row] = len(g.connections)
        for col, gene in enumerate(g.connections):
            innov[row, col] = gene.innovation
            weights[row, col] = gene.weight
    dists = np.empty(n * (n - 1) // 2, dtype=np.float64)
    _pairwise_distances(innov, weights, lengths, c1, c2, c3, SMALL_GENOME_CUTOFF, dists)
    mean = math.fsum(dists.tolist()) / len(dists)
    counts, edges = np.histogram(dists, bins=10)
    return DiversityReport(
        n, mean, tuple(float(e) for e in edges), tuple(int(c) for c in counts)
    )


@dataclass(frozen=True)
class CensusRow:
    step: int
    live_genomes: int
    total_energy: float
    total_infrastructure: float
    extinctions: int


def census(sub: Substrate, pool: GenomePool, step: Optional[int] = None) -> CensusRow:
    """Population and stock totals at a step (defaults to the current one).

    ``extinctions`` counts lineages whose recorded death step equals the
    queried step.  Totals are float64 sums over the front buffer.
    """
    t = sub.step_counter if step is None else step
    front = sub.front
    return CensusRow(
        step=t,
        live_genomes=pool.live_count(),
        total_energy=float(front.plane("energy").sum(dtype=np.float64)),
        total_infrastructure=float(front.plane("infrastructure").sum(dtype=np.float64)),
        extinctions=len(pool.deaths_at(t)),
    )


class MetricsWriter:
    """Appends one CSV row per sample; creates the header on first write."""

    FIELDS = (
        "step",
        "total_energy",
        "total_infrastructure",
        "live_genomes",
        "mean_distance",
        "msc_total",
        "msc_per_scale",
        "extinctions",
    )

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._file = open(self.path, "w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._file)
        self._writer.writerow(self.FIELDS)

    def sample(self, sub: Substrate, pool: GenomePool) -> CensusRow:
        row = census(sub, pool)
        div = diversity(pool)
        m = msc_of_substrate(sub)
        self._writer.writerow(
            [
                row.step,
                repr(row.total_energy),
                repr(row.total_infrastructure),
                row.live_genomes,
                repr(div.mean_distance),
                repr(m.total),
                ";".join(repr(c) for c in m.contributions),
                row.extinctions,
            ]
        )
        self._file.flush()
        return row

    def close(self) -> None:
        self._file.close()

    def __enter__(self) -> "MetricsWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
