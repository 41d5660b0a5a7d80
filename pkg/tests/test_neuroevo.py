import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import genome_with_innovations
from evoca.neuroevo import (
    EvolutionRates,
    GenomePool,
    InnovationCounter,
    compatibility_distance,
    crossover,
    init_genome,
    mutate,
)
from evoca.rng import stream


def _rng(i=0):
    return stream(99, 0, "test_neuroevo", i)


# -- init -------------------------------------------------------------------


def test_init_genome_topology():
    c = InnovationCounter()
    g = init_genome(_rng(), c)
    g.validate()
    assert len(g.nodes) == 7
    assert len(g.connections) == 10
    assert [cg.innovation for cg in g.connections] == list(range(10))
    assert all(cg.enabled for cg in g.connections)
    assert all(-1.0 <= cg.weight < 1.0 for cg in g.connections)


def test_init_same_topology_different_weights():
    c = InnovationCounter()
    a = init_genome(_rng(1), c)
    b = init_genome(_rng(2), c)
    assert [(x.src, x.dst) for x in a.connections] == [(x.src, x.dst) for x in b.connections]
    assert any(x.weight != y.weight for x, y in zip(a.connections, b.connections))
    # Innovation numbers keep counting across genomes.
    assert b.connections[0].innovation == 10


# -- mutation ---------------------------------------------------------------


def test_mutate_all_rates_zero_is_identity():
    c = InnovationCounter()
    g = init_genome(_rng(), c)
    rates = EvolutionRates(
        weight_perturb_prob=0.0,
        weight_reset_prob=0.0,
        add_connection_prob=0.0,
        add_node_prob=0.0,
        toggle_enable_prob=0.0,
    )
    child = mutate(g, rates, _rng(3), c)
    assert child == g


def test_mutate_perturb_prob_one_touches_every_weight():
    c = InnovationCounter()
    g = init_genome(_rng(), c)
    rates = EvolutionRates(
        weight_perturb_prob=1.0,
        weight_reset_prob=0.0,
        add_connection_prob=0.0,
        add_node_prob=0.0,
        toggle_enable_prob=0.0,
    )
    child = mutate(g, rates, _rng(4), c)
    assert all(a.weight != b.weight for a, b in zip(child.connections, g.connections))
    assert [(a.src, a.dst) for a in child.connections] == [(b.src, b.dst) for b in g.connections]


def test_mutate_never_modifies_parent():
    c = InnovationCounter()
    g = init_genome(_rng(), c)
    snapshot = (g.nodes, g.connections)
    rates = EvolutionRates(add_connection_prob=1.0, add_node_prob=1.0, toggle_enable_prob=0.5)
    for i in range(20):
        mutate(g, rates, _rng(100 + i), c)
    assert (g.nodes, g.connections) == snapshot


def test_add_node_splits_connection():
    c = InnovationCounter()
    g = init_genome(_rng(), c)
    rates = EvolutionRates(
        weight_perturb_prob=0.0,
        weight_reset_prob=0.0,
        add_connection_prob=0.0,
        add_node_prob=1.0,
        toggle_enable_prob=0.0,
    )
    child = mutate(g, rates, _rng(5), c)
    child.validate()
    assert len(child.nodes) == 8
    assert len(child.connections) == 12
    new_node = child.nodes[-1].id
    assert new_node >= 7
    split = [cg for cg in g.connections if not child.connections[cg.innovation].enabled]
    assert len(split) == 1
    incoming = [cg for cg in child.connections if cg.dst == new_node]
    outgoing = [cg for cg in child.connections if cg.src == new_node]
    assert len(incoming) == 1 and incoming[0].weight == 1.0
    assert len(outgoing) == 1 and outgoing[0].weight == split[0].weight
    assert incoming[0].src == split[0].src and outgoing[0].dst == split[0].dst


def test_add_connection_respects_structure():
    c = InnovationCounter()
    g = init_genome(_rng(), c)
    rates = EvolutionRates(
        weight_perturb_prob=0.0,
        weight_reset_prob=0.0,
        add_connection_prob=1.0,
        add_node_prob=1.0,
        toggle_enable_prob=0.0,
    )
    # Grow for a while; every intermediate genome must stay valid.
    for i in range(60):
        g = mutate(g, rates, _rng(200 + i), c)
        g.validate()
    assert len(g.nodes) > 7


def test_mutation_with_heavy_toggles_keeps_full_graph_acyclic():
    c = InnovationCounter()
    g = init_genome(_rng(), c)
    rates = EvolutionRates(add_connection_prob=0.7, add_node_prob=0.5, toggle_enable_prob=0.9)
    for i in range(80):
        g = mutate(g, rates, _rng(300 + i), c)
    g.validate()


def test_mutate_same_stream_reproduces():
    c1 = InnovationCounter()
    g = init_genome(_rng(), c1)
    rates = EvolutionRates()
    c2 = InnovationCounter(c1.next_innovation, c1.next_node_id)
    a = mutate(g, rates, _rng(7), c1)
    b = mutate(g, rates, _rng(7), c2)
    assert a == b


# -- crossover --------------------------------------------------------------


def test_crossover_self_is_identity():
    c = InnovationCounter()
    g = init_genome(_rng(8), c)
    child = crossover(g, g, _rng(9))
    assert child == g


def test_crossover_child_edges_equal_fitter():
    a = genome_with_innovations([0, 1, 2, 3, 5], [1.0, 1.0, 1.0, 0.3, -0.2])
    b = genome_with_innovations([0, 1, 2, 4], [0.5, 1.5, 0.5, 0.9])
    for i in range(30):
        child = crossover(a, b, _rng(400 + i))
        child.validate()
        assert [cg.innovation for cg in child.connections] == [0, 1, 2, 3, 5]
        assert [(cg.src, cg.dst) for cg in child.connections] == [
            (cg.src, cg.dst) for cg in a.connections
        ]
        for cg, pa in zip(child.connections, a.connections):
            pb = {x.innovation: x for x in b.connections}.get(cg.innovation)
            allowed = {pa.weight} if pb is None else {pa.weight, pb.weight}
            assert cg.weight in allowed


def test_crossover_disabled_rule_rate():
    # One matching gene disabled in the other parent: the child disables
    # it about three quarters of the time.
    a = genome_with_innovations([0, 1], [1.0, 1.0])
    b = genome_with_innovations([0, 1], [0.0, 0.0], enabled=[False, True])
    hits = 0
    n = 4000
    for i in range(n):
        child = crossover(a, b, _rng(1000 + i))
        if not child.connections[0].enabled:
            hits += 1
        assert child.connections[1].enabled  # enabled in both parents
    assert 0.71 <= hits / n <= 0.79


# -- distance ---------------------------------------------------------------


def test_distance_identical_is_zero():
    c = InnovationCounter()
    g = init_genome(_rng(10), c)
    assert compatibility_distance(g, g) == 0.0


def test_distance_symmetry():
    a = genome_with_innovations([0, 1, 2, 3, 5], [1.0, 1.0, 1.0, 0.3, -0.2])
    b = genome_with_innovations([0, 1, 2, 4], [0.5, 1.5, 0.5, 0.9])
    assert compatibility_distance(a, b) == compatibility_distance(b, a)


def test_distance_hand_example():
    # 3 matching genes with mean |dw| 0.5, two disjoint, one excess,
    # both genomes small: 1*1 + 1*2 + 0.4*0.5 = 3.2.
    a = genome_with_innovations([0, 1, 2, 3, 5], [1.0, 1.0, 1.0, 0.3, -0.2])
    b = genome_with_innovations([0, 1, 2, 4], [0.5, 1.5, 0.5, 0.9])
    assert compatibility_distance(a, b, 1.0, 1.0, 0.4) == 3.2


def test_distance_empty_vs_genome():
    a = genome_with_innovations([], [])
    b = genome_with_innovations([0, 1], [0.5, 0.5])
    # Both genes in b exceed a's (absent) maximum: pure excess.
    assert compatibility_distance(a, b, 1.0, 1.0, 0.4) == 2.0


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_distance_self_zero_property(seed):
    c = InnovationCounter()
    g = init_genome(stream(seed, 0, "prop"), c)
    rates = EvolutionRates(add_connection_prob=0.5, add_node_prob=0.5)
    g = mutate(g, rates, stream(seed, 1, "prop"), c)
    assert compatibility_distance(g, g) == 0.0


# -- pool -------------------------------------------------------------------


def _pool(capacity=4):
    return GenomePool(capacity=capacity)


def test_admit_fills_lowest_free_slot():
    p = _pool()
    g = init_genome(_rng(11), p.innovations)
    assert p.admit(g, (), 0) == 0
    assert p.admit(g, (), 0) == 1
    assert p.is_live(0) and p.is_live(1)
    assert p.live_count() == 2


def test_admit_evicts_oldest_dead():
    p = _pool(capacity=3)
    g = init_genome(_rng(12), p.innovations)
    for _ in range(3):
        p.admit(g, (), 0)
    counts = np.array([0, 1, 0])
    dead = p.update_census(counts, step=5)
    assert dead == [0, 2]
    counts = np.array([0, 1, 0])
    # Kill nothing new; now admit twice: both dead slots have the same
    # death step, so the lower index is reused first.
    assert p.admit(g, (), 6) == 0
    assert p.admit(g, (), 6) == 2
    assert p.admit(g, (), 6) is None  # all live now


def test_admit_eviction_prefers_older_death():
    p = _pool(capacity=2)
    g = init_genome(_rng(13), p.innovations)
    p.admit(g, (), 0)
    p.admit(g, (), 0)
    p.update_census(np.array([1, 0]), step=3)   # slot 1 dies at 3
    p.update_census(np.array([0, 0]), step=7)   # slot 0 dies at 7
    assert p.admit(g, (), 8) == 1


def test_census_tracks_peaks_and_deaths():
    p = _pool()
    g = init_genome(_rng(14), p.innovations)
    s = p.admit(g, (), 0)
    p.update_census(np.array([3, 0, 0, 0]), step=1)
    p.update_census(np.array([9, 0, 0, 0]), step=2)
    p.update_census(np.array([4, 0, 0, 0]), step=3)
    rec = p.record_for_slot(s)
    assert rec.peak_population == 9
    assert rec.death_step is None
    p.update_census(np.array([0, 0, 0, 0]), step=4)
    assert rec.death_step == 4
    assert p.deaths_at(4) == [rec.lineage_id]
    assert not p.is_live(s)


def test_phylogeny_parent_tracking():
    p = _pool()
    g = init_genome(_rng(15), p.innovations)
    s0 = p.admit(g, (), 0)
    s1 = p.admit(g, (), 0)
    child_slot = p.admit(g, (p.lineage(s0), p.lineage(s1)), 10)
    rec = p.record_for_slot(child_slot)
    assert rec.parents == (p.lineage(s0), p.lineage(s1))
    assert rec.birth_step == 10
    for parent in rec.parents:
        assert p.records[parent].birth_step < rec.birth_step
