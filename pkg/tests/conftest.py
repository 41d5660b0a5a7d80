"""Shared fixtures and builders for the test suite."""

import numpy as np
import pytest

from evoca import config as config_mod
from evoca import engine
from evoca.neuroevo import (
    ConnGene,
    CppnGenome,
    EvolutionRates,
    InnovationCounter,
    NodeGene,
    init_genome,
)


def make_config(**overrides) -> "config_mod.ExperimentConfig":
    """Small-grid config; keyword paths like grid={'width': 16} override."""
    base = {"grid": {"width": 16, "height": 16}, "initial_population": 4, "seed": 1}
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            base[key].update(value)
        else:
            base[key] = value
    return config_mod.parse_config(base)


def make_state(workers: int = 1, **overrides) -> "engine.SimState":
    return engine.new_state(make_config(**overrides), workers=workers)


def constant_cppn(weight_signal: float, bias_signal: float | None = None) -> CppnGenome:
    """Genome whose outputs are exactly constant for every query.

    Both outputs use identity activation fed only by the constant input,
    so the signal equals the connection weight with no rounding.
    """
    if bias_signal is None:
        bias_signal = weight_signal
    nodes = tuple(
        [NodeGene(i, "input", "identity") for i in range(5)]
        + [NodeGene(5, "output", "identity"), NodeGene(6, "output", "identity")]
    )
    conns = (
        ConnGene(0, 4, 5, float(weight_signal), True),
        ConnGene(1, 4, 6, float(bias_signal), True),
    )
    return CppnGenome(nodes, conns)


def genome_with_innovations(innovs: list[int], weights: list[float], enabled=None) -> CppnGenome:
    """Genome over the base nodes with chosen innovation numbers.

    Connections are laid over the ten input-output pairs in order, so up
    to ten genes can be placed with full control over markings.
    """
    assert len(innovs) <= 10
    if enabled is None:
        enabled = [True] * len(innovs)
    pairs = [(s, d) for s in range(5) for d in (5, 6)]
    nodes = tuple(
        [NodeGene(i, "input", "identity") for i in range(5)]
        + [NodeGene(5, "output", "tanh"), NodeGene(6, "output", "tanh")]
    )
    conns = tuple(
        ConnGene(innov, pairs[i][0], pairs[i][1], weights[i], enabled[i])
        for i, innov in enumerate(innovs)
    )
    return CppnGenome(nodes, conns)


@pytest.fixture
def rates() -> EvolutionRates:
    return EvolutionRates()


@pytest.fixture
def counter() -> InnovationCounter:
    return InnovationCounter()


@pytest.fixture
def tiny_state():
    return make_state()
