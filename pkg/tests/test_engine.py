import numpy as np
import pytest

from conftest import make_config, make_state
from evoca import engine
from evoca.hypernet import forward
from evoca.physics import (
    KERNEL_OFFSETS,
    apply_invest_liquidate,
    energy_cycle,
    resolve_exploration,
    rotation_permutation,
    write_communication,
)
from evoca.rng import stream


# -- seeding ----------------------------------------------------------------


def test_seed_population_counts_and_stocks():
    st = make_state(initial_population=6)
    gi = st.substrate.front.genome_index
    cells = np.flatnonzero(gi.ravel() >= 0)
    assert len(cells) == 6
    assert st.pool.live_count() == 6
    assert (st.substrate.front.plane("energy").ravel()[cells] == 1.0).all()
    assert (st.substrate.front.plane("infrastructure").ravel()[cells] == 1.0).all()
    # Six distinct genomes, one per cell.
    assert len(set(gi.ravel()[cells].tolist())) == 6


def test_seed_population_is_reproducible():
    a = make_state(initial_population=8, seed=42)
    b = make_state(initial_population=8, seed=42)
    assert np.array_equal(a.substrate.front.genome_index, b.substrate.front.genome_index)
    assert np.array_equal(a.substrate.front.rotation, b.substrate.front.rotation)
    assert engine.digest(a) == engine.digest(b)
    c = make_state(initial_population=8, seed=43)
    assert engine.digest(a) != engine.digest(c)


def test_seed_population_rejects_overflow():
    with pytest.raises(ValueError):
        st = make_state(initial_population=0)
        engine.seed_initial_population(st, 16 * 16 + 1)


# -- sensing ----------------------------------------------------------------


def test_gather_sensors_layout_and_rotation():
    st = make_state(initial_population=0)
    front = st.substrate.front
    e = front.plane("energy")
    x, y = 5, 7
    e[y, x] = 100.0
    # Give every neighbor a distinct energy so slots are identifiable.
    for j, (dx, dy) in enumerate(KERNEL_OFFSETS):
        e[(y + int(dy)) % 16, (x + int(dx)) % 16] = float(j + 1)
    front.rotation[y, x] = 2
    s = engine.gather_sensors(st.substrate, x, y)
    assert s[0] == 100.0
    perm = rotation_permutation(2)
    for slot in range(8):
        assert s[(slot + 1) * 5] == float(perm[slot] + 1)


def test_gather_sensors_subchannel_order():
    st = make_state(initial_population=0)
    front = st.substrate.front
    front.plane("energy")[0, 0] = 1.0
    front.plane("infrastructure")[0, 0] = 2.0
    front.channels["communication"][:, 0, 0] = [3.0, 4.0, 5.0]
    s = engine.gather_sensors(st.substrate, 0, 0)
    assert s[:5].tolist() == [1.0, 2.0, 3.0, 4.0, 5.0]


def test_action_field_matches_scalar_path():
    st = make_state(initial_population=12, seed=3)
    # Stir the world so neighboring values differ.
    g = stream(3, 0, "stir")
    st.substrate.front.plane("energy")[:] = g.uniform(0, 2, (16, 16)).astype(np.float32)
    actions = engine.build_action_field(st)
    gi = st.substrate.front.genome_index.ravel()
    assert actions.cells.tolist() == np.flatnonzero(gi >= 0).tolist()
    for row, cell in enumerate(actions.cells):
        x, y = int(cell) % 16, int(cell) // 16
        sensors = engine.gather_sensors(st.substrate, x, y)
        out = forward(st.pool.params(int(gi[cell])), sensors)
        got = np.concatenate(
            [
                [actions.invest[row], actions.liquidate[row]],
                actions.comm[row],
                actions.explore[row],
            ]
        )
        assert np.abs(got - out).max() < 1e-6


def test_action_values_in_open_interval():
    st = make_state(initial_population=10)
    actions = engine.build_action_field(st)
    for arr in (actions.invest, actions.liquidate, actions.comm, actions.explore):
        assert (arr > 0).all() and (arr < 1).all()


def test_empty_world_empty_actions():
    st = make_state(initial_population=0)
    actions = engine.build_action_field(st)
    assert len(actions.cells) == 0
    engine.step(st)  # must not raise
    assert st.t == 1


# -- stepping ---------------------------------------------------------------


def test_step_advances_counter_and_swaps():
    st = make_state(initial_population=4)
    d0 = engine.digest(st)
    engine.step(st)
    assert st.t == 1
    assert engine.digest(st) != d0


def test_phases_never_touch_front():
    st = make_state(initial_population=6, seed=9)
    sub = st.substrate
    before = {
        name: arr.copy() for name, arr in sub.front.channels.items()
    }
    before_gi = sub.front.genome_index.copy()
    before_rot = sub.front.rotation.copy()
    # Run every phase but stop short of the swap.
    t = sub.step_counter
    sub.begin_step()
    actions = engine.build_action_field(st)
    energy_cycle(sub.back, t, st.physics)
    apply_invest_liquidate(sub.back, actions, st.physics)
    write_communication(sub.back, actions)
    resolve_exploration(sub.back, actions, st.physics)
    for name, arr in sub.front.channels.items():
        assert np.array_equal(arr, before[name])
    assert np.array_equal(sub.front.genome_index, before_gi)
    assert np.array_equal(sub.front.rotation, before_rot)


def test_run_executes_hooks_on_cadence():
    st = make_state(initial_population=4)
    seen = []
    engine.run(st, 10, hooks=(engine.Hook(3, lambda s: seen.append(s.t)),))
    assert seen == [3, 6, 9]


def test_run_swallows_hook_errors():
    st = make_state(initial_population=4)

    def boom(s):
        raise RuntimeError("observer crash")

    engine.run(st, 4, hooks=(engine.Hook(1, boom),))
    assert st.t == 4


def test_run_should_stop():
    st = make_state(initial_population=4)
    engine.run(st, 100, should_stop=lambda: st.t >= 5)
    assert st.t == 5


# -- determinism ------------------------------------------------------------


def test_worker_counts_agree():
    digests = {}
    for w in (1, 2, 8):
        st = make_state(workers=w, initial_population=10, seed=11)
        engine.run(st, 25)
        digests[w] = engine.digest(st)
    assert digests[1] == digests[2] == digests[8]


def test_rerun_identical():
    a = make_state(initial_population=10, seed=12)
    b = make_state(initial_population=10, seed=12)
    engine.run(a, 20)
    engine.run(b, 20)
    assert engine.digest(a) == engine.digest(b)
    ga = a.substrate.front.genome_index
    gb = b.substrate.front.genome_index
    assert np.array_equal(ga, gb)


def test_digest_sensitive_to_single_value():
    st = make_state(initial_population=4)
    d0 = engine.digest(st)
    st.substrate.front.plane("energy")[3, 3] += np.float32(1e-6)
    assert engine.digest(st) != d0


# -- parameter steering -----------------------------------------------------


def test_apply_param_roundtrip():
    st = make_state()
    engine.apply_param(st, "physics.cycle_amplitude", 0.25)
    assert st.physics.cycle_amplitude == 0.25
    engine.apply_param(st, "evolution.p_merge", 0.9)
    assert st.rates.p_merge == 0.9


def test_apply_param_rejects_unknown_and_out_of_range():
    st = make_state()
    with pytest.raises(ValueError):
        engine.apply_param(st, "physics.gravity", 1.0)
    with pytest.raises(ValueError):
        engine.apply_param(st, "physics.drain_fraction", 1.5)
    with pytest.raises(ValueError):
        engine.apply_param(st, "physics.cycle_period", 2.5)
    with pytest.raises(ValueError):
        engine.apply_param(st, "evolution.p_merge", "high")
    assert st.physics.drain_fraction == 0.05


def test_describe_params_covers_apply_surface():
    st = make_state()
    items = engine.describe_params(st)
    paths = {it["path"] for it in items}
    assert "physics.explore_fraction" in paths
    assert "evolution.p_radiation" in paths
    for it in items:
        assert it["min"] <= it["value"] <= it["max"]
        engine.validate_param(it["path"], it["value"])
