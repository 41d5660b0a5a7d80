import json

import numpy as np
import pytest

from conftest import make_state
from evoca import engine
from evoca.snapshot import MAGIC, SnapshotError, load_snapshot, save_snapshot


def _advance_and_save(tmp_path, steps=8, **overrides):
    st = make_state(initial_population=8, seed=21, **overrides)
    engine.run(st, steps)
    path = tmp_path / "state.snap"
    save_snapshot(st, path)
    return st, path


def test_round_trip_digest_identical(tmp_path):
    st, path = _advance_and_save(tmp_path)
    loaded = load_snapshot(path)
    assert loaded.t == st.t
    assert engine.digest(loaded) == engine.digest(st)
    assert loaded.config == st.config
    assert loaded.master_seed == st.master_seed


def test_round_trip_pool_and_counters(tmp_path):
    st, path = _advance_and_save(tmp_path)
    loaded = load_snapshot(path)
    assert loaded.pool.innovations.next_innovation == st.pool.innovations.next_innovation
    assert loaded.pool.innovations.next_node_id == st.pool.innovations.next_node_id
    assert loaded.pool.next_lineage_id == st.pool.next_lineage_id
    assert loaded.pool.live_slots() == st.pool.live_slots()
    for i in st.pool.live_slots():
        assert loaded.pool.genome(i) == st.pool.genome(i)
        a, b = loaded.pool.params(i), st.pool.params(i)
        for x, y in ((a.w1, b.w1), (a.b1, b.b1), (a.w2, b.w2), (a.b2, b.b2)):
            assert np.array_equal(x, y)
    assert set(loaded.pool.records) == set(st.pool.records)
    for lid, rec in st.pool.records.items():
        got = loaded.pool.records[lid]
        assert (got.parents, got.birth_step, got.death_step, got.peak_population) == (
            rec.parents, rec.birth_step, rec.death_step, rec.peak_population,
        )


def test_resume_continues_identically(tmp_path):
    st, path = _advance_and_save(tmp_path, steps=10)
    resumed = load_snapshot(path)
    engine.run(st, 10)
    engine.run(resumed, 10)
    assert engine.digest(resumed) == engine.digest(st)
    assert resumed.pool.innovations.next_innovation == st.pool.innovations.next_innovation


def test_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.snap"
    path.write_bytes(b"XXXX" + b"\0" * 64)
    with pytest.raises(SnapshotError, match="magic"):
        load_snapshot(path)


def test_rejects_bad_version(tmp_path):
    st, path = _advance_and_save(tmp_path, steps=1)
    raw = bytearray(path.read_bytes())
    raw[4] = 99
    path.write_bytes(bytes(raw))
    with pytest.raises(SnapshotError, match="version"):
        load_snapshot(path)


def test_rejects_truncation(tmp_path):
    st, path = _advance_and_save(tmp_path, steps=1)
    raw = path.read_bytes()
    for cut in (10, len(raw) // 2, len(raw) - 5):
        path.write_bytes(raw[:cut])
        with pytest.raises(SnapshotError):
            load_snapshot(path)


def test_rejects_corrupt_metadata(tmp_path):
    st, path = _advance_and_save(tmp_path, steps=1)
    raw = bytearray(path.read_bytes())
    raw[-3] = ord("#")  # stomp inside the JSON block
    path.write_bytes(bytes(raw))
    with pytest.raises(SnapshotError):
        load_snapshot(path)


def test_loader_verifies_cell_references(tmp_path):
    st, path = _advance_and_save(tmp_path, steps=0)
    # Point one cell at a slot that cannot be live and re-save.
    loaded = load_snapshot(path)
    loaded.substrate.front.genome_index[0, 0] = 400
    save_snapshot(loaded, path)
    with pytest.raises(SnapshotError, match="non-live"):
        load_snapshot(path)


def test_snapshot_starts_fresh_run_equivalence(tmp_path):
    # Saving at t=0 and loading is the same as never snapshotting.
    a = make_state(initial_population=6, seed=33)
    path = tmp_path / "zero.snap"
    save_snapshot(a, path)
    b = load_snapshot(path)
    engine.run(a, 15)
    engine.run(b, 15)
    assert engine.digest(a) == engine.digest(b)
