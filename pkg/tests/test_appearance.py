import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pjstrack.appearance import (
    TargetHistory,
    build_dictionary,
    choose_slot,
    group_signals,
    init_dictionary,
    load_snapshot,
    oldest_slot,
    overwrite_slot,
    replace_target,
    save_snapshot,
    shift_offsets,
)
from pjstrack.motion import AffineState


def textured_frame(seed=0, shape=(80, 100)):
    return np.random.default_rng(seed).random(shape)


def fresh(n=10, seed=0):
    frame = textured_frame(seed)
    return init_dictionary(frame, AffineState(50, 40), 32, 8, n, np.random.default_rng(seed))


def test_default_layout_has_160_atoms():
    d = fresh()
    assert d.atoms.shape == (64, 160)
    assert d.n_patches == 16
    assert d.block(3).shape == (64, 10)
    assert d.index_set(3).tolist() == list(range(30, 40))
    assert len(d.complement(3)) == 150


def test_atoms_are_unit_norm():
    np.testing.assert_allclose(np.linalg.norm(fresh().atoms, axis=0), 1.0, atol=1e-12)


def test_zero_shift_gives_identical_slots():
    d = init_dictionary(textured_frame(), AffineState(50, 40), 32, 8, 2, np.random.default_rng(0), max_shift=0)
    for i in range(d.n_patches):
        np.testing.assert_array_equal(d.block(i)[:, 0], d.block(i)[:, 1])


def test_constant_target_gives_constant_atoms():
    d = init_dictionary(np.full((80, 100), 0.4), AffineState(50, 40), 32, 8, 10, np.random.default_rng(0))
    np.testing.assert_allclose(d.atoms, 1 / np.sqrt(64), atol=1e-12)


def test_newest_slot_is_the_given_target():
    frame = textured_frame()
    d = init_dictionary(frame, AffineState(50, 40), 32, 8, 5, np.random.default_rng(0))
    patch0 = frame[24:32, 34:42].ravel(order="F")
    np.testing.assert_allclose(d.atoms[:, 4], patch0 / np.linalg.norm(patch0), atol=1e-9)
    assert d.ages.tolist() == [1, 2, 3, 4, 5]


def test_shift_offsets_exclude_zero():
    off = shift_offsets(500, 2, np.random.default_rng(0))
    assert set(np.unique(off)) == {-2, -1, 1, 2}


def test_build_dictionary_column_layout():
    targets = np.random.default_rng(0).random((2, 4, 4))  # n=2, m=4, M=4
    d = build_dictionary(targets, 4, 2)
    for i in range(4):
        for j in range(2):
            v = targets[j, i]
            np.testing.assert_allclose(d.atoms[:, i * 2 + j], v / np.linalg.norm(v))


def test_replace_target_replays_seeded_draw():
    d = fresh()
    new = np.random.default_rng(1).random((16, 64))
    out = replace_target(d, new, np.zeros(16, bool), np.random.default_rng(77))
    slot = int(np.random.default_rng(77).choice(10, p=np.arange(1, 11) / 55))
    changed = np.flatnonzero(np.any(out.atoms != d.atoms, axis=0))
    assert changed.tolist() == (np.arange(16) * 10 + slot).tolist()
    np.testing.assert_allclose(out.atoms[:, slot], new[0] / np.linalg.norm(new[0]))
    assert out.ages[slot] == 10
    assert sorted(out.ages.tolist()) == list(range(1, 11))
    # relative order of the untouched slots is preserved
    others = [j for j in range(10) if j != slot]
    assert np.all(np.diff(out.ages[others]) > 0)


def test_fully_occluded_target_changes_nothing():
    d = fresh()
    rng = np.random.default_rng(3)
    out = replace_target(d, np.ones((16, 64)), np.ones(16, bool), rng)
    assert np.array_equal(out.atoms, d.atoms) and np.array_equal(out.ages, d.ages)
    assert rng.random() == np.random.default_rng(3).random()


def test_occluded_patches_keep_old_atoms():
    d = fresh()
    mask = np.zeros(16, bool)
    mask[8:] = True
    out = replace_target(d, np.random.default_rng(2).random((16, 64)), mask, np.random.default_rng(5))
    for i in range(8, 16):
        np.testing.assert_array_equal(out.block(i), d.block(i))
    assert np.any(out.atoms[:, :80] != d.atoms[:, :80])


def test_recent_slot_drawn_two_thirds_of_the_time():
    ages = np.array([1, 2])
    rng = np.random.default_rng(2024)
    hits = sum(choose_slot(ages, rng) == 1 for _ in range(10_000))
    assert hits / 10_000 == pytest.approx(2 / 3, abs=0.02)


def test_prefer_oldest_flag_reverses_weights():
    rng = np.random.default_rng(11)
    hits = sum(choose_slot(np.array([1, 2]), rng, prefer_recent=False) == 0 for _ in range(10_000))
    assert hits / 10_000 == pytest.approx(2 / 3, abs=0.02)


def test_overwrite_oldest_rotates_ranks():
    d = fresh(n=4)
    j = oldest_slot(d)
    out = overwrite_slot(d, j, np.ones((16, 64)), np.zeros(16, bool))
    assert out.ages.tolist() == [4, 1, 2, 3]
    assert oldest_slot(out) == 1


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), steps=st.integers(1, 15))
def test_dictionary_invariants_under_updates(seed, steps):
    rng = np.random.default_rng(seed)
    d = fresh(n=5, seed=seed % 7)
    for _ in range(steps):
        mask = rng.random(16) < 0.3
        d = replace_target(d, rng.random((16, 64)), mask, rng)
    assert d.atoms.shape == (64, 80)
    assert sorted(d.ages.tolist()) == [1, 2, 3, 4, 5]
    np.testing.assert_allclose(np.linalg.norm(d.atoms, axis=0), 1.0, atol=1e-12)


# -- history ----------------------------------------------------------------


def test_empty_history_group_is_candidate():
    y = np.arange(64.0)
    g = group_signals(TargetHistory(4), y, 0)
    assert g.shape == (64, 1)
    np.testing.assert_array_equal(g[:, 0], y)


def test_full_history_gives_five_columns():
    h = TargetHistory(4)
    for t in range(7):
        h.push(np.full((16, 64), float(t)))
    g = group_signals(h, np.full(64, -1.0), 2)
    assert g.shape == (64, 5)
    assert g[0].tolist() == [3, 4, 5, 6, -1]


def test_history_keeps_insertion_order():
    h = TargetHistory(4)
    a, b = np.random.default_rng(0).random((2, 16, 64))
    h.push(a)
    h.push(b)
    g = group_signals(h, np.zeros(64), 7)
    np.testing.assert_array_equal(g[:, 0], a[7])
    np.testing.assert_array_equal(g[:, 1], b[7])


def test_zero_capacity_history_stays_empty():
    h = TargetHistory(0)
    h.push(np.ones((16, 64)))
    assert len(h) == 0


def test_snapshot_roundtrip(tmp_path):
    d = fresh(n=3)
    save_snapshot(tmp_path / "d.txt", d)
    assert (tmp_path / "d.txt").read_text().splitlines()[0] == "64 48"
    np.testing.assert_allclose(load_snapshot(tmp_path / "d.txt"), d.atoms, rtol=1e-8)
