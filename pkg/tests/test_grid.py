from collections import deque

import pytest
from hypothesis import given
from hypothesis import strategies as st

from shiftflow.binning import OccupancyVector
from shiftflow.grid import OccupancyGrid


def test_insert_into_empty_grid():
    g = OccupancyGrid(8, 4)
    g.shift_insert(OccupancyVector(1 << 5, 8))
    for x in range(8):
        for s in range(4):
            assert g.read_cell(x, s) == (1 if (x, s) == (5, 3) else 0)


def test_same_vector_L_times_fills_history():
    g = OccupancyGrid(8, 4)
    v = OccupancyVector(0b10010, 8)
    for _ in range(4):
        g.shift_insert(v)
    assert all(g.read_cell(1, s) == 1 and g.read_cell(4, s) == 1 for s in range(4))
    assert g.is_full


def test_newest_two_slots():
    g = OccupancyGrid(8, 4)
    v1, v2 = OccupancyVector(0b1, 8), OccupancyVector(0b10, 8)
    g.shift_insert(v1)
    g.shift_insert(v2)
    assert g.slot_bits(3) == v2.bits and g.slot_bits(2) == v1.bits


def test_read_cell_bounds():
    g = OccupancyGrid(8, 4)
    for x, s in [(-1, 0), (8, 0), (0, 4), (0, -1)]:
        with pytest.raises(IndexError):
            g.read_cell(x, s)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        OccupancyGrid(8, 4).shift_insert(OccupancyVector(0, 9))
    with pytest.raises(ValueError):
        OccupancyGrid(8, 4).shift_insert(1 << 8)


def test_reset_clears():
    g = OccupancyGrid(8, 4)
    g.shift_insert(0xFF)
    g.reset()
    assert g.filled == 0 and not any(g.read_cell(x, s) for x in range(8) for s in range(4))


def test_storage_bound():
    assert OccupancyGrid(240, 16).payload_bits() == 3840


def test_filled_counts_warmup():
    g = OccupancyGrid(4, 3)
    for k in range(5):
        assert g.filled == min(k, 3)
        g.shift_insert(0)


def test_dump_golden():
    g = OccupancyGrid(5, 3)
    g.shift_insert(0b00001)
    g.shift_insert(0b00010)
    g.shift_insert(0b10100)
    assert g.dump() == "10000\n01000\n00101\n"
    assert g.to_array().shape == (3, 5)


def test_copy_is_independent():
    g = OccupancyGrid(4, 2)
    g.shift_insert(3)
    h = g.copy()
    h.shift_insert(1)
    assert g != h and g.slot_bits(1) == 3


@given(st.integers(1, 40), st.integers(1, 10), st.data())
def test_matches_ring_buffer(n, depth, data):
    vectors = data.draw(st.lists(st.integers(0, (1 << n) - 1), min_size=0, max_size=3 * depth))
    g = OccupancyGrid(n, depth)
    ring = deque([0] * depth, maxlen=depth)
    for v in vectors:
        g.shift_insert(v)
        ring.append(v)
    for s in range(depth):
        for x in range(n):
            assert g.read_cell(x, s) == (ring[s] >> x) & 1
    # shift identity: slot l holds v_{k-(L-1-l)}
    k = len(vectors)
    if k >= depth:
        for s in range(depth):
            assert g.slot_bits(s) == vectors[k - 1 - (depth - 1 - s)]
