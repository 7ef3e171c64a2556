import pytest
from hypothesis import given, strategies as st

from gtasim.geometry import (
    ArrayShape, GeometryError, GtaConfig, InsufficientLanes, TooManyPartitions, enumerate_arrangements, partition,
    squarest,
)


def shapes(lanes):
    return [(s.rows_R, s.cols_C) for s in enumerate_arrangements(GtaConfig(lanes_L=lanes))]


def test_sixteen_lanes():
    assert shapes(16) == [(8, 128), (16, 64), (32, 32), (64, 16), (128, 8)]


def test_one_and_four_lanes():
    assert shapes(1) == [(8, 8)]
    assert shapes(4) == [(8, 32), (16, 16), (32, 8)]


@given(st.integers(1, 256))
def test_arrangements_preserve_pe_count(lanes):
    cfg = GtaConfig(lanes_L=lanes)
    out = enumerate_arrangements(cfg)
    assert out and all(s.rows_R * s.cols_C == lanes * 64 for s in out)
    assert all(s.rows_R == s.lane_grid[0] * 8 and s.cols_C == s.lane_grid[1] * 8 for s in out)
    assert [s.lane_grid[0] for s in out] == sorted(s.lane_grid[0] for s in out)


def test_parse_and_str():
    s = ArrayShape.parse("16x32")
    assert (s.rows_R, s.cols_C, s.lane_grid, str(s)) == (16, 32, (2, 4), "16x32")
    with pytest.raises(GeometryError):
        ArrayShape.parse("12x8")
    with pytest.raises(GeometryError):
        ArrayShape.parse("banana")


def test_squarest_prefers_taller_on_ties():
    cfg = GtaConfig()
    assert str(squarest(cfg, 16)) == "32x32"
    assert str(squarest(cfg, 8)) == "32x16"
    assert str(squarest(cfg, 1)) == "8x8"


def test_config_validation():
    with pytest.raises(GeometryError):
        GtaConfig(lanes_L=0)
    with pytest.raises(GeometryError):
        GtaConfig(mask_width_bits=0)
    assert GtaConfig().max_partitions == 16 and GtaConfig().pes_per_lane == 64


def test_two_halves():
    p = partition(GtaConfig(), [8, 8])
    assert [s.lanes for s in p.sub_arrays] == [8, 8]
    assert not (p.lane_sets[0] & p.lane_sets[1])
    assert p.mask_group_ids == (0, 1)


def test_full_array_partition():
    p = partition(GtaConfig(), [16])
    assert len(p.sub_arrays) == 1 and p.sub_arrays[0].lanes == 16 and p.lanes_used == 16


def test_too_many_partitions():
    with pytest.raises(TooManyPartitions):
        partition(GtaConfig(mask_width_bits=1), [4, 4, 4, 4])


def test_insufficient_lanes():
    with pytest.raises(InsufficientLanes):
        partition(GtaConfig(), [8, 9])


def test_explicit_shapes_checked():
    cfg = GtaConfig()
    p = partition(cfg, [8, 8], shapes=[ArrayShape.from_lane_grid(1, 8), ArrayShape.from_lane_grid(8, 1)])
    assert [str(s) for s in p.sub_arrays] == ["8x64", "64x8"]
    with pytest.raises(GeometryError):
        partition(cfg, [8], shapes=[ArrayShape.from_lane_grid(2, 2)])


@given(st.lists(st.integers(1, 4), min_size=1, max_size=8))
def test_partitions_are_lane_disjoint(requests):
    cfg = GtaConfig(lanes_L=32, mask_width_bits=3)
    p = partition(cfg, requests)
    seen = set()
    for lanes, sub, budget in zip(p.lane_sets, p.sub_arrays, requests):
        assert not (seen & lanes) and len(lanes) == budget == sub.lanes
        assert sub in enumerate_arrangements(cfg, budget)
        seen |= lanes
    assert p.lanes_used <= cfg.lanes_L
