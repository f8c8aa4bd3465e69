import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epcde.blocks import (
    adjusted_length,
    assumption3_sum,
    bi_threshold,
    bivariate_edges,
    block_members,
    build_schedule,
    default_uni_blocks,
)
from epcde.design import DesignSpec, lnln
from epcde.oracle import TrueModel

UNIT_SQUARE = TrueModel(
    cd=lambda y, x: ((np.asarray(y) >= 0) & (np.asarray(y) <= 1)).astype(float) + 0 * np.asarray(x),
    design=DesignSpec.uniform("random"),
    y_support=lambda x: (np.zeros_like(x), np.ones_like(x)),
)


def _edges_by_hand(n, count):
    b2 = 1 + math.floor(math.log(n) ** 0.75)
    edges = [0, b2]
    for s in range(2, count + 1):
        edges.append(edges[-1] + math.floor(b2 * (1 + 1 / math.log(math.log(n))) ** (s - 2)))
    return edges[: count + 1]


def test_bivariate_edges_n1000():
    assert list(bivariate_edges(1000, 3)) == [0, 5, 10, 17]


@pytest.mark.parametrize("n", [16, 50, 100, 300, 500, 1000, 2000, 10_000, 123_457])
def test_edges_golden_table(n):
    assert list(bivariate_edges(n, 6)) == _edges_by_hand(n, 6)


def test_threshold_11():
    assert bi_threshold(1, 1) == 1 / math.log(math.log(16))
    assert bi_threshold(1, 1) == pytest.approx(0.98060, abs=1e-5)


def test_cutoffs_n1000():
    s = build_schedule(1000, "square")
    assert s.T == 3
    assert list(s.bi_edges) == [0, 5, 10, 17]
    assert s.bi_edges[-1] > 1000 ** 0.25 * lnln(1000) >= s.bi_edges[-2]


@pytest.mark.parametrize("n", [16, 100, 300, 500, 1000, 5000, 10 ** 6])
def test_cutoff_minimality(n):
    s = build_schedule(n)
    ub = n ** (1 / 3) * lnln(n)
    bb = n ** 0.25 * lnln(n)
    assert s.uni_edges[-1] > ub >= s.uni_edges[-2]
    assert s.bi_edges[-1] > bb >= s.bi_edges[-2]


def test_default_uni_blocks():
    edges, t = default_uni_blocks(7)
    lengths = [1, 2]
    for k in range(2, 7):
        lengths.append(math.ceil(lengths[-1] * (1 + 1 / math.log(k + 2))))
    assert list(edges) == list(np.cumsum([0] + lengths))
    assert list(edges[:6]) == [0, 1, 3, 7, 14, 25]
    assert np.allclose(t, 1 / np.log(np.arange(3, 10)))


def test_thresholds_ordered_and_bounded():
    pairs = [(k, t) for k in range(1, 12) for t in range(1, 12)]
    pairs.sort(key=lambda p: (p[0] + 3) * (p[1] + 3))
    vals = [bi_threshold(k, t) for k, t in pairs]
    prods = [(k + 3) * (t + 3) for k, t in pairs]
    for a, b, pa, pb in zip(vals, vals[1:], prods, prods[1:]):
        assert 0 < b < 1
        if pb > pa:
            assert b < a


def test_block_members_examples():
    s = build_schedule(1000, "square")
    m = block_members(s, 1, 1)
    assert m.shape == (25, 2)
    assert set(map(tuple, m)) == {(j, r) for j in range(5) for r in range(1, 6)}
    line = build_schedule(1000, "line")
    (lo, hi), r = block_members(line, 1, 1)
    assert (lo, hi) == (0.0, 5.0)
    assert list(r) == [1, 2, 3, 4, 5]
    with pytest.raises(IndexError):
        block_members(s, 0, 1)
    with pytest.raises(IndexError):
        block_members(s, 1, s.T + 1)


@pytest.mark.parametrize("n", [16, 300, 1000, 4000])
def test_block_partition(n):
    s = build_schedule(n)
    top = s.bi_top
    seen = {}
    for k in range(1, s.T + 1):
        for t in range(1, s.T + 1):
            for j, r in block_members(s, k, t):
                seen[(j, r)] = seen.get((j, r), 0) + 1
    assert all(v == 1 for v in seen.values())
    assert set(seen) == {(j, r) for j in range(top) for r in range(1, top + 1)}
    uni = np.concatenate([block_members(s, k) for k in range(1, s.K + 1)])
    assert list(uni) == list(range(s.j_max_uni))


def test_build_schedule_rejects_small_n_and_bad_loss():
    with pytest.raises(ValueError):
        build_schedule(15)
    with pytest.raises(ValueError):
        build_schedule(100, "huber")


def test_custom_uni_spec():
    edges, t = default_uni_blocks(10)
    s = build_schedule(500, uni_spec=(edges, t))
    assert s.custom and list(s.uni_edges) == list(build_schedule(500).uni_edges)
    with pytest.raises(ValueError, match="nonincreasing"):
        build_schedule(500, uni_spec=(edges, t[::-1]))
    with pytest.raises(ValueError, match="cutoff"):
        build_schedule(500, uni_spec=([0, 1, 2], [0.5, 0.5]))
    # single-index blocks with tiny thresholds blow the finite-n surrogate
    many = np.arange(0, 40)
    with pytest.raises(ValueError, match="exceeds"):
        build_schedule(500, uni_spec=(many, np.full(39, 0.3)))


def test_default_assumption3_sum_bounded():
    edges, t = default_uni_blocks(60)
    assert assumption3_sum(edges, t) < 25.0


def test_adjusted_length_uniform_example():
    s = build_schedule(1000, "square")
    assert adjusted_length(s, 1, 1, UNIT_SQUARE) == pytest.approx(5.0, rel=1e-9)
    assert adjusted_length(s, 2, None, UNIT_SQUARE) == float(s.uni_lengths[1])


def test_adjusted_length_zero_functional():
    s = build_schedule(1000, "square")
    zero = TrueModel(cd=lambda y, x: 0 * np.asarray(y) * np.asarray(x) + 0.0,
                     design=DesignSpec.uniform("random"),
                     y_support=lambda x: (np.zeros_like(x), np.ones_like(x)))
    with pytest.raises(ValueError, match="identically zero"):
        adjusted_length(s, 2, 2, zero)


@settings(max_examples=40, deadline=None)
@given(st.integers(16, 10 ** 7))
def test_schedule_invariants(n):
    s = build_schedule(n)
    assert np.all(np.diff(s.uni_edges) > 0) and np.all(np.diff(s.bi_edges) > 0)
    assert np.all(s.uni_thresholds > 0)
    assert np.all(np.diff(s.uni_thresholds) < 0)
