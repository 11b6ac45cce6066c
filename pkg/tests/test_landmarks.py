import io
import math

import numpy as np
import pytest

from tdoracle.generate import generate_instance
from tdoracle.graph import FREE_FLOW, TDGraph
from tdoracle.landmarks import (
    PartitionError,
    build_hierarchy,
    coverage_ball,
    load_partition,
    partition_boundary,
    select,
    select_hybrid,
    select_important_random,
    select_partition_boundary,
    select_random,
    select_sparse_partition,
    select_sparse_random,
)
from tdoracle.search import Search, static_distances
from tdoracle.ttf import TTF

from conftest import DAY, line_graph


@pytest.fixture(scope="module")
def big():
    return generate_instance("grid", 10_000, td_fraction=0.0, seed=4)


@pytest.fixture(scope="module")
def small():
    return generate_instance("grid", 400, td_fraction=0.2, seed=5)


def ff_rank(g, a, b):
    s = Search(g, a, metric=FREE_FLOW)
    s.run()
    return int(np.flatnonzero(s.settled == b)[0])


def quadrants(g):
    x, y = g.coords[:, 0], g.coords[:, 1]
    mx, my = np.median(x), np.median(y)
    return (x > mx).astype(int) + 2 * (y > my).astype(int)


class TestRandom:
    def test_all(self, small):
        ls = select_random(small, small.n, 1)
        assert sorted(ls) == list(range(small.n))

    def test_deterministic(self, small):
        assert list(select_random(small, 20, 9)) == list(select_random(small, 20, 9))
        assert list(select_random(small, 20, 9)) != list(select_random(small, 20, 10))

    def test_spatially_uniform(self, big):
        counts = np.bincount(quadrants(big)[select_random(big, 100, 3).vertices], minlength=4)
        sd = math.sqrt(100 * 0.25 * 0.75)
        assert np.all(np.abs(counts - 25) <= 3 * sd), counts


class TestSparse:
    def test_zero_ball_is_random(self, small):
        assert list(select_sparse_random(small, 25, 0, 7)) == list(select_random(small, 25, 7))

    def test_line_separation(self):
        g = line_graph([1.0] * 9)
        for seed in range(20):
            ls = select_sparse_random(g, 2, 3, seed)
            a, b = ls.vertices
            assert ff_rank(g, a, b) > 3
            far = select_sparse_random(g, 2, 4, seed).vertices
            assert abs(int(far[0]) - int(far[1])) >= 3

    def test_pairwise_rank_separation(self, small):
        F = 12
        ls = select_sparse_random(small, 15, F, 2)
        assert not ls.partial and len(set(ls)) == 15
        v = ls.vertices
        for i in range(len(v)):
            for j in range(i + 1, len(v)):
                assert ff_rank(small, v[i], v[j]) > F

    def test_partial_flag(self):
        g = line_graph([1.0] * 4)
        ls = select_sparse_random(g, 5, 10, 0)
        assert ls.partial and len(ls) == 1

    def test_deterministic(self, small):
        assert list(select_sparse_random(small, 10, 5, 3)) == list(select_sparse_random(small, 10, 5, 3))


def with_categories(g, cat):
    return TDGraph(g.n, g.tail, g.head, g.ttfs, g.period, category=np.asarray(cat))


class TestImportant:
    def test_uniform_category_is_no_op(self, small):
        g = with_categories(small, np.full(small.n, 4))
        ls = select_important_random(g, 20, 1)
        assert list(ls) == ls.params["centers"]

    def test_moves_to_category_one_endpoint(self):
        g = with_categories(line_graph([1.0] * 6), [5, 5, 5, 1, 1, 5, 5])
        for seed in range(10):
            ls = select_important_random(g, 1, seed, ball_size=30)
            c = ls.params["centers"][0]
            assert list(ls) == ([c] if c in (3, 4) else [3])

    def test_per_ball_scan(self, small):
        ls = select_important_random(small, 30, 4)
        for c, l in zip(ls.params["centers"], ls):
            s = Search(small, c, metric=FREE_FLOW)
            s.run(max_size=30)
            ball = s.settled
            best = small.category[ball].min()
            assert l in ball
            if best <= 3:
                assert small.category[l] == best
            else:
                assert l == c
        assert len(set(ls)) == len(ls)

    def test_needs_categories(self):
        g = line_graph([1.0])
        g.category = None
        with pytest.raises(ValueError):
            select_important_random(g, 1)


class TestPartitions:
    def test_single_cell(self, small):
        ls = select_partition_boundary(small, np.zeros(small.n, dtype=int))
        assert len(ls) == 0 and ls.partial

    def test_line_split(self):
        g = line_graph([1.0] * 5)
        cell = np.array([0, 0, 0, 1, 1, 1])
        assert list(select_partition_boundary(g, cell)) == [2, 3]

    def test_grid_quadrants(self):
        g = generate_instance("grid", 100, seed=1)
        r, c = np.arange(100) // 10, np.arange(100) % 10
        cell = (r >= 5) * 2 + (c >= 5)
        want = np.flatnonzero(np.isin(r, (4, 5)) | np.isin(c, (4, 5)))
        assert np.array_equal(partition_boundary(g, cell), want)

    def test_load_file(self, small):
        text = "# cells\n" + "".join(f"{v} {v % 3}\n" for v in range(small.n))
        cell = load_partition(io.StringIO(text), small.n)
        assert np.array_equal(cell, np.arange(small.n) % 3)

    def test_load_missing_vertex(self):
        with pytest.raises(PartitionError):
            load_partition(io.StringIO("0 0\n1 0\n"), 3)

    def test_load_bad_line(self):
        with pytest.raises(PartitionError):
            load_partition(io.StringIO("0 zero\n"), 1)

    def test_sparse_partition(self, small):
        cell = (np.arange(small.n) % 20 >= 10).astype(int) + 2 * (np.arange(small.n) // 20 >= 10)
        bnd = set(partition_boundary(small, cell).tolist())
        ls = select_sparse_partition(small, cell, 6, 5, 0)
        assert set(ls) <= bnd and len(set(ls)) == len(ls)
        v = ls.vertices
        for i in range(len(v)):
            for j in range(i + 1, len(v)):
                assert ff_rank(small, v[i], v[j]) > 5

    def test_hybrid_counts(self, small):
        cell = np.arange(small.n) % 7
        k = 21
        ls = select_hybrid(small, cell, k, 0)
        assert len(ls) == k and len(set(ls)) == k
        bnd = partition_boundary(small, cell)
        first = ls.vertices[: math.ceil(k / 2)]
        assert np.isin(first, bnd).all()
        counts = np.bincount(cell[ls.vertices[math.ceil(k / 2):]], minlength=7)
        assert counts.max() - counts.min() <= 1

    def test_hybrid_one_cell(self, small):
        ls = select_hybrid(small, np.zeros(small.n, dtype=int), 10, 0)
        # no boundary vertices, so every pick is uniform within the one cell
        assert len(ls) == 10 and len(set(ls)) == 10 and not ls.partial

    def test_dispatch(self, small):
        assert select(small, "sr", 5, 1, ball_size=3).method == "SR"
        with pytest.raises(ValueError):
            select(small, "K", 5)
        with pytest.raises(ValueError):
            select(small, "metis", 5)


class TestHierarchy:
    def test_one_level_is_flat(self, small):
        h = build_hierarchy(small, [10], [small.n], method="HR", seed=1)
        assert h.n_levels == 1 and len(h.all_landmarks) == 10
        for l in h.levels[0]:
            assert h.coverage[int(l)].size == small.n
        assert h.audit(small)

    def test_scaled_levels(self, small):
        n = small.n
        sizes = [12, 6, 3, 2]
        cov = [max(2, round(x * n / 292356)) for x in (1274, 29243, 154847)] + [n]
        h = build_hierarchy(small, sizes, cov, [4, 8, 16, 32], seed=2)
        allv = np.concatenate(h.levels)
        assert allv.size == sum(sizes) == np.unique(allv).size
        avg = [np.mean([h.coverage[int(l)].size for l in lev]) for lev in h.levels]
        assert all(a < b for a, b in zip(avg, avg[1:])), avg
        assert h.audit(small)

    def test_coverage_ball_extension(self, small):
        ball = coverage_ball(small, 7, 20)
        ff = static_distances(small, 7, FREE_FLOW)
        s = Search(small, 7, metric=FREE_FLOW)
        s.run(max_size=20)
        assert set(s.settled.tolist()) <= set(ball.tolist())
        assert ff[ball].max() <= ff[np.setdiff1d(np.arange(small.n), ball)].min()

    def test_deterministic(self, small):
        a = build_hierarchy(small, [5, 2], [30, small.n], [3, 3], seed=8)
        b = build_hierarchy(small, [5, 2], [30, small.n], [3, 3], seed=8)
        assert all(np.array_equal(x, y) for x, y in zip(a.levels, b.levels))

    def test_bad_args(self, small):
        with pytest.raises(ValueError):
            build_hierarchy(small, [1, 2], [3])
        with pytest.raises(ValueError):
            build_hierarchy(small, [1], [3], method="X")
