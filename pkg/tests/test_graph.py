import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tdoracle.generate import generate_instance
from tdoracle.graph import (
    FREE_FLOW,
    FULL_CONGESTION,
    FifoError,
    InstanceError,
    TDGraph,
    contract_degree2,
    instance_stats,
    load_instance,
    save_instance,
)
from tdoracle.search import td_distance
from tdoracle.ttf import TTF

from conftest import DAY


def parse(text):
    return load_instance(io.StringIO(text))


class TestLoad:
    def test_two_nodes_one_arc(self):
        g = parse("TDGRAPH v1 2 1 86400\nnode 0\nnode 1\narc 0 1 1 0 5\n")
        assert (g.n, g.m) == (2, 1)
        assert g.arc_delay(0, 1234) == 5

    def test_fifo_violation_names_the_arc(self):
        text = "TDGRAPH v1 2 2 86400\nnode 0\nnode 1\narc 1 0 1 0 3\narc 0 1 2 0 300 100 100\n"
        with pytest.raises(FifoError) as e:
            parse(text)
        assert e.value.arc == 1
        assert "arc 1" in str(e.value)

    @pytest.mark.parametrize(
        "text",
        [
            "",
            "TDGRAPH v2 1 0 86400\nnode 0\n",
            "TDGRAPH v1 2 1 86400\nnode 0\nnode 1\narc 0 2 1 0 5\n",
            "TDGRAPH v1 2 1 86400\nnode 0\nnode 1\narc 0 1 1 0 0.5\n",
            "TDGRAPH v1 2 2 86400\nnode 0\nnode 1\narc 0 1 1 0 5\narc 0 1 1 0 6\n",
            "TDGRAPH v1 2 1 86400\nnode 0\nnode 1\narc 0 1 2 0 5\n",
            "TDGRAPH v1 2 1 86400\nnode 0\nnode 1\narc 0 1 1 90000 5\n",
        ],
    )
    def test_malformed(self, text):
        with pytest.raises(InstanceError):
            parse(text)

    def test_comments_and_categories(self):
        g = parse("# demo\nTDGRAPH v1 2 1 100\nnode 0 13.4 52.5 2\nnode 1 13.5 52.5 3  # x\narc 0 1 1 0 5\n")
        assert g.category is not None and list(g.category) == [2, 3]

    def test_grid_round_trip(self, tmp_path):
        g = generate_instance("grid", 100, td_fraction=0.5, seed=4)
        p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
        save_instance(g, p1)
        h = load_instance(p1)
        save_instance(h, p2)
        assert p1.read_text() == p2.read_text()
        assert all(f == k for f, k in zip(g.ttfs, h.ttfs))
        assert np.array_equal(g.tail, h.tail) and np.array_equal(g.head, h.head)


class TestStaticMetric:
    def test_constant(self):
        g = TDGraph(2, [0], [1], [TTF.constant(5, DAY)], DAY)
        assert g.static_metric(FREE_FLOW)[0] == 5 and g.static_metric(FULL_CONGESTION)[0] == 5

    def test_pwl_extremes(self):
        g = TDGraph(2, [0], [1], [TTF([0, 100, 200], [10, 20, 10], DAY)], DAY)
        assert g.static_metric(FREE_FLOW)[0] == 10
        assert g.static_metric(FULL_CONGESTION)[0] == 20

    def test_random_arcs_against_dense_sampling(self):
        g = generate_instance("grid", 64, td_fraction=1.0, seed=7)
        ts = np.linspace(0, DAY, 20_000, endpoint=False)
        lo, hi = g.static_metric(FREE_FLOW), g.static_metric(FULL_CONGESTION)
        for a in range(g.m):
            f = g.ttfs[a]
            v = f.eval(ts)
            assert lo[a] <= v.min() and v.max() <= hi[a]
            # and the extremes are attained at breakpoints
            at = f.eval(f.times)
            assert at.min() == lo[a] and at.max() == hi[a]

    def test_eval_between_bounds(self, rng):
        g = generate_instance("ring", 200, td_fraction=0.4, seed=8)
        lo, hi = g.static_metric(FREE_FLOW), g.static_metric(FULL_CONGESTION)
        ts = rng.uniform(0, 3 * DAY, 1000)
        for a in rng.choice(g.m, 50, replace=False):
            v = g.ttfs[a].eval(ts)
            assert np.all(lo[a] <= v) and np.all(v <= hi[a])


class TestStats:
    def test_all_constant(self):
        st_ = instance_stats(generate_instance("grid", 49, td_fraction=0.0))
        assert st_.k_star == 0 and st_.n_pwl == 0 and st_.lambda_max == 0

    def test_totals_are_sums(self):
        g = generate_instance("random-planar", 300, td_fraction=0.3, seed=2)
        s = instance_stats(g)
        assert s.total_breakpoints == s.per_arc_breakpoints.sum()
        assert s.k_star == s.per_arc_k_star.sum()
        assert s.n_constant + s.n_pwl == s.m == g.m
        assert s.k_max == s.per_arc_breakpoints.max()

    def test_v_shape(self):
        g = TDGraph(2, [0], [1], [TTF([0, 100, 200], [10, 5, 10], DAY)], DAY)
        assert instance_stats(g).k_star == 1


def chain_graph():
    # 0 -> 1 -> 2 with delays 2 and 3; vertex 1 has two distinct neighbours
    return TDGraph(3, [0, 1], [1, 2], [TTF.constant(2, DAY), TTF.constant(3, DAY)], DAY)


class TestContraction:
    def test_path_becomes_shortcut(self):
        c = contract_degree2(chain_graph())
        assert not c.vertex_active[1]
        arcs = c.active_arcs()
        assert len(arcs) == 1
        a = int(arcs[0])
        assert (c.tail[a], c.head[a]) == (0, 2)
        assert c.ttfs[a] == TTF.constant(5, DAY)
        assert c.unpack_path([a], 0.0) == [0, 1]

    def test_pure_cycle_keeps_lowest_id(self):
        t = [0, 1, 2, 1, 2, 0]
        h = [1, 2, 0, 0, 1, 2]
        g = TDGraph(3, t, h, [TTF.constant(1, DAY)] * 6, DAY)
        c = contract_degree2(g)
        assert c.vertex_active[0]
        assert c.n_active < 3
        assert td_distance(c, 0, 0, 0.0) == 0

    def test_distances_preserved(self, rng):
        g = generate_instance("grid", 500, td_fraction=0.3, seed=9, chain_fraction=0.3)
        c = contract_degree2(g)
        assert c.n_active < g.n_active
        act = c.active_vertices()
        for _ in range(50):
            o, d = (int(x) for x in rng.choice(act, 2, replace=False))
            for t in rng.uniform(0, DAY, 20):
                assert td_distance(g, o, d, t) == td_distance(c, o, d, t)

    def test_unpacks_to_original_arcs(self, rng):
        g = generate_instance("grid", 100, td_fraction=0.3, seed=1, chain_fraction=0.5)
        c = contract_degree2(g)
        for a in c.active_arcs():
            orig = c.unpack_path([int(a)], 0.0)
            assert all(c.is_original(x) for x in orig)


class TestWithArcTtf:
    def test_rejects_non_fifo(self):
        g = chain_graph()
        with pytest.raises(FifoError):
            g.with_arc_ttf(0, TTF([0, 100], [300, 100], DAY, validate=False))

    def test_shortcuts_follow(self):
        c = contract_degree2(chain_graph())
        c2 = c.with_arc_ttf(0, TTF.constant(10, DAY))
        a = int(c2.active_arcs()[0])
        assert c2.ttfs[a] == TTF.constant(13, DAY)
        assert c.ttfs[a] == TTF.constant(5, DAY)


@settings(max_examples=10, deadline=None)
@given(st.sampled_from(["grid", "ring", "random-planar"]), st.integers(1, 150), st.floats(0, 1), st.integers(0, 99))
def test_generated_instances_are_valid(kind, n, frac, seed):
    g = generate_instance(kind, n, td_fraction=frac, seed=seed)
    assert g.n >= n
    assert all(f.is_fifo() for f in g.ttfs)
    buf = io.StringIO()
    save_instance(g, buf)
    buf.seek(0)
    load_instance(buf)
