import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from tdoracle.codec import CodecConfig
from tdoracle.flat import EXACT, UNREACHABLE, VIA_LANDMARK, FlatOracle, rqa_sigma
from tdoracle.generate import generate_instance
from tdoracle.graph import FREE_FLOW, TDGraph
from tdoracle.landmarks import select_sparse_random
from tdoracle.persist import load_oracle, save_oracle
from tdoracle.search import static_distances, td_distance
from tdoracle.trap import TrapConfig
from tdoracle.ttf import TTF

from conftest import DAY, line_graph

S = CodecConfig().s


@pytest.fixture(scope="module")
def oracle():
    g = generate_instance("grid", 900, td_fraction=0.3, seed=21, amplitude=(0.5, 1.5))
    lms = select_sparse_random(g, 25, 15, seed=1)
    return FlatOracle.preprocess(g, lms)


def within(res, exact, eps, slack=0.0):
    return exact - 1e-9 <= res.value <= (1 + eps) * exact + 2 * S + slack


class TestBasics:
    def test_constant_graph_gives_static_distances(self):
        g = generate_instance("grid", 100, td_fraction=0.0, seed=3)
        # distances are multiples of 1/8 s, so this scale stores them exactly
        o = FlatOracle.preprocess(g, [12], codec_cfg=CodecConfig(s=0.125))
        ff = static_distances(g, 12, FREE_FLOW)
        blk = o.store.block(12)
        for v in range(g.n):
            assert blk.eval(v, 5000.0) == ff[v]

    def test_same_vertex(self, oracle):
        r = oracle.fca(5, 5, 1000.0)
        assert r.value == 0 and r.tag == EXACT and r.exact

    def test_origin_is_landmark(self, oracle):
        l = int(oracle.landmark_ids[0])
        rng = np.random.default_rng(0)
        for d in rng.choice(oracle.graph.n, 30, replace=False):
            t = float(rng.uniform(0, DAY))
            r = oracle.fca(l, int(d), t)
            exact = td_distance(oracle.graph, l, int(d), t)
            assert within(r, exact, oracle.epsilon)
            if r.tag == VIA_LANDMARK:
                assert r.landmarks == [l] and r.rank == 1

    def test_disconnected_instance(self):
        f = TTF.constant(5.0, DAY)
        g = TDGraph(3, [0, 1], [1, 0], [f, f], DAY)
        with pytest.raises(ValueError, match="disconnected"):
            FlatOracle.preprocess(g, [2])

    def test_unreachable(self):
        f = TTF.constant(5.0, DAY)
        g = TDGraph(4, [0, 1, 2, 3], [1, 0, 3, 2], [f] * 4, DAY)
        o = FlatOracle.preprocess(g, [0])
        r = o.fca(2, 0, 0.0)
        assert r.tag == UNREACHABLE and math.isinf(r.value) and not r.reachable
        assert o.rqa(2, 0, 0.0).tag == UNREACHABLE
        assert o.fca_plus(2, 0, 0.0, 3).tag == UNREACHABLE

    def test_exact_path(self):
        g = line_graph([3.0, 4.0, 5.0])
        o = FlatOracle.preprocess(g, [3])
        r = o.fca(0, 2, 10.0)
        assert r.exact and r.value == 7.0 and r.path == [0, 2]

    def test_bad_arguments(self, oracle):
        with pytest.raises(ValueError):
            oracle.fca_plus(0, 1, 0.0, 0)
        with pytest.raises(ValueError):
            oracle.rqa(0, 1, 0.0, -1)
        with pytest.raises(ValueError):
            oracle.query(0, 1, 0.0, "ALT")

    def test_dispatch(self, oracle):
        assert oracle.query(3, 800, 0.0).algorithm == "FCA"
        assert oracle.query(3, 800, 0.0, "fca+", N=2).algorithm == "FCA+(2)"
        assert oracle.query(3, 800, 0.0, "RQA", r=2).algorithm == "RQA(2)"


class TestSigma:
    def test_formula(self):
        eps, psi, r = 0.1, 0.5, 1
        q = (1 + eps / psi) ** 2
        assert rqa_sigma(eps, psi, r) == pytest.approx(eps * q / (q - 1))
        assert rqa_sigma(0.1, 0.5, 1) == pytest.approx(0.3272727, rel=1e-6)

    def test_shrinks_with_budget(self):
        vals = [rqa_sigma(0.1, 0.5, r) for r in range(6)]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert vals[-1] > 0.1

    def test_reported(self, oracle):
        o2 = FlatOracle(oracle.graph, oracle.landmark_ids, oracle.store, oracle.index,
                        oracle.trap_cfg, oracle.codec_cfg, psi=0.5)
        r = o2.rqa(0, 899, 30000.0)
        assert r.exact or "sigma=0.327273" in r.guarantee


queries = st.tuples(st.integers(0, 899), st.integers(0, 899), st.floats(0, 3 * DAY))


class TestProperties:
    @settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(queries)
    def test_never_underestimates_and_chain(self, oracle, q):
        o, d, t = q
        exact = td_distance(oracle.graph, o, d, t)
        fca = oracle.fca(o, d, t)
        plus = oracle.fca_plus(o, d, t, 6)
        one = oracle.fca_plus(o, d, t, 1)
        rqa0 = oracle.rqa(o, d, t, 0)
        rqa = oracle.rqa(o, d, t, 1)
        for r in (fca, plus, rqa):
            assert r.value >= exact - 1e-9
            if r.exact:
                assert r.value == exact
        assert one.value == fca.value and one.rank == fca.rank
        assert rqa0.value == fca.value
        assert plus.value <= fca.value and rqa.value <= fca.value
        assert fca.rank <= oracle.graph.n

    def test_day_shift_invariance(self, oracle):
        a = oracle.fca(10, 700, 30000.0)
        b = oracle.fca(10, 700, 30000.0 + 2 * DAY)
        assert a.value == b.value and a.rank == b.rank


class TestBenchmarkShape:
    def test_improvements_over_fca(self, oracle):
        rng = np.random.default_rng(5)
        errs = {"fca": [], "plus": [], "rqa": []}
        ranks = {"fca": [], "rqa": []}
        for _ in range(150):
            o, d = rng.choice(900, 2, replace=False)
            t = float(rng.uniform(9 * 3600, 20 * 3600))
            ex = td_distance(oracle.graph, int(o), int(d), t)
            f, p, r = oracle.fca(o, d, t), oracle.fca_plus(o, d, t, 6), oracle.rqa(o, d, t, 1)
            errs["fca"].append(f.value / ex - 1)
            errs["plus"].append(p.value / ex - 1)
            errs["rqa"].append(r.value / ex - 1)
            ranks["fca"].append(f.rank)
            ranks["rqa"].append(r.rank)
        assert np.mean(errs["plus"]) < np.mean(errs["fca"])
        assert np.mean(errs["rqa"]) < np.mean(errs["fca"])
        assert np.mean(ranks["rqa"]) > np.mean(ranks["fca"])


class TestConcurrency:
    def test_parallel_queries_match_serial(self, oracle):
        rng = np.random.default_rng(8)
        qs = [(int(a), int(b), float(t)) for a, b, t in zip(rng.integers(0, 900, 40), rng.integers(0, 900, 40),
                                                             rng.uniform(0, DAY, 40))]
        serial = [oracle.rqa(*q).value for q in qs]
        with ThreadPoolExecutor(4) as ex:
            par = list(ex.map(lambda q: oracle.rqa(*q).value, qs))
        assert par == serial

    def test_parallel_preprocessing(self):
        g = generate_instance("grid", 144, td_fraction=0.3, seed=4)
        a = FlatOracle.preprocess(g, [0, 50, 100], workers=3)
        b = FlatOracle.preprocess(g, [0, 50, 100], trap_cfg=a.trap_cfg)
        for l in (0, 50, 100):
            assert a.store.blobs[l] == b.store.blobs[l]


class TestPersistence:
    def test_save_load(self, oracle, tmp_path):
        p = tmp_path / "flat.tdor"
        save_oracle(oracle, p)
        back = load_oracle(oracle.graph, p)
        assert list(back.landmark_ids) == list(oracle.landmark_ids)
        assert back.trap_cfg.grid(DAY) == oracle.trap_cfg.grid(DAY)
        assert back.trap_cfg.slope_bounds == oracle.trap_cfg.slope_bounds
        for o, d, t in [(1, 800, 100.0), (400, 3, 50000.0), (77, 78, 70000.0)]:
            a, b = oracle.rqa(o, d, t), back.rqa(o, d, t)
            assert a.value == b.value and a.rank == b.rank
