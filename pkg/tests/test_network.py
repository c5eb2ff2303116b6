import math
from collections import Counter

import pytest
from scipy.stats import chi2

from contagion_control import (
    EmpiricalCounts,
    EnumerationLimitError,
    InStubPool,
    NodePopulation,
    ParameterError,
    draw_in_stub,
    enumerate_matchings,
    instantiate,
)

from conftest import make_rng


class TestInstantiate:
    def test_three_nodes(self):
        pop = instantiate(EmpiricalCounts(n=3, counts={(1, 1, 0): 1, (1, 1, 1): 2}))
        assert pop.n == 3 and pop.m == 3
        assert pop.nodes == ((1, 1, 0), (1, 1, 1), (1, 1, 1))

    def test_ten_nodes(self):
        pop = instantiate(EmpiricalCounts(n=10, counts={(2, 2, 2): 8, (2, 2, 0): 2}))
        assert pop.n == 10 and pop.m == 20

    def test_empty_population(self):
        with pytest.raises(ParameterError, match="empty"):
            NodePopulation(nodes=())

    def test_deterministic_order(self):
        counts = EmpiricalCounts(n=4, counts={(2, 2, 1): 2, (1, 1, 0): 2})
        assert instantiate(counts).nodes == instantiate(counts).nodes


class TestDrawInStub:
    def test_single_stub_certain(self):
        pool = InStubPool([0, 1])  # node 1 has the only stub
        assert draw_in_stub(pool, make_rng(0)) == 1
        assert pool.remaining == 0

    def test_weighted_law(self):
        # node 0 keeps 2 stubs, node 1 keeps 1: P(node 0) = 2/3
        rng = make_rng(5)
        hits = 0
        trials = 100_000
        for _ in range(trials):
            pool = InStubPool([2, 1])
            if draw_in_stub(pool, rng) == 0:
                hits += 1
        p_hat = hits / trials
        se = math.sqrt((2 / 3) * (1 / 3) / trials)
        assert abs(p_hat - 2 / 3) < 3 * se

    def test_conservation(self):
        pool = InStubPool([3, 2, 1])
        rng = make_rng(1)
        for k in range(6):
            assert pool.remaining == 6 - k
            draw_in_stub(pool, rng)
        assert pool.remaining == 0

    def test_empty_pool_errors(self):
        pool = InStubPool([1])
        draw_in_stub(pool, make_rng(2))
        with pytest.raises(ParameterError):
            draw_in_stub(pool, make_rng(2))


class TestEnumerateMatchings:
    def _pop3(self):
        return instantiate(EmpiricalCounts(n=3, counts={(1, 1, 0): 1, (1, 1, 1): 2}))

    def test_counts_m3(self):
        assert sum(1 for _ in enumerate_matchings(self._pop3())) == 6

    def test_single_link(self):
        pop = instantiate(EmpiricalCounts(n=1, counts={(1, 1, 0): 1}))
        matchings = list(enumerate_matchings(pop))
        assert matchings == [matchings[0]]
        assert matchings[0].links == ((0, 0),)

    def test_permutation_complete(self):
        # each in-stub owner appears in each link slot exactly (m-1)! times
        pop = instantiate(EmpiricalCounts(n=4, counts={(1, 1, 0): 1, (1, 1, 1): 3}))
        position_counts = [Counter() for _ in range(pop.m)]
        total = 0
        for matching in enumerate_matchings(pop):
            total += 1
            for slot, (_src, dst) in enumerate(matching.links):
                position_counts[slot][dst] += 1
        assert total == math.factorial(pop.m)
        expected = math.factorial(pop.m - 1)
        for slot in range(pop.m):
            assert all(v == expected for v in position_counts[slot].values())

    def test_degree_multiplicity(self):
        # the degree-2 node owns two in-stubs and is drawn twice as often per slot
        pop = instantiate(EmpiricalCounts(n=2, counts={(2, 2, 0): 1, (1, 1, 1): 1}))
        assert pop.nodes == ((1, 1, 1), (2, 2, 0))
        first_slot = Counter(m.links[0][1] for m in enumerate_matchings(pop))
        assert first_slot[1] == 2 * first_slot[0]

    def test_refusal(self):
        pop = instantiate(EmpiricalCounts(n=11, counts={(1, 1, 1): 11}))
        with pytest.raises(EnumerationLimitError):
            next(iter(enumerate_matchings(pop)))


class TestSequentialEquivalence:
    def test_full_reveal_matches_uniform_matching(self):
        """Revealing all links with uniform in-stub draws hits every bijection
        equally often (chi-square over the 3! = 6 outcomes)."""
        rng = make_rng(17)
        counts = Counter()
        trials = 60_000
        for _ in range(trials):
            pool = InStubPool([1, 1, 1])
            perm = tuple(draw_in_stub(pool, rng) for _ in range(3))
            counts[perm] += 1
        assert len(counts) == 6
        expected = trials / 6
        stat = sum((obs - expected) ** 2 / expected for obs in counts.values())
        p_value = chi2.sf(stat, df=5)
        assert p_value > 0.001
