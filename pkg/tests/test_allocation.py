import pytest
from hypothesis import given, settings, strategies as st

from jitnet.allocation import (AllocationInfeasible, PackingInfeasible, PairRequirement, RingConfig, SlotAllocation,
                               beta_from_delay, construct_optimal_packing, distance,
                               induce_subring, multi_slot_assignment, packing_feasible,
                               requirement, rounds_ahead, search_space, solve_general_allocation,
                               subring_period)
from oracles import brute_force_min_total, exact_packing_exists

US = 1_000


def test_beta_from_delay():
    ring = RingConfig(64, 150 * US)
    r = beta_from_delay(30 * US, ring)
    assert (r.beta_raw, r.beta) == (2, 2)
    ring10 = RingConfig(10, 1_000)
    assert (beta_from_delay(2_300, ring10).beta_raw, beta_from_delay(2_300, ring10).beta) == (4, 4)
    r = beta_from_delay(12_000, ring10)
    assert (r.beta_raw, r.beta, rounds_ahead(r, ring10)) == (13, 3, 1)
    assert beta_from_delay(0, ring10).beta == 1
    with pytest.raises(ValueError):
        beta_from_delay(-1, ring10)


def test_ring_config():
    assert RingConfig(64, 150 * US).frame_duration == 9_600 * US
    for bad in (3, 0):
        with pytest.raises(ValueError):
            RingConfig(bad)


def test_clockwise_distance_only():
    assert distance(8, 1, 10) == 3
    assert distance(1, 8, 10) == 7  # never the short way round


@pytest.mark.parametrize("l,beta,members", [
    (0, 3, (0, 3, 6, 9, 2, 5, 8, 1, 4, 7)),
    (0, 2, (0, 2, 4, 6, 8)),
    (0, 5, (0, 5)),
    (3, 5, (3, 8)),
])
def test_induce_subring(l, beta, members):
    s = induce_subring(l, beta, RingConfig(10))
    assert s.members == members and s.period == len(members)


def test_packing_feasible_examples():
    assert packing_feasible(3, RingConfig(10)) == (True, 10)
    assert packing_feasible(2, RingConfig(10)) == (False, 5)
    assert all(packing_feasible(b, RingConfig(64)).feasible for b in range(1, 64))
    with pytest.raises(ValueError):
        packing_feasible(10, RingConfig(10))


def test_construct_packing_examples():
    ring = RingConfig(10)
    assert construct_optimal_packing(3, ring).pairs == [(0, 3), (6, 9), (2, 5), (8, 1), (4, 7)]
    assert set(construct_optimal_packing(5, ring).pairs) == {(0, 5), (1, 6), (2, 7), (3, 8), (4, 9)}
    with pytest.raises(PackingInfeasible) as e:
        construct_optimal_packing(2, ring)
    assert e.value.period == 5 and "odd" in str(e.value)


def test_server_first_order():
    p = construct_optimal_packing(3, RingConfig(10), order="server-first")
    assert all(d == 3 for d in p.distances)
    assert p.pairs[0] == (3, 6)


def test_feasibility_matches_exhaustive_search_small():
    for n in range(2, 13, 2):
        for b in range(1, n):
            assert packing_feasible(b, RingConfig(n)).feasible == exact_packing_exists(b, n)


@pytest.mark.parametrize("n", [4, 8, 16, 32])
def test_constructed_packings_exact(n):
    ring = RingConfig(n)
    for b in range(1, n):
        p = construct_optimal_packing(b, ring)
        assert len(p.pairs) == n // 2
        assert all(d == b for d in p.distances)
        assert sorted(p.slots()) == list(range(n))


@settings(max_examples=200)
@given(st.integers(1, 40).map(lambda h: 2 * h), st.data())
def test_subrings_partition_ring(n, data):
    b = data.draw(st.integers(1, n - 1))
    ring = RingConfig(n)
    k = subring_period(b, n)
    h = n // k
    members = [m for l in range(h) for m in induce_subring(l, b, ring).members]
    assert sorted(members) == list(range(n))
    assert h * k == n


@pytest.mark.parametrize("n", [6, 10, 12, 20, 24, 48])
def test_non_power_of_two_has_infeasible_beta(n):
    g = (n & -n)  # 2^g dividing N exactly
    assert not packing_feasible(g, RingConfig(n)).feasible


def test_slot_allocation_validation():
    with pytest.raises(AllocationInfeasible):
        SlotAllocation([(0, 2), (1, 3), (2, 4)], 64)  # slot 2 reused
    with pytest.raises(AllocationInfeasible):
        SlotAllocation([(0, 70)], 64)
    with pytest.raises(AllocationInfeasible):
        SlotAllocation([(0, 1)], 64, betas=[2])
    a = SlotAllocation([(8, 1)], 10, betas=[3])
    assert a.rows() == [{"pair_id": 0, "client_slot": 8, "server_slot": 1, "beta": 3, "distance": 3}]


# Optimal totals below were computed by brute_force_min_total and frozen.
@pytest.mark.parametrize("n,betas,total", [
    (4, [1, 1], 2),
    (4, [3, 3], 6),
    (10, [2, 2, 2, 2, 2], 11),
    (8, [3, 1, 2], 6),
    (6, [5, 5, 5], 15),
    (6, [2, 2, 2], 7),
])
def test_general_allocation_optimum(n, betas, total):
    ring = RingConfig(n)
    a = solve_general_allocation([requirement(b, ring, j) for j, b in enumerate(betas)], ring)
    assert a.exact and a.total_distance == total
    assert all(d >= b for d, b in zip(a.distances, betas))


def test_frozen_optima_match_oracle():
    for n, betas, total in [(4, [1, 1], 2), (4, [3, 3], 6), (8, [3, 1, 2], 6),
                            (6, [5, 5, 5], 15), (6, [2, 2, 2], 7)]:
        assert brute_force_min_total(betas, n) == total


def test_ten_slot_optimum_matches_oracle():
    assert brute_force_min_total([2] * 5, 10) == 11


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([4, 6, 8]), st.data())
def test_solver_matches_brute_force(n, data):
    p = data.draw(st.integers(1, min(3, n // 2)))
    betas = data.draw(st.lists(st.integers(0, n - 1), min_size=p, max_size=p))
    ring = RingConfig(n)
    reqs = [PairRequirement(j, b or n, b) for j, b in enumerate(betas)]
    best = brute_force_min_total(betas, n)
    if best is None:
        with pytest.raises(AllocationInfeasible):
            solve_general_allocation(reqs, ring)
    else:
        assert solve_general_allocation(reqs, ring).total_distance == best


def test_greedy_fallback_flagged_and_valid():
    ring = RingConfig(64)
    reqs = [requirement(b, ring, j) for j, b in enumerate([5, 3, 9, 2, 7, 2])]
    assert search_space(64, 6) > 10**7
    a = solve_general_allocation(reqs, ring)
    assert not a.exact
    a.validate()
    assert a.total_distance == sum(r.beta for r in reqs)


def test_general_allocation_errors():
    ring = RingConfig(4)
    with pytest.raises(AllocationInfeasible):
        solve_general_allocation([requirement(1, ring, j) for j in range(3)], ring)


def test_multi_slot_assignment():
    ring = RingConfig(64)
    assert multi_slot_assignment(requirement(8, ring), ring, 2) == [(0, 8), (32, 40)]
    assert multi_slot_assignment(requirement(8, ring), ring, 1) == [(0, 8)]
    ring16 = RingConfig(16)
    out = multi_slot_assignment(requirement(4, ring16), ring16, 2)
    assert len(set(x for p in out for x in p)) == 4
    assert all(distance(c, s, 16) >= 4 for c, s in out)
    with pytest.raises(AllocationInfeasible):
        multi_slot_assignment(requirement(4, ring16), ring16, 9)
