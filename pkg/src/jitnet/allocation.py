"""Client/server time-slot allocation on a ring of N TDMA slots.

Slots progress clockwise; the distance of a pair is always the clockwise
count ``(server - client) mod N``, never the shorter way round. A pair needs
a distance of at least ``beta = (ceil(D_s / slot) + 1) mod N``.

With equal ``beta`` for N/2 pairs, a packing where every distance is exactly
``beta`` exists iff the orbit of ``l -> l + beta (mod N)`` has even length;
the ``N / k`` orbits are induced from indexes ``0 .. N/k - 1`` and each is
split into consecutive (client, server) pairs. For a power-of-two N every
``beta`` works.

:func:`solve_general_allocation` extends this to per-pair ``beta_j``
(minimise the summed distance). It is exact by branch and bound on small
instances and falls back to a labelled greedy heuristic on large ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

DEFAULT_WORK_BOUND = 10**7


class AllocationInfeasible(ValueError):
    pass


class PackingInfeasible(AllocationInfeasible):
    def __init__(self, beta: int, n_slots: int, period: int):
        super().__init__(
            f"no optimal packing for beta={beta}, N={n_slots}: "
            f"subring period k={period} is odd"
        )
        self.beta = beta
        self.n_slots = n_slots
        self.period = period


@dataclass(frozen=True)
class RingConfig:
    n_slots: int
    slot_duration: int = 1  # ticks

    def __post_init__(self):
        if self.n_slots < 2 or self.n_slots % 2:
            raise ValueError(f"n_slots must be even and >= 2, got {self.n_slots}")
        if self.slot_duration <= 0:
            raise ValueError("slot_duration must be positive")

    @property
    def frame_duration(self) -> int:
        return self.n_slots * self.slot_duration


@dataclass(frozen=True)
class PairRequirement:
    pair_id: int
    beta_raw: int
    beta: int

    def __post_init__(self):
        if self.beta_raw < 1 or self.beta < 0:
            raise ValueError(f"invalid separation beta_raw={self.beta_raw}, beta={self.beta}")


def rounds_ahead(req: PairRequirement, ring: RingConfig) -> int:
    """Whole frames by which the response slot trails the request slot."""
    return req.beta_raw // ring.n_slots


def beta_from_delay(server_delay: int, ring: RingConfig, pair_id: int = 0) -> PairRequirement:
    if server_delay < 0:
        raise ValueError("server delay must be non-negative")
    raw = -(-server_delay // ring.slot_duration) + 1
    return PairRequirement(pair_id, raw, raw % ring.n_slots)


def requirement(beta: int, ring: RingConfig, pair_id: int = 0) -> PairRequirement:
    return PairRequirement(pair_id, beta, beta % ring.n_slots)


def distance(client: int, server: int, n_slots: int) -> int:
    return (server - client) % n_slots


@dataclass
class SlotAllocation:
    pairs: list[tuple[int, int]]
    n_slots: int
    betas: list[int] | None = None
    exact: bool = True

    def __post_init__(self):
        self.pairs = [(int(c), int(s)) for c, s in self.pairs]
        self.validate()

    @property
    def distances(self) -> list[int]:
        return [distance(c, s, self.n_slots) for c, s in self.pairs]

    @property
    def total_distance(self) -> int:
        return sum(self.distances)

    def slots(self) -> list[int]:
        return [x for pair in self.pairs for x in pair]

    def validate(self) -> None:
        used = self.slots()
        for x in used:
            if not 0 <= x < self.n_slots:
                raise AllocationInfeasible(f"slot {x} outside ring of {self.n_slots}")
        if len(set(used)) != len(used):
            dup = sorted({x for x in used if used.count(x) > 1})
            raise AllocationInfeasible(f"slots used more than once: {dup}")
        if self.betas is not None:
            if len(self.betas) != len(self.pairs):
                raise ValueError("one beta per pair required")
            for j, (d, b) in enumerate(zip(self.distances, self.betas)):
                if d < b:
                    raise AllocationInfeasible(f"pair {j} distance {d} < beta {b}")

    def rows(self) -> list[dict]:
        betas = self.betas or [None] * len(self.pairs)
        return [
            {"pair_id": j, "client_slot": c, "server_slot": s, "beta": b,
             "distance": distance(c, s, self.n_slots)}
            for j, ((c, s), b) in enumerate(zip(self.pairs, betas))
        ]


@dataclass(frozen=True)
class Subring:
    inducing_index: int
    members: tuple[int, ...]

    @property
    def period(self) -> int:
        return len(self.members)


class Feasibility(NamedTuple):
    feasible: bool
    period: int


def subring_period(beta: int, n_slots: int) -> int:
    """Smallest k > 0 with ``k * beta = 0 (mod N)``."""
    return n_slots // math.gcd(beta, n_slots)


def induce_subring(l: int, beta: int, ring: RingConfig) -> Subring:
    n = ring.n_slots
    if not 0 <= l < n:
        raise ValueError(f"index {l} outside ring")
    if not 1 <= beta < n:
        raise ValueError(f"beta must lie in [1, {n}), got {beta}")
    members = [l]
    x = (l + beta) % n
    while x != l:
        members.append(x)
        x = (x + beta) % n
    return Subring(l, tuple(members))


def packing_feasible(beta: int, ring: RingConfig) -> Feasibility:
    if not 1 <= beta < ring.n_slots:
        raise ValueError(f"beta must lie in [1, {ring.n_slots}), got {beta}")
    k = subring_period(beta, ring.n_slots)
    return Feasibility(k % 2 == 0, k)


def construct_optimal_packing(beta: int, ring: RingConfig,
                              order: str = "client-first") -> SlotAllocation:
    """N/2 pairs, each exactly ``beta`` apart.

    ``order`` picks which of the two packings per subring is used: the
    inducing index as a client slot (``client-first``) or as a server slot
    (``server-first``).
    """
    if order not in ("client-first", "server-first"):
        raise ValueError(f"unknown order {order!r}")
    ok, k = packing_feasible(beta, ring)
    if not ok:
        raise PackingInfeasible(beta, ring.n_slots, k)
    pairs = []
    for l in range(ring.n_slots // k):
        m = induce_subring(l, beta, ring).members
        if order == "server-first":
            m = m[1:] + m[:1]
        pairs.extend((m[i], m[i + 1]) for i in range(0, k, 2))
    return SlotAllocation(pairs, ring.n_slots, [beta] * len(pairs))


def search_space(n_slots: int, num_pairs: int) -> int:
    """Injections of 2P labelled endpoints into N slots, modulo rotation."""
    return math.perm(n_slots, 2 * num_pairs) // n_slots


def _min_distance(beta: int) -> int:
    return max(beta, 1)


def _exact_search(betas: Sequence[int], n: int) -> list[tuple[int, int]] | None:
    # Depth-first in lexicographic order of (c0, s0, c1, s1, ...); only strict
    # improvements replace the incumbent, so ties resolve to the lexicographically
    # smallest allocation. Rotating any optimum to c0 = 0 keeps it optimal and
    # lexicographically smaller, hence c0 is pinned to 0.
    p = len(betas)
    need = [_min_distance(b) for b in betas]
    tail = [0] * (p + 1)
    for j in range(p - 1, -1, -1):
        tail[j] = tail[j + 1] + need[j]
    used = [False] * n
    cur: list[tuple[int, int]] = []
    best: list = [None, math.inf]

    def visit(j: int, cost: int) -> None:
        if cost + tail[j] >= best[1]:
            return
        if j == p:
            best[0], best[1] = list(cur), cost
            return
        clients = [0] if j == 0 else range(n)
        for c in clients:
            if used[c]:
                continue
            used[c] = True
            for s in range(n):
                if used[s]:
                    continue
                d = (s - c) % n
                if d < need[j]:
                    continue
                used[s] = True
                cur.append((c, s))
                visit(j + 1, cost + d)
                cur.pop()
                used[s] = False
            used[c] = False

    visit(0, 0)
    return best[0]


def _greedy(betas: Sequence[int], n: int) -> list[tuple[int, int]] | None:
    order = sorted(range(len(betas)), key=lambda j: (-betas[j], j))
    used = [False] * n
    pairs: dict[int, tuple[int, int]] = {}
    for j in order:
        choice = None
        for d in range(_min_distance(betas[j]), n):
            for c in range(n):
                s = (c + d) % n
                if not used[c] and not used[s]:
                    choice = (c, s)
                    break
            if choice:
                break
        if choice is None:
            return None
        used[choice[0]] = used[choice[1]] = True
        pairs[j] = choice
    return [pairs[j] for j in range(len(betas))]


def solve_general_allocation(requirements: Sequence[PairRequirement], ring: RingConfig,
                             work_bound: int = DEFAULT_WORK_BOUND) -> SlotAllocation:
    """Injective allocation minimising the summed clockwise distance.

    The returned allocation has ``exact=False`` when the instance was too
    large for exhaustive search and the greedy fallback was used.
    """
    n = ring.n_slots
    betas = [r.beta for r in requirements]
    if not betas:
        return SlotAllocation([], n, [])
    if 2 * len(betas) > n:
        raise AllocationInfeasible(f"{len(betas)} pairs need {2 * len(betas)} slots, ring has {n}")
    for b in betas:
        if not 0 <= b < n:
            raise ValueError(f"beta {b} outside [0, {n})")
    if search_space(n, len(betas)) <= work_bound:
        pairs, exact = _exact_search(betas, n), True
    else:
        pairs, exact = _greedy(betas, n), False
    if pairs is None:
        raise AllocationInfeasible("no injective allocation satisfies the separations")
    return SlotAllocation(pairs, n, betas, exact=exact)


def multi_slot_assignment(pair: PairRequirement, ring: RingConfig, interactions_per_frame: int,
                          occupied: Iterable[int] = ()) -> list[tuple[int, int]]:
    """Several slot pairs per frame for one client/server pair.

    Client slots are placed as close as possible to the evenly spaced ideal
    positions ``m * N / interactions``; each server slot sits exactly the
    minimum distance after its client slot.
    """
    if interactions_per_frame < 1:
        raise ValueError("interactions_per_frame must be >= 1")
    n = ring.n_slots
    d = _min_distance(pair.beta)
    used = [False] * n
    for x in occupied:
        used[x] = True
    if 2 * interactions_per_frame > n - sum(used):
        raise AllocationInfeasible("not enough free slots")
    out = []
    for m in range(interactions_per_frame):
        ideal = round(m * n / interactions_per_frame)
        for step in range(n):
            c = (ideal + step) % n
            s = (c + d) % n
            if not used[c] and not used[s]:
                used[c] = used[s] = True
                out.append((c, s))
                break
        else:
            raise AllocationInfeasible(
                f"cannot place interaction {m + 1} of {interactions_per_frame} at distance {d}"
            )
    return out
