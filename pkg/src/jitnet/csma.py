"""Slotted CSMA backoff with a tagged node, in pull (JIT) or push mode.

Contending nodes are saturated: each always holds a frame, counts a
uniform backoff in ``[0, CW-1]`` idle slots and transmits at zero. Counters
freeze while the medium is busy. Collisions occupy the medium like any
transmission; nothing is retransmitted.

The tagged node wants one packet per ``gen_interval``:

* ``push``: the application generates at each cadence tick; the packet
  reaches the MAC ``turnaround`` later and only then starts its backoff.
* ``jit-pull``: the backoff starts at the cadence tick and the middleware
  pulls the packet from the application once the counter is down to
  ``ceil(turnaround / slot_time)``. If the counter hits zero first, the
  node holds until the packet arrives.

The simulation jumps from one decision point to the next instead of
stepping every slot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .clock import NS_PER_MS, NS_PER_US

CSMA_MODES = ("jit-pull", "push")


@dataclass
class BackoffState:
    counter: int
    slot_time: int
    contention_window: int
    frozen: bool = False

    def __post_init__(self):
        if self.counter < 0:
            raise ValueError("counter must be non-negative")

    def elapse(self, idle_slots: int) -> None:
        if self.frozen:
            raise RuntimeError("counter cannot decrement while the medium is busy")
        if idle_slots > self.counter:
            raise ValueError("cannot count below zero")
        self.counter -= idle_slots


@dataclass
class CsmaScenario:
    num_contenders: int = 5
    turnaround: int = 30 * NS_PER_US
    mode: str = "jit-pull"
    seed: int = 0
    num_packets: int = 10_000
    slot_time: int = 9 * NS_PER_US
    contention_window: int = 16
    airtime: int = 150 * NS_PER_US
    gen_interval: int = 2 * NS_PER_MS
    server_preset: bool = False  # counter starts at the pull threshold instead of a draw
    record_log: bool = False

    def __post_init__(self):
        if self.num_contenders < 0:
            raise ValueError("num_contenders must be >= 0")
        if self.mode not in CSMA_MODES:
            raise ValueError(f"mode must be one of {CSMA_MODES}, got {self.mode!r}")
        if self.turnaround < 0:
            raise ValueError("turnaround must be >= 0")
        if min(self.slot_time, self.airtime, self.gen_interval) <= 0:
            raise ValueError("slot_time, airtime and gen_interval must be positive")
        if self.contention_window < 1 or self.num_packets < 1:
            raise ValueError("contention_window and num_packets must be >= 1")

    @property
    def threshold(self) -> int:
        return math.ceil(self.turnaround / self.slot_time)


@dataclass
class CsmaResult:
    scenario: CsmaScenario
    waits: list[int] = field(default_factory=list)
    arrivals: list[int] = field(default_factory=list)
    tx_times: list[int] = field(default_factory=list)
    collisions: int = 0
    busy_log: list[tuple[int, int]] = field(default_factory=list)
    counter_log: list[tuple[int, int]] = field(default_factory=list)

    @property
    def mean_wait(self) -> float:
        return float(np.mean(self.waits))


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def run_csma(sc: CsmaScenario) -> CsmaResult:
    """Per-packet MAC wait (arrival to transmission) of the tagged node."""
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(sc.seed).spawn(sc.num_contenders + 1)]
    cw, slot, thr = sc.contention_window, sc.slot_time, sc.threshold
    jit = sc.mode == "jit-pull"

    def draw(node: int) -> int:
        return int(streams[node].integers(0, cw))

    res = CsmaResult(sc)
    log = sc.record_log
    contenders = [draw(n + 1) for n in range(sc.num_contenders)]
    t = 0  # medium idle from t; slot boundaries at t + k*slot
    tag: BackoffState | None = None
    arrival: int | None = None  # tagged packet at the MAC, None until pulled/generated
    nxt = 0  # cadence tick of the next packet
    last_tx_end = 0

    def note(time: int) -> None:
        if log:
            res.counter_log.append((time, tag.counter))

    while len(res.waits) < sc.num_packets:
        act = None
        k_act = k_pull = k_tx = math.inf
        if tag is None:
            tick = nxt * sc.gen_interval
            act = max(tick if jit else tick + sc.turnaround, last_tx_end)
            k_act = _ceil_div(act - t, slot) if act > t else 0
        else:
            if jit and arrival is None and tag.counter > thr:
                k_pull = tag.counter - thr
            if tag.counter > 0:
                k_tx = tag.counter
            elif arrival is not None:
                k_tx = _ceil_div(arrival - t, slot) if arrival > t else 0
        kc = min(contenders) if contenders else math.inf
        k = min(kc, k_act, k_pull, k_tx)

        if k:
            t += k * slot
            contenders = [c - k for c in contenders]
            if tag is not None:
                tag.elapse(min(k, tag.counter))
                note(t)

        if k == k_act:
            tag = BackoffState(thr if (jit and sc.server_preset) else draw(0), slot, cw)
            note(t)
            if not jit:
                arrival = nxt * sc.gen_interval + sc.turnaround
            elif tag.counter <= thr:
                # already inside the pull window: pull as late as the window allows
                arrival = max(act, t - (thr - tag.counter) * slot) + sc.turnaround
            nxt += 1
            continue
        if k == k_pull:
            arrival = t + sc.turnaround

        senders = [n for n, c in enumerate(contenders) if c == 0]
        tagged_tx = tag is not None and tag.counter == 0 and arrival is not None and arrival <= t
        if not senders and not tagged_tx:
            continue
        if len(senders) + tagged_tx > 1:
            res.collisions += 1
        if tagged_tx:
            res.waits.append(t - arrival)
            res.arrivals.append(arrival)
            res.tx_times.append(t)
            tag, arrival = None, None
            last_tx_end = t + sc.airtime
        elif tag is not None:
            tag.frozen = True
        if log:
            res.busy_log.append((t, t + sc.airtime))
        t += sc.airtime
        for n in senders:
            contenders[n] = draw(n + 1)
        if tag is not None:
            tag.frozen = False
    return res
