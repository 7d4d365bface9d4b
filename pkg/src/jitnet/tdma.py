"""Event-driven TDMA request/response simulation for one client-server pair.

Timeline of one exchange (all on the MAC clock, integer ns)::

    t0  application starts generating the request (pull or self-scheduled)
    t1  request reaches the MAC FIFO
    t2  client slot starts, transmission begins
    t3  first bit at the server          t4  last bit leaves the client
    t5  last bit at the server
    t6  response ready at the server MAC
    t7  server slot starts               t8  first bit at the client
    t9  last bit leaves the server       t10 last bit at the client

In JIT mode the client generates only when the controller's pull fires; in
baseline mode it generates once per frame on its own (JIT) clock. Other
pairs of the allocation only occupy their slots.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, fields
from typing import Callable, NamedTuple

import numpy as np

from .allocation import RingConfig, SlotAllocation, construct_optimal_packing
from .clock import DEFAULT_DRIFT, NS_PER_US, VirtualClock, setting_clock
from .engine import DELIVERY, SLOT, START, EventLoop
from .sync import (DEFAULT_ALPHA, DEFAULT_Q, SchedulingOverrun, SlackFeedback, SyncState,
                   compute_slack, estimate_st_target)

DISTRIBUTIONS = ("none", "uniform", "two-point")
MODES = ("jit", "baseline")
FIRST_FRAME = 1
_BLOCK = 4096


class ConfigError(ValueError):
    pass


class IncompleteTrace(ValueError):
    pass


@dataclass(frozen=True)
class PreemptionModel:
    """Processing delay ``base_delay + X`` with ``X`` in ``[0, jitter_max]``."""

    base_delay: int
    jitter_max: int = 0
    distribution: str = "uniform"

    def __post_init__(self):
        if self.base_delay < 0 or self.jitter_max < 0:
            raise ConfigError("delays must be non-negative")
        if self.distribution not in DISTRIBUTIONS:
            raise ConfigError(f"unknown distribution {self.distribution!r}; use one of {DISTRIBUTIONS}")

    def sampler(self, rng: np.random.Generator) -> Callable[[], int]:
        base, j = self.base_delay, self.jitter_max
        if self.distribution == "none" or j == 0:
            return lambda: base
        hi = j + 1 if self.distribution == "uniform" else 2
        scale = 1 if self.distribution == "uniform" else j
        buf: list[int] = []

        def draw() -> int:
            if not buf:
                buf.extend((rng.integers(0, hi, size=_BLOCK) * scale + base)[::-1].tolist())
            return buf.pop()

        return draw


def default_allocation(ring: RingConfig, beta: int = 2, num_pairs: int = 5) -> SlotAllocation:
    pk = construct_optimal_packing(beta, ring)
    return SlotAllocation(pk.pairs[:num_pairs], ring.n_slots, pk.betas[:num_pairs])


TABLE1_RING = RingConfig(64, 150 * NS_PER_US)


@dataclass
class ExperimentConfig:
    mode: str = "jit"
    clock_setting: int = 1
    drift: float = DEFAULT_DRIFT
    tick_ratio: float | None = None  # overrides clock_setting/drift
    ring: RingConfig = TABLE1_RING
    allocation: SlotAllocation | None = None
    traced_pair: int = 0
    client: PreemptionModel = PreemptionModel(30 * NS_PER_US, 30 * NS_PER_US, "uniform")
    server: PreemptionModel = PreemptionModel(30 * NS_PER_US, 0, "none")
    alpha: float = DEFAULT_ALPHA
    st_target_override: int | None = None
    q_init: int = DEFAULT_Q
    num_frames: int = 10_000
    seed: int = 0
    propagation_delay: int = 0
    fifo_capacity: int = 64
    airtime: int | None = None  # defaults to a full slot
    baseline_offset: int | None = None  # first baseline generation, JIT clock; random if None

    def __post_init__(self):
        if self.allocation is None:
            self.allocation = default_allocation(self.ring)
        self.validate()

    @property
    def clock(self) -> VirtualClock:
        if self.tick_ratio is not None:
            return VirtualClock(self.tick_ratio)
        return setting_clock(self.clock_setting, self.drift)

    @property
    def pair_slots(self) -> tuple[int, int]:
        return self.allocation.pairs[self.traced_pair]

    @property
    def tx_time(self) -> int:
        return self.ring.slot_duration if self.airtime is None else self.airtime

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.num_frames < 1:
            raise ConfigError("num_frames must be >= 1")
        if self.allocation.n_slots != self.ring.n_slots:
            raise ConfigError("allocation was built for a different ring size")
        if not 0 <= self.traced_pair < len(self.allocation.pairs):
            raise ConfigError(f"traced_pair {self.traced_pair} not in allocation")
        if self.tick_ratio is None:
            setting_clock(self.clock_setting, self.drift)
        elif self.tick_ratio <= 0:
            raise ConfigError("tick_ratio must be positive")
        F = self.ring.frame_duration
        if self.server.base_delay + self.server.jitter_max >= F:
            raise ConfigError("server delay must stay below one frame")
        if not 0 < self.tx_time <= self.ring.slot_duration:
            raise ConfigError("airtime must lie in (0, slot_duration]")
        if not 0 <= self.propagation_delay <= self.tx_time:
            raise ConfigError("propagation_delay must lie in [0, airtime]")
        if self.fifo_capacity < 1:
            raise ConfigError("fifo_capacity must be >= 1")
        if self.q_init < 2 and self.st_target_override is None:
            raise ConfigError("q_init must be >= 2")
        if self.baseline_offset is not None and self.baseline_offset < 0:
            raise ConfigError("baseline_offset must be non-negative")


@dataclass(slots=True)
class ExchangeTrace:
    pair_id: int
    frame_index: int
    t0: int | None = None
    t1: int | None = None
    t2: int | None = None
    t3: int | None = None
    t4: int | None = None
    t5: int | None = None
    t6: int | None = None
    t7: int | None = None
    t8: int | None = None
    t9: int | None = None
    t10: int | None = None

    def times(self) -> list[int | None]:
        return [self.t0, self.t1, self.t2, self.t3, self.t4, self.t5,
                self.t6, self.t7, self.t8, self.t9, self.t10]

    @property
    def complete(self) -> bool:
        return None not in self.times()

    @property
    def d_c(self) -> int:
        return self.t1 - self.t0

    @property
    def w_c(self) -> int:
        return self.t2 - self.t1

    @property
    def t_phy_c(self) -> int:
        return self.t5 - self.t2

    @property
    def d_s(self) -> int:
        return self.t6 - self.t5

    @property
    def w_s(self) -> int:
        return self.t7 - self.t6

    @property
    def t_phy_s(self) -> int:
        return self.t10 - self.t7

    @property
    def rtt(self) -> int:
        return self.t10 - self.t0


TRACE_COLUMNS = ["frame", "pair"] + [f"t{k}" for k in range(11)] + [
    "d_c", "w_c", "t_phy_c", "d_s", "w_s", "t_phy_s", "rtt"]


class RttBreakdown(NamedTuple):
    d_c: int
    w_c: int
    t_phy_c: int
    d_s: int
    w_s: int
    t_phy_s: int

    @property
    def total(self) -> int:
        return sum(self)


def decompose_rtt(trace: ExchangeTrace) -> RttBreakdown:
    if not trace.complete:
        missing = [f"t{k}" for k, t in enumerate(trace.times()) if t is None]
        raise IncompleteTrace(f"trace lacks {', '.join(missing)}")
    return RttBreakdown(trace.d_c, trace.w_c, trace.t_phy_c, trace.d_s, trace.w_s, trace.t_phy_s)


def trace_row(tr: ExchangeTrace) -> list[int]:
    return [tr.frame_index, tr.pair_id, *tr.times(), *decompose_rtt(tr), tr.rtt]


class OccupancySample(NamedTuple):
    frame: int
    slot: int
    occupancy: int
    underflow: bool


class PullRecord(NamedTuple):
    """Controller telemetry for packet ``i`` (JIT mode)."""

    packet: int
    pull_local: float  # scheduled pull on the JIT clock
    pull_mac: int  # instant the pull actually fired, MAC clock
    d_c: int
    arrival: int
    scheduled: int  # nominal transmission slot, MAC clock
    slack: int
    n_hat: float  # adjustment applied to the next pull
    overrun: bool


TELEMETRY_COLUMNS = list(PullRecord._fields)


class FifoBuffer:
    def __init__(self, capacity: int):
        self.capacity = capacity
        self._q: deque = deque()
        self.underflow_events = 0
        self.overflow_events = 0

    @property
    def occupancy(self) -> int:
        return len(self._q)

    def push(self, item) -> bool:
        """Queue ``item``; returns False (and counts an overflow) when full."""
        if len(self._q) >= self.capacity:
            self.overflow_events += 1
            return False
        self._q.append(item)
        return True

    def pop(self):
        """Head-of-line item, or None (counting an underflow) when empty."""
        if not self._q:
            self.underflow_events += 1
            return None
        return self._q.popleft()


@dataclass
class RunResult:
    config: ExperimentConfig
    traces: list[ExchangeTrace] = field(default_factory=list)
    occupancy: list[OccupancySample] = field(default_factory=list)
    telemetry: list[PullRecord] = field(default_factory=list)
    st_target: float | None = None
    fifo: FifoBuffer | None = None
    overflowed: bool = False
    server_underflows: int = 0
    stale_responses: int = 0
    overruns: int = 0
    end_time: int = 0

    @property
    def partial(self) -> bool:
        return self.overflowed

    def wc_series(self) -> list[tuple[int, int]]:
        return [(t.frame_index, t.w_c) for t in self.traces]

    def rtt_series(self) -> list[tuple[int, int]]:
        return [(t.frame_index, t.rtt) for t in self.traces]


class _Sim:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.F = cfg.ring.frame_duration
        self.dt = cfg.ring.slot_duration
        self.c_slot, self.s_slot = cfg.pair_slots
        self.clock = cfg.clock
        self.loop = EventLoop()
        ss = np.random.SeedSequence(cfg.seed)
        r_offset, r_client, r_server, r_init = (np.random.default_rng(s) for s in ss.spawn(4))
        self.rng_offset = r_offset
        self.draw_client = cfg.client.sampler(r_client)
        self.draw_server = cfg.server.sampler(r_server)
        self.draw_init = cfg.client.sampler(r_init)
        self.fifo = FifoBuffer(cfg.fifo_capacity)
        self.res = RunResult(cfg, fifo=self.fifo)
        self.last_frame = FIRST_FRAME + cfg.num_frames - 1
        self.server_ready: ExchangeTrace | None = None
        self.next_packet = 0

    def slot_time(self, frame: int, slot: int) -> int:
        return frame * self.F + slot * self.dt

    def first_tx(self) -> int:
        return self.slot_time(FIRST_FRAME, self.c_slot)

    def run(self) -> RunResult:
        cfg, loop = self.cfg, self.loop
        if cfg.mode == "jit":
            self._start_jit()
        else:
            self._start_baseline()
        loop.at(self.first_tx(), SLOT, self._client_slot, FIRST_FRAME)
        first_srv = self.slot_time(FIRST_FRAME, self.s_slot)
        if first_srv <= self.first_tx():
            first_srv += self.F
        loop.at(first_srv, SLOT, self._server_slot, first_srv // self.F)
        loop.run()
        self.res.end_time = loop.now
        return self.res

    # client application side

    def _start_jit(self) -> None:
        cfg = self.cfg
        if cfg.st_target_override is not None:
            st_target = float(cfg.st_target_override)
            probe_max = cfg.client.base_delay + cfg.client.jitter_max
        else:
            probes = [self.clock.local_duration(self.draw_init()) for _ in range(cfg.q_init)]
            st_target = estimate_st_target(probes)
            probe_max = max(probes)
        self.res.st_target = st_target
        first_local = self.clock.to_local(self.first_tx()) - round(st_target + probe_max)
        if first_local < self.clock.initial_offset:
            raise ConfigError("first slot too early for the initial pull lead")
        self.ctrl = SyncState.start(first_local, self.F, st_target, cfg.alpha)
        self._schedule_pull(0, first_local, False)

    def _schedule_pull(self, i: int, pull_local: float, overrun: bool) -> None:
        t = self.loop.now if overrun else max(self.clock.to_reference(pull_local), self.loop.now)
        self.loop.at(t, START, self._pull, i, pull_local, overrun)

    def _pull(self, i: int, pull_local: float, overrun: bool) -> None:
        tr = ExchangeTrace(self.cfg.traced_pair, FIRST_FRAME + i, t0=self.loop.now)
        d = self.draw_client()
        self.loop.at(self.loop.now + d, DELIVERY, self._jit_arrive, i, tr, pull_local, overrun)

    def _jit_arrive(self, i: int, tr: ExchangeTrace, pull_local: float, overrun: bool) -> None:
        now = self.loop.now
        tr.t1 = now
        if not self._enqueue(tr):
            return
        sched = self.first_tx() + i * self.F
        st = compute_slack(sched, now)
        self.ctrl.update_offset(SlackFeedback(i, st))
        self.res.telemetry.append(PullRecord(i, pull_local, tr.t0, tr.d_c, now, sched, st,
                                             self.ctrl.n_hat, overrun))
        if i + 1 >= self.cfg.num_frames:
            return
        try:
            nxt = self.ctrl.next_pull_time(self.clock.to_local(now))
            late = False
        except SchedulingOverrun as e:
            nxt, late = e.pull_time, True
            self.res.overruns += 1
        self._schedule_pull(i + 1, nxt, late)

    def _start_baseline(self) -> None:
        off = self.cfg.baseline_offset
        if off is None:
            off = int(self.rng_offset.integers(0, self.F))
        self.base_local = self.clock.to_local(0) + off
        self.loop.at(self.clock.to_reference(self.base_local), START, self._generate, 0)

    def _generate(self, k: int) -> None:
        now = self.loop.now
        if now > self.slot_time(self.last_frame, self.c_slot):
            return
        tr = ExchangeTrace(self.cfg.traced_pair, -1, t0=now)
        self.loop.at(now + self.draw_client(), DELIVERY, self._base_arrive, tr)
        nxt = self.clock.to_reference(self.base_local + (k + 1) * self.F)
        self.loop.at(max(nxt, now), START, self._generate, k + 1)

    def _base_arrive(self, tr: ExchangeTrace) -> None:
        tr.t1 = self.loop.now
        self._enqueue(tr)

    def _enqueue(self, tr: ExchangeTrace) -> bool:
        if self.fifo.push(tr):
            return True
        self.res.overflowed = True
        self.loop.stop()
        return False

    # MAC side

    def _client_slot(self, frame: int) -> None:
        now = self.loop.now
        occ = self.fifo.occupancy
        tr = self.fifo.pop()
        self.res.occupancy.append(OccupancySample(frame, self.c_slot, occ, tr is None))
        if tr is not None:
            p, a = self.cfg.propagation_delay, self.cfg.tx_time
            tr.frame_index = frame
            tr.t2, tr.t3, tr.t4, tr.t5 = now, now + p, now + a, now + a + p
            self.loop.at(tr.t5 + self.draw_server(), DELIVERY, self._server_done, tr)
        if frame < self.last_frame:
            self.loop.at(now + self.F, SLOT, self._client_slot, frame + 1)

    def _server_done(self, tr: ExchangeTrace) -> None:
        tr.t6 = self.loop.now
        if self.server_ready is not None:
            self.res.stale_responses += 1
        self.server_ready = tr

    def _server_slot(self, frame: int) -> None:
        now = self.loop.now
        tr, self.server_ready = self.server_ready, None
        if tr is None:
            self.res.server_underflows += 1
        else:
            p, a = self.cfg.propagation_delay, self.cfg.tx_time
            tr.t7, tr.t8, tr.t9, tr.t10 = now, now + p, now + a, now + a + p
            self.res.traces.append(tr)
        if frame <= self.last_frame:
            self.loop.at(now + self.F, SLOT, self._server_slot, frame + 1)


def run_experiment(config: ExperimentConfig) -> RunResult:
    """Simulate ``config.num_frames`` client slots; deterministic in ``config.seed``."""
    config.validate()
    return _Sim(config).run()


def baseline_wc_series(config: ExperimentConfig) -> list[int]:
    if config.mode != "baseline":
        raise ConfigError("baseline_wc_series needs mode='baseline'")
    return [t.w_c for t in run_experiment(config).traces]


def worst_case_wait(ring: RingConfig) -> int:
    """Worst combined client plus server wait without coordination: two frames."""
    return 2 * ring.n_slots * ring.slot_duration


def aoi_series(traces: list[ExchangeTrace], pull_times: list[int] | None = None) -> list[int]:
    """Age of each packet at transmission: slot start minus pull instant.

    ``pull_times`` defaults to the traces' own ``t0``.
    """
    if pull_times is None:
        pull_times = [t.t0 for t in traces]
    if len(pull_times) != len(traces):
        raise ValueError("one pull time per trace required")
    return [t.t2 - p for t, p in zip(traces, pull_times)]


def with_changes(config: ExperimentConfig, **changes) -> ExperimentConfig:
    kw = {f.name: getattr(config, f.name) for f in fields(config)}
    kw.update(changes)
    return ExperimentConfig(**kw)
