"""JIT middleware: adaptive pull-signal scheduling.

The middleware pulls packet ``P_i`` from the application at JIT-clock time

    U_i = U_{i-1} + F + n_i
    n_i = (1 - alpha) * n_{i-1} + alpha * (ST_{i-1} - ST_target)

where ``ST_{i-1}`` is the slack the MAC layer observed for the previous
packet (scheduled transmission minus arrival, MAC clock). ``ST_target`` is
set at start-up from ``Q`` probe generations as the widest spread of
processing delays. Slack is fed back in MAC ticks and applied to JIT ticks
without conversion; the loop is stable regardless.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

from .clock import VirtualClock

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 1.0
DEFAULT_Q = 100


class InsufficientSamples(ValueError):
    pass


class SequencingError(RuntimeError):
    """Slack feedback arrived for the wrong packet."""


class SchedulingOverrun(RuntimeError):
    """The next pull time is already in the past on the JIT clock."""

    def __init__(self, pull_time: float, now: float):
        super().__init__(f"pull at {pull_time:.1f} is {now - pull_time:.1f} ticks late")
        self.pull_time = pull_time
        self.now = now


def estimate_st_target(processing_delays: Sequence[float]) -> float:
    """Largest pairwise difference of probe processing delays (max - min)."""
    if len(processing_delays) < 2:
        raise InsufficientSamples(f"need at least 2 delay samples, got {len(processing_delays)}")
    if min(processing_delays) < 0:
        raise ValueError("processing delays must be non-negative")
    return max(processing_delays) - min(processing_delays)


def compute_slack(scheduled_tx_mac: int, arrival_mac: int) -> int:
    """Slack of a packet at the MAC layer; negative means it missed its slot."""
    return scheduled_tx_mac - arrival_mac


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")


def controller_poles(alpha: float) -> tuple[complex, complex]:
    """Poles of the slack-deviation response, ``(1-a) +/- j sqrt(a(1-a))``."""
    _check_alpha(alpha)
    im = math.sqrt(alpha * (1 - alpha))
    return complex(1 - alpha, im), complex(1 - alpha, -im)


def predict_converged_slack(delta: float, st_target: float) -> float:
    """Steady-state slack for a constant composite input ``delta``."""
    return delta + st_target


@dataclass(frozen=True)
class SlackFeedback:
    packet_index: int
    slack: int


@dataclass
class SyncState:
    """Controller state for one client.

    ``packet_index`` is the index ``i`` of the next packet to schedule and
    ``last_pull_local`` the JIT-clock pull time of packet ``i - 1``.
    ``n_hat`` holds ``n_{i-1}`` until feedback for packet ``i - 1`` arrives,
    then ``n_i``.
    """

    alpha: float
    st_target: float
    frame_duration: int
    last_pull_local: float
    n_hat: float = 0.0
    packet_index: int = 1
    _updated: bool = field(default=False, repr=False)

    def __post_init__(self):
        _check_alpha(self.alpha)
        if self.st_target < 0:
            raise ValueError("st_target must be non-negative")
        if self.frame_duration <= 0:
            raise ValueError("frame_duration must be positive")

    @classmethod
    def start(cls, first_pull_local: float, frame_duration: int, st_target: float,
              alpha: float = DEFAULT_ALPHA) -> "SyncState":
        """State right after the pull for ``P_0`` was issued (``n_0 = 0``)."""
        return cls(alpha=alpha, st_target=st_target, frame_duration=frame_duration,
                   last_pull_local=first_pull_local)

    def update_offset(self, fb: SlackFeedback) -> "SyncState":
        if fb.packet_index != self.packet_index - 1 or self._updated:
            raise SequencingError(
                f"expected feedback for packet {self.packet_index - 1}, got {fb.packet_index}"
            )
        self.n_hat = (1 - self.alpha) * self.n_hat + self.alpha * (fb.slack - self.st_target)
        self._updated = True
        return self

    def next_pull_time(self, now_local: float | None = None) -> float:
        """Schedule the pull for packet ``packet_index`` and advance.

        Uses whatever ``n_hat`` currently holds, so skipping the feedback
        step repeats the previous adjustment. Raises :class:`SchedulingOverrun` (after advancing) when the computed
        time is already behind ``now_local``; callers fire the pull at once.
        """
        pull = self.last_pull_local + self.frame_duration + self.n_hat
        self.last_pull_local = pull
        self.packet_index += 1
        self._updated = False
        if now_local is not None and pull < now_local:
            log.warning("pull for packet %d overran by %.1f ticks",
                        self.packet_index - 1, now_local - pull)
            raise SchedulingOverrun(pull, now_local)
        return pull


def closed_loop(delays: Sequence[int], clock: VirtualClock, frame: int, st_target: float,
                alpha: float = DEFAULT_ALPHA, first_tx: int | None = None,
                lead: int | None = None) -> list[int]:
    """Drive the controller against a bare MAC timeline and return the slacks.

    Packet ``i`` is due at ``first_tx + i*frame`` (MAC clock) and reaches the
    MAC ``delays[i]`` after its pull. No slots, queues or server: this is the
    plant the controller sees, used to check convergence on its own.
    """
    if first_tx is None:
        first_tx = frame
    if lead is None:
        lead = round(st_target) + delays[0]
    state = SyncState.start(clock.to_local(first_tx) - lead, frame, st_target, alpha)
    pull_local = state.last_pull_local
    slacks = []
    for i, d in enumerate(delays):
        if i > 0:
            pull_local = state.next_pull_time()
        arrival = clock.to_reference(pull_local) + d
        st = compute_slack(first_tx + i * frame, arrival)
        slacks.append(st)
        state.update_offset(SlackFeedback(i, st))
    return slacks
