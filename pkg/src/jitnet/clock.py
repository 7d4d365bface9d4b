"""Fixed-point time base and drift-able clocks.

All simulation timestamps are integer ticks of a :class:`TimeQuantum`
(1 ns by default). The MAC clock is the reference timeline; a
:class:`VirtualClock` describes a software (JIT) clock relative to it::

    local = initial_offset + tick_ratio * reference

so the offset ``local - reference`` grows linearly at ``tick_ratio - 1``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

NS_PER_US = 1_000
NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000

_UNITS = {"ns": 1, "us": NS_PER_US, "µs": NS_PER_US, "ms": NS_PER_MS, "s": NS_PER_S}
_DURATION_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(ns|us|µs|ms|s)\s*$")

# Relative tick-rate difference of the JIT clock in settings 2 and 3 (+/-0.0005 %).
DEFAULT_DRIFT = 5e-6


class ClockDomainError(ValueError):
    """A timestamp lies before the epoch of the clock it is converted on."""


@dataclass(frozen=True)
class TimeQuantum:
    resolution: float = 1e-9  # seconds per tick

    def __post_init__(self):
        if not 0 < self.resolution <= 1e-6:
            raise ValueError("resolution must be in (0, 1 us]")

    def ticks(self, seconds: float) -> int:
        return round(seconds / self.resolution)

    def seconds(self, ticks: int) -> float:
        return ticks * self.resolution


NANOSECOND = TimeQuantum()


def parse_duration(text: str) -> int:
    """Parse ``"150us"``, ``"9.6 ms"``, ``"30ns"`` ... into integer nanoseconds.

    A unit is mandatory; bare numbers are rejected so that manifests never
    carry ambiguous durations.
    """
    if not isinstance(text, str):
        raise ValueError(f"duration must be a string with a unit, got {text!r}")
    m = _DURATION_RE.match(text)
    if m is None:
        raise ValueError(f"bad duration {text!r}: expected <number><ns|us|ms|s>")
    value = float(m.group(1)) * _UNITS[m.group(2)]
    ticks = round(value)
    if abs(value - ticks) > 1e-6 * max(1.0, abs(value)):
        raise ValueError(f"duration {text!r} is not a whole number of nanoseconds")
    return ticks


def format_us(ns: float) -> str:
    return f"{ns / NS_PER_US:.3f} us"


@dataclass(frozen=True)
class VirtualClock:
    """A clock running at ``tick_ratio`` times the reference rate.

    ``tick_ratio > 1`` means the clock ticks faster than the MAC clock.
    Conversions round to the nearest tick.
    """

    tick_ratio: float = 1.0
    initial_offset: int = 0

    def __post_init__(self):
        if not (self.tick_ratio > 0 and math.isfinite(self.tick_ratio)):
            raise ValueError(f"tick_ratio must be positive, got {self.tick_ratio}")

    def to_local(self, t_ref: float) -> int:
        if t_ref < 0:
            raise ClockDomainError(f"reference time {t_ref} is negative")
        return round(self.initial_offset + self.tick_ratio * t_ref)

    def to_reference(self, t_local: float) -> int:
        if t_local < self.initial_offset:
            raise ClockDomainError(
                f"local time {t_local} precedes clock epoch {self.initial_offset}"
            )
        return round((t_local - self.initial_offset) / self.tick_ratio)

    def offset(self, t_ref: float) -> int:
        """Offset ``local - reference`` at reference time ``t_ref``."""
        return self.to_local(t_ref) - round(t_ref)

    def local_duration(self, ref_duration: float) -> float:
        """Length on this clock of an interval measured on the reference clock."""
        return self.tick_ratio * ref_duration


def setting_clock(setting: int, drift: float = DEFAULT_DRIFT) -> VirtualClock:
    """JIT clock for the three controlled tick-rate settings.

    1: same rate as the MAC clock; 2: JIT clock slower; 3: JIT clock faster.
    ``drift`` is the relative rate difference.
    """
    if setting == 1:
        return VirtualClock(1.0)
    if setting == 2:
        return VirtualClock(1.0 - drift)
    if setting == 3:
        return VirtualClock(1.0 + drift)
    raise ValueError(f"clock setting must be 1, 2 or 3, got {setting}")


def ratio_for_frame(mac_frame: int, jit_frame_in_mac: int) -> float:
    """Tick ratio that makes one JIT-clock frame last ``jit_frame_in_mac`` MAC ticks.

    ``ratio_for_frame(9_600_000, 9_604_800)`` reproduces a JIT-side frame
    that is 4.8 us longer than the MAC frame.
    """
    return mac_frame / jit_frame_in_mac
