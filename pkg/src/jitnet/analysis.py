"""Post-processing: recurrence check, steady-state detection, figure series."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import binomtest

FIGURES = ("fig8", "fig9a", "fig9b", "fig10")
DEFAULT_STRIDE = {"fig8": 100, "fig9a": 100, "fig9b": 1, "fig10": 100}
DEFAULT_TOLERANCE = 2_000  # ns
DEFAULT_WINDOW = 200
_RECURRENCE_FIELDS = ("pull_local", "pull_mac", "d_c", "slack")


class NoConvergence(ValueError):
    pass


class FigureError(ValueError):
    pass


def _field(rec, name):
    if isinstance(rec, Mapping):
        if name not in rec:
            raise KeyError(f"telemetry record lacks {name!r}")
        return rec[name]
    if not hasattr(rec, name):
        raise KeyError(f"telemetry record lacks {name!r}")
    return getattr(rec, name)


def recurrence_slacks(telemetry: Sequence, alpha: float, st_target: float) -> list[float]:
    """Slack sequence rebuilt from the recorded inputs alone.

    With ``y_i = ST_i - ST_target``, clock offset ``o_i`` (JIT pull time
    minus MAC pull time) and processing delay ``D_i``::

        y_i = x_i + (1-a) y_{i-1} - a * sum_{j=0}^{i-2} (1-a)^{i-1-j} y_j
        x_i = (o_i - o_{i-1}) - (D_i - D_{i-1})

    Only ``y_0`` is taken from the run; every later value comes from the
    difference equation.
    """
    if not telemetry:
        return []
    rows = [tuple(_field(r, f) for f in _RECURRENCE_FIELDS) for r in telemetry]
    b = 1.0 - alpha
    offs = [float(pl) - pm for pl, pm, _, _ in rows]
    y = [float(rows[0][3]) - st_target]
    s = 0.0  # sum_{j=0}^{i-2} (1-a)^{i-1-j} y_j for the current i
    for i in range(1, len(rows)):
        if i >= 2:
            s = b * s + b * y[i - 2]
        x = (offs[i] - offs[i - 1]) - (rows[i][2] - rows[i - 1][2])
        y.append(x + b * y[i - 1] - alpha * s)
    return [v + st_target for v in y]


def verify_recurrence(telemetry: Sequence, alpha: float, st_target: float) -> float:
    """Largest gap between simulated slacks and the difference-equation rebuild."""
    rebuilt = recurrence_slacks(telemetry, alpha, st_target)
    sim = [_field(r, "slack") for r in telemetry]
    return max((abs(a - b) for a, b in zip(rebuilt, sim)), default=0.0)


@dataclass(frozen=True)
class SteadyStateWindow:
    start_frame: int
    end_frame: int
    mean: float
    window: int = DEFAULT_WINDOW
    tolerance: float = DEFAULT_TOLERANCE
    slope_threshold: float | None = None

    def __post_init__(self):
        if not self.start_frame < self.end_frame:
            raise ValueError("start_frame must precede end_frame")


def detect_convergence(series: Sequence[float], tolerance: float = DEFAULT_TOLERANCE,
                       window: int = DEFAULT_WINDOW,
                       slope_threshold: float | None = None) -> SteadyStateWindow:
    """Earliest window whose values all stay within ``tolerance`` of its mean.

    A window also has to be flat: its least-squares slope per sample must
    not exceed ``slope_threshold`` (default ``tolerance / window``). The
    returned window is extended while later samples stay within tolerance
    of the same mean; ``end_frame`` is exclusive.
    """
    x = np.asarray(series, dtype=float)
    if window < 2:
        raise ValueError("window must be >= 2")
    if len(x) < window:
        raise NoConvergence(f"series of {len(x)} samples is shorter than the window ({window})")
    if slope_threshold is None:
        slope_threshold = tolerance / window
    w = sliding_window_view(x, window)
    means = w.mean(axis=1)
    ok = (w.max(axis=1) - means <= tolerance) & (means - w.min(axis=1) <= tolerance)
    k = np.arange(window) - (window - 1) / 2
    slopes = (w - means[:, None]) @ k / (k @ k)
    ok &= np.abs(slopes) <= slope_threshold
    hits = np.flatnonzero(ok)
    if hits.size == 0:
        raise NoConvergence(f"no {window}-sample window stays within +/-{tolerance}")
    start = int(hits[0])
    mean = float(means[start])
    end = start + window
    while end < len(x) and abs(x[end] - mean) <= tolerance:
        end += 1
    return SteadyStateWindow(start, end, mean, window, tolerance, slope_threshold)


class Stats(NamedTuple):
    count: int
    min: float
    mean: float
    max: float
    p99: float


def summarize(values: Iterable[float]) -> Stats:
    a = np.asarray(list(values), dtype=float)
    if a.size == 0:
        raise ValueError("no values to summarize")
    return Stats(int(a.size), float(a.min()), float(a.mean()), float(a.max()),
                 float(np.percentile(a, 99)))


class SignTest(NamedTuple):
    wins: int
    losses: int
    ties: int
    p_value: float


def sign_test_less(a: Sequence[float], b: Sequence[float]) -> SignTest:
    """One-sided paired sign test of ``a < b``; ties are dropped."""
    if len(a) != len(b):
        raise ValueError("paired samples must have equal length")
    wins = sum(x < y for x, y in zip(a, b))
    losses = sum(x > y for x, y in zip(a, b))
    ties = len(a) - wins - losses
    n = wins + losses
    p = binomtest(wins, n, 0.5, alternative="greater").pvalue if n else 1.0
    return SignTest(wins, losses, ties, float(p))


def emit_figure_data(run, figure: str, stride: int | None = None) -> list[tuple[int, str, int]]:
    """Rows ``(x, series_label, y)`` for one figure from a loaded run.

    ``run`` needs ``kind``, ``mode``, ``label``, ``traces`` and
    ``occupancy`` attributes (see :class:`jitnet.io.RunData`).
    """
    if figure not in FIGURES:
        raise FigureError(f"unknown figure {figure!r}; choose from {FIGURES}")
    if run.kind != "tdma":
        raise FigureError(f"{figure} needs a TDMA run, got a {run.kind} run")
    if figure == "fig9b" and run.mode != "jit":
        raise FigureError("fig9b shows the JIT client wait; run is in baseline mode")
    if stride is None:
        stride = DEFAULT_STRIDE[figure]
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if figure == "fig8":
        pts = [(o.frame, o.occupancy) for o in run.occupancy]
    elif figure == "fig10":
        pts = [(t.frame_index, t.rtt) for t in run.traces]
    else:
        pts = [(t.frame_index, t.w_c) for t in run.traces]
    return [(x, run.label, y) for x, y in pts[::stride]]
