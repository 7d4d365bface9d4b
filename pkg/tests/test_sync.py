import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jitnet.clock import VirtualClock, setting_clock
from jitnet.sync import (InsufficientSamples, SchedulingOverrun, SequencingError, SlackFeedback,
                         SyncState, closed_loop, compute_slack, controller_poles,
                         estimate_st_target, predict_converged_slack)

US = 1_000


def test_st_target_is_spread():
    assert estimate_st_target([30 * US, 45 * US, 60 * US]) == 30 * US
    assert estimate_st_target([5, 5]) == 0
    with pytest.raises(InsufficientSamples):
        estimate_st_target([1])
    with pytest.raises(ValueError):
        estimate_st_target([-1, 3])


def test_compute_slack():
    assert compute_slack(9_600_000, 9_570_000) == 30 * US
    assert compute_slack(100, 150) == -50


def test_schedule_without_adjustment():
    s = SyncState.start(100_000_000, 9_600_000, 30 * US)
    assert s.next_pull_time() == 109_600_000
    assert s.packet_index == 2


def test_feedback_shifts_next_pull():
    s = SyncState.start(0, 1_000, 30, alpha=0.5)
    s.update_offset(SlackFeedback(0, 50))  # n_1 = 0.5 * (50 - 30)
    assert s.n_hat == 10
    assert s.next_pull_time() == 1_010
    s.update_offset(SlackFeedback(1, 30))  # n_2 = 0.5 * 10 + 0
    assert s.n_hat == 5


def test_feedback_sequencing():
    s = SyncState.start(0, 1_000, 30)
    with pytest.raises(SequencingError):
        s.update_offset(SlackFeedback(3, 0))
    s.update_offset(SlackFeedback(0, 0))
    with pytest.raises(SequencingError):
        s.update_offset(SlackFeedback(0, 0))


def test_overrun_reported_after_advancing():
    s = SyncState.start(0, 1_000, 0)
    with pytest.raises(SchedulingOverrun) as e:
        s.next_pull_time(now_local=5_000)
    assert e.value.pull_time == 1_000
    assert s.packet_index == 2


@pytest.mark.parametrize("alpha", [0.0, -0.1, 1.5])
def test_alpha_domain(alpha):
    with pytest.raises(ValueError):
        controller_poles(alpha)
    with pytest.raises(ValueError):
        SyncState.start(0, 10, 0, alpha)


@pytest.mark.parametrize("alpha", np.linspace(0.01, 1.0, 25))
def test_poles_match_characteristic_polynomial(alpha):
    # y_i = y_{i-1} + x_i - n_i and n_i = (1-a) n_{i-1} + a y_{i-1}
    # give the denominator z^2 - 2(1-a) z + (1-a)
    roots = np.roots([1.0, -2 * (1 - alpha), 1 - alpha])
    poles = controller_poles(alpha)
    assert sorted(poles, key=lambda z: z.imag) == pytest.approx(sorted(roots, key=lambda z: z.imag), abs=1e-12)
    for p in poles:
        assert abs(p) == pytest.approx(math.sqrt(1 - alpha), abs=1e-12)


def test_predict_converged_slack():
    assert predict_converged_slack(-48, 30 * US) == 30 * US - 48


def _iterate_recurrence(delta, alpha, y0, n):
    """Independent iteration of the slack deviation with constant input."""
    y, nh = y0, 0.0
    for _ in range(n):
        nh = (1 - alpha) * nh + alpha * y
        y = y + delta - nh
    return y


@pytest.mark.parametrize("setting,alpha", [(2, 0.5), (3, 0.5), (2, 0.2), (3, 1.0), (1, 0.7)])
def test_closed_loop_converges_to_delta_plus_target(setting, alpha):
    clock = setting_clock(setting)
    F, T = 9_600_000, 30 * US
    slacks = closed_loop([30 * US] * 3000, clock, F, T, alpha)
    delta = clock.offset(F * 100) / 100  # offset change per frame
    target = predict_converged_slack(delta, T)
    assert abs(_iterate_recurrence(delta, alpha, 1000.0, 3000) + T - target) < 1e-6
    assert all(abs(s - target) <= 100 for s in slacks[-500:])  # within 0.1 us


def _l1_gain(alpha, n=20_000):
    """Sum of |h| for the map from delay D_i to slack deviation y_i."""
    # y_i = y_{i-1} - n_i - (D_i - D_{i-1}),  n_i = (1-a) n_{i-1} + a y_{i-1}
    y = nh = 0.0
    total = 0.0
    d_prev = 0.0
    for i in range(n):
        d = 1.0 if i == 0 else 0.0
        nh = (1 - alpha) * nh + alpha * y
        y = y - nh - (d - d_prev)
        d_prev = d
        total += abs(y)
    return total


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 1.0), st.integers(0, 40 * US), st.integers(0, 2**32))
def test_closed_loop_slack_bounded_by_jitter(alpha, jitter, seed):
    rng = np.random.default_rng(seed)
    d = (30 * US + rng.integers(0, jitter + 1, size=400)).tolist()
    slacks = closed_loop(d, VirtualClock(1.0), 9_600_000, jitter, alpha)
    # delays sit within jitter/2 of their midpoint and the filter has no DC gain
    bound = _l1_gain(alpha) * jitter / 2 + 2
    assert all(abs(s - jitter) <= bound for s in slacks)


def test_unit_alpha_gain_is_two():
    # with alpha = 1 the slack deviation is exactly D_{i-1} - D_i
    assert _l1_gain(1.0) == pytest.approx(2.0)


def test_st_target_examples():
    assert estimate_st_target([10 * US, 25 * US, 18 * US]) == 15 * US
    assert estimate_st_target([7 * US] * 3) == 0


def test_st_target_matches_pairwise_scan():
    rng = np.random.default_rng(42)
    d = (30 * US + rng.integers(0, 30 * US + 1, size=1000)).tolist()
    pairwise = max(a - b for a in d for b in d)
    est = estimate_st_target(d)
    assert est == pairwise
    assert 30 * US - est < 300  # approaches J as samples grow


def test_update_offset_examples():
    s = SyncState.start(0, 9_600_000, 30 * US, alpha=1.0)
    s.n_hat = 777.0
    s.update_offset(SlackFeedback(0, 42 * US))
    assert s.n_hat == 12 * US
    s = SyncState.start(0, 9_600_000, 30 * US, alpha=0.5)
    s.update_offset(SlackFeedback(0, 40 * US))
    assert s.n_hat == 5 * US


@pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
def test_offset_approaches_constant_input_geometrically(alpha):
    delta = 7_000.0
    s = SyncState.start(0, 1_000_000, 0, alpha)
    for i in range(60):
        s.update_offset(SlackFeedback(i, delta))
        # oracle: n_i = delta * (1 - (1 - a)^i), gap shrinking by (1 - a) per step
        assert s.n_hat == pytest.approx(delta * (1 - (1 - alpha) ** (i + 1)), rel=1e-12)
        s.next_pull_time()


def test_negative_offset_shortens_interval():
    s = SyncState.start(0, 9_600_000, 30 * US)
    s.n_hat = -4_800.0
    assert s.next_pull_time() == 9_595_200


def test_mean_pull_interval_tracks_mac_frame():
    from jitnet.tdma import ExperimentConfig, run_experiment
    r = run_experiment(ExperimentConfig(clock_setting=3, num_frames=10_000, st_target_override=30 * US))
    pulls = [p.pull_mac for p in r.telemetry[100:]]
    mean = (pulls[-1] - pulls[0]) / (len(pulls) - 1)
    assert abs(mean - 9_600_000) < 10
    local = [p.pull_local for p in r.telemetry[100:]]
    assert (local[-1] - local[0]) / (len(local) - 1) == pytest.approx(9_600_048, abs=10)


def test_compute_slack_examples():
    assert compute_slack(1000 * US, 970 * US) == 30 * US
    assert compute_slack(1000 * US, 1000 * US) == 0
    assert compute_slack(1000 * US, 1010 * US) == -10 * US


def test_pole_examples():
    assert controller_poles(1.0) == (0j, 0j)
    r1, r2 = controller_poles(0.5)
    assert r1 == pytest.approx(0.5 + 0.5j) and r2 == pytest.approx(0.5 - 0.5j)
    assert abs(r1) == pytest.approx(0.70711, abs=1e-5)


def test_predict_examples():
    assert predict_converged_slack(0, 30 * US) == 30 * US
    assert predict_converged_slack(4_800, 30 * US) == 34_800


def test_closed_loop_constant_two_us_input():
    F = 9_600_000
    clock = VirtualClock(1 + 2_000 / F)  # offset grows 2 us per frame
    slacks = closed_loop([30 * US] * 5000, clock, F, 30 * US, alpha=0.3)
    assert all(abs(s - 32 * US) <= 100 for s in slacks[-1000:])


def test_deadbeat_at_unit_alpha():
    F = 9_600_000
    clock = VirtualClock(1 + 2_000 / F)
    slacks = closed_loop([30 * US] * 50, clock, F, 30 * US, alpha=1.0)
    assert all(abs(s - 32 * US) <= 1 for s in slacks[2:])
