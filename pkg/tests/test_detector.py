import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdqw.detector import (
    COUNT_THRESHOLD,
    DetectorState,
    Fixed,
    Moving,
    MovingIJ,
    NoDetector,
    Quench,
    epoch_start_times,
    make_policy,
    measure,
)
from mdqw.engine import RecordSpec, run
from mdqw.errors import DomainError, ScheduleError
from mdqw.walk import SYMMETRIC_SEED, evolve_step, initial_state, occupation, total_probability


def stepped(T, half_width=None):
    f = initial_state(*SYMMETRIC_SEED, half_width or T + 1)
    for _ in range(T):
        f = evolve_step(f)
    return f


@pytest.mark.parametrize(
    "factory",
    [lambda: Fixed(0), lambda: Moving(-3, 2, 1), lambda: Moving(10, 0, 1),
     lambda: Moving(10, 2, 0), lambda: MovingIJ(0, 2), lambda: Quench(10, 0)],
)
def test_invalid_policies(factory):
    with pytest.raises(DomainError):
        factory()


def test_make_policy():
    assert make_policy("iw") == NoDetector()
    assert make_policy("siw", x_D=10) == Fixed(10)
    assert make_policy("moving", x_D=10, n=2, s=1) == Moving(10, 2, 1)
    assert make_policy("moving", x_D=10, n=2, s="IJ") == MovingIJ(10, 2)
    assert make_policy("quench", x_D=10, t_off=100) == Quench(10, 100)
    with pytest.raises(DomainError, match="x_D must be positive"):
        make_policy("moving", x_D=0, n=2, s=1)
    with pytest.raises(DomainError):
        make_policy("warp", x_D=1)


def test_labels_follow_nDsS_notation():
    assert Moving(10, 2, 6).label == "2D6S"
    assert MovingIJ(10, 2).label == "2DIJ"


def test_moving_detector_event_times_and_sites():
    res = run(Moving(10, 2, 1), 40)
    ev = [(e.time, e.position) for e in res.events]
    assert ev[:2] == [(10, 10), (12, 10)]
    # first detection at the next site: t + (2n + s) = 10 + 5
    assert ev[2] == (15, 11)


def test_fixed_detector_one_step():
    policy = Fixed(1)
    f = evolve_step(initial_state(*SYMMETRIC_SEED, 3))
    det = DetectorState.start(policy)
    g, det = measure(f, det, policy)
    assert det.absorbed_total == pytest.approx(0.5, abs=1e-15)
    assert total_probability(g) == pytest.approx(0.5, abs=1e-15)
    assert occupation(g, 1) == 0.0
    # input field untouched
    assert occupation(f, 1) == pytest.approx(0.5, abs=1e-15)
    assert len(det.events) == 1 and det.events[0].time == 1


def test_zero_amplitude_site_is_not_a_detection():
    policy = Fixed(2)
    f = stepped(1)  # site 2 outside the light cone at t = 1
    det = DetectorState.start(policy)
    g, det = measure(f, det, policy)
    assert det.events == [] and det.count_in_epoch == 0 and det.absorbed_total == 0.0
    assert g is f


def test_measuring_twice_in_one_step_fails():
    policy = Fixed(1)
    f = stepped(1)
    det = DetectorState.start(policy)
    f, det = measure(f, det, policy)
    with pytest.raises(ScheduleError):
        measure(f, det, policy)


def test_sub_threshold_absorption_is_not_counted():
    policy = Moving(1, 1, 1)
    f = initial_state(1, 0, 3)
    f.left[:] = 0
    f.left[4] = np.sqrt(COUNT_THRESHOLD / 2)
    f.right[3] = np.sqrt(1 - COUNT_THRESHOLD / 2)
    f.time = 1
    det = DetectorState.start(policy)
    g, det = measure(f, det, policy)
    assert det.events == [] and det.position == 1
    assert det.absorbed_total == pytest.approx(COUNT_THRESHOLD / 2)
    assert det.uncounted_total == det.absorbed_total
    assert occupation(g, 1) == 0.0


def test_infinite_jump_removes_detector():
    res = run(MovingIJ(10, 3), 200)
    assert [e.position for e in res.events] == [10, 10, 10]
    assert [e.time for e in res.events] == [10, 12, 14]


def test_quench_measures_through_t_off():
    res = run(Quench(4, 8), 100)
    assert [e.time for e in res.events] == [4, 6, 8]


def test_detector_beyond_lattice_never_fires():
    res = run(Moving(5, 1, 1000), 60)
    assert {e.position for e in res.events} == {5}


# --- schedule --------------------------------------------------------------


def test_epoch_start_times_examples():
    assert epoch_start_times(10, 2, 1, 2) == [10, 15, 20]
    assert epoch_start_times(10, 1, 1, 1) == [10, 13]
    with pytest.raises(DomainError):
        epoch_start_times(0, 1, 1, 1)


@pytest.mark.parametrize("x_D", [4, 10])
@pytest.mark.parametrize("n", [1, 2, 5])
@pytest.mark.parametrize("s", [1, 3])
def test_epoch_start_times_match_simulation(x_D, n, s):
    epochs = 4
    predicted = epoch_start_times(x_D, n, s, epochs - 1)
    res = run(Moving(x_D, n, s), predicted[-1] + 2 * n + s)
    first = {}
    for e in res.events:
        first.setdefault(e.position, e.time)
    assert [first[x_D + i * s] for i in range(epochs)] == predicted


@pytest.mark.parametrize("policy", [Moving(10, 2, 1), Moving(4, 5, 3), Moving(6, 3, 10)])
def test_hop_geometry_and_intra_epoch_cadence(policy):
    res = run(policy, 300)
    by_site = {}
    for e in res.events:
        by_site.setdefault(e.position, []).append(e.time)
    sites = sorted(by_site)
    assert all((x - policy.x_D) % policy.s == 0 for x in sites)
    assert sites == [policy.x_D + k * policy.s for k in range(len(sites))]
    for x in sites[:-1]:  # every completed epoch
        times = by_site[x]
        assert len(times) == policy.n
        assert np.all(np.diff(times) == 2)


def test_event_times_strictly_increase():
    res = run(Moving(3, 4, 2), 500)
    times = [e.time for e in res.events]
    assert times == sorted(set(times))
    assert all(0 < e.probability <= 1 for e in res.events)


policies = st.one_of(
    st.just(NoDetector()),
    st.builds(Fixed, st.integers(1, 20)),
    st.builds(Moving, st.integers(1, 20), st.integers(1, 8), st.integers(1, 12)),
    st.builds(MovingIJ, st.integers(1, 20), st.integers(1, 8)),
    st.builds(Quench, st.integers(1, 20), st.integers(1, 80)),
)


@settings(max_examples=40, deadline=None)
@given(policies, st.integers(1, 150))
def test_mass_bookkeeping(policy, T):
    res = run(policy, T, RecordSpec.make(absorbed=True, norm=True))
    assert np.max(np.abs(res.norm_series + res.absorbed_series - 1)) <= 1e-10
    assert np.all(np.diff(res.absorbed_series) >= 0)
    counted = sum(e.probability for e in res.events)
    assert counted <= res.absorbed_total + 1e-15
    assert res.absorbed_total - counted <= T * COUNT_THRESHOLD


# --- limiting cases --------------------------------------------------------


def _amps(policy, T):
    res = run(policy, T, RecordSpec.make(snapshots=[T], amplitudes=True, events=False))
    return res.amplitudes[T]


def _maxdiff(p, q, T):
    return max(np.max(np.abs(a - b)) for a, b in zip(_amps(p, T), _amps(q, T)))


def test_far_detector_is_free_walk():
    assert _maxdiff(Moving(301, 3, 2), NoDetector(), 300) <= 1e-12


def test_patient_detector_is_fixed():
    assert _maxdiff(Moving(10, 300, 5), Fixed(10), 300) <= 1e-12


@pytest.mark.parametrize("n", [1, 2, 7])
def test_infinite_jump_is_quench_at_nth_detection(n):
    T = 300
    t_off = run(MovingIJ(10, n), T).events[n - 1].time
    assert _maxdiff(MovingIJ(10, n), Quench(10, t_off), T) <= 1e-12
