import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridsense.detector import (
    DEFAULT_THRESHOLD,
    Discrepancy,
    classify_discrepancy,
    frobenius_distance,
    localize,
    moving_window_scan,
)
from gridsense.errors import ConvergenceError, ZeroReferenceError
from gridsense.experiments import WSCC9_TRIP
from gridsense.simulator import ScenarioSchedule, simulate_ambient

PRE_FAULT = np.array([[8.053, 1.240], [2.802, 5.085]])
PRE_FAULT_ESTIMATE = np.array([[7.960, 1.180], [3.047, 5.280]])
POST_FAULT = np.array([[5.870, 1.770], [4.001, 4.291]])
POST_FAULT_MODEL = np.array([[7.338, 1.447], [2.831, 4.527]])


# ---------------------------------------------------------------- distance

def test_distance_to_itself():
    assert frobenius_distance(PRE_FAULT, PRE_FAULT) == 0.0


def test_reference_distances():
    assert frobenius_distance(PRE_FAULT_ESTIMATE, PRE_FAULT) == pytest.approx(0.0332, abs=5e-5)
    assert frobenius_distance(POST_FAULT_MODEL, POST_FAULT) == pytest.approx(0.2262, abs=5e-5)


def test_zero_reference():
    with pytest.raises(ZeroReferenceError):
        frobenius_distance(np.ones((2, 2)), np.zeros((2, 2)))


def test_shape_mismatch():
    with pytest.raises(ValueError):
        frobenius_distance(np.ones((2, 2)), np.ones((3, 3)))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), alpha=st.floats(-1e3, 1e3).filter(lambda a: abs(a) > 1e-3))
def test_distance_is_scale_covariant(seed, alpha):
    rng = np.random.default_rng(seed)
    X, Y = rng.normal(size=(4, 4)), rng.normal(size=(4, 4))
    assert frobenius_distance(alpha * X, alpha * Y) == pytest.approx(frobenius_distance(X, Y), rel=1e-12)


# ---------------------------------------------------------------- localize

def test_equal_matrices_localize_nothing():
    loc = localize(PRE_FAULT, PRE_FAULT)
    assert np.array_equal(loc.surface, np.zeros((2, 2)))
    assert loc.ranking == () and loc.pairs == ()


def test_single_perturbed_entry_tops_surface():
    J = np.arange(25, dtype=float).reshape(5, 5)
    K = J.copy()
    K[3, 1] += 1.0
    loc = localize(J, K, labels=(10, 20, 30, 40, 50))
    assert np.unravel_index(np.argmax(loc.surface), loc.surface.shape) == (3, 1)
    assert loc.pairs[0] == (20, 40, 1.0)
    assert set(loc.ranking) == {20, 40}


def test_symmetric_entries_merge():
    J = np.zeros((3, 3))
    K = J.copy()
    K[0, 2] = K[2, 0] = 1.0
    K[1, 1] = 1.5
    loc = localize(J, K)
    assert loc.pairs[0] == (1, 3, 2.0)
    assert loc.ranking[:2] == (1, 3)


def bus_distances(case):
    adj = {b.id: set() for b in case.buses}
    for br in case.branches:
        adj[br.from_bus].add(br.to_bus)
        adj[br.to_bus].add(br.from_bus)
    def dist(a):
        seen, frontier, d = {a: 0}, [a], 0
        while frontier:
            d += 1
            frontier = [n for f in frontier for n in adj[f] if n not in seen]
            for n in frontier:
                seen[n] = d
        return seen
    return {b.id: dist(b.id) for b in case.buses}


def test_localization_stays_near_every_tripped_line(wscc9):
    """Every 9-bus line trip that keeps an equilibrium implicates a nearby machine first."""
    dist = bus_distances(wscc9.case)
    gens = {k + 1: g.bus for k, g in enumerate(wscc9.case.generators)}
    checked = 0
    for br in wscc9.case.branches:
        pair = (br.from_bus, br.to_bus)
        if br.from_bus in gens.values() or br.to_bus in gens.values():
            # step-up transformer: the machine is stranded and no equilibrium exists
            with pytest.raises(ConvergenceError):
                wscc9.tripped([pair])
            continue
        post = wscc9.tripped([pair])
        loc = localize(wscc9.jacobian(post.equilibrium), post.jacobian(), labels=(1, 2))
        near = {k for k, bus in gens.items() if min(dist[bus][br.from_bus], dist[bus][br.to_bus]) <= 2}
        assert loc.ranking[0] in near
        checked += 1
    assert checked == 6


# ------------------------------------------------------------------ scan

def test_stride_longer_than_series_is_empty(wscc9):
    ser = simulate_ambient(wscc9.case, wscc9.frame, ScenarioSchedule(duration=100.0))
    rep = moving_window_scan(ser, wscc9.jacobian(), window_s=300.0, M=wscc9.M_ind)
    assert rep.times.size == 0 and rep.alarms == () and rep.localization is None


def test_window_straddling_event_is_invalid(wscc9):
    ids = wscc9.branch_ids(WSCC9_TRIP)
    ser = simulate_ambient(wscc9.case, wscc9.frame, ScenarioSchedule(duration=700.0, contingencies=((400.0, ids),)))
    rep = moving_window_scan(ser, wscc9.jacobian(), window_s=200.0, stride_s=10.0, M=wscc9.M_ind)
    straddle = (rep.times > 400.0) & (rep.times < 600.0)
    assert not rep.valid[straddle].any()
    assert rep.valid[~straddle].all()
    assert rep.invalid_band == ((400.0, 600.0),)
    assert np.all(rep.distances[np.isfinite(rep.distances)] >= 0)
    for t, _ in rep.alarms:
        k = int(np.flatnonzero(rep.times == t)[0])
        assert rep.distances[k] > rep.threshold


def test_estimator_failures_are_recorded(wscc9):
    ser = simulate_ambient(wscc9.case, wscc9.frame, ScenarioSchedule(duration=60.0))
    frozen = dataclasses.replace(ser, delta=np.repeat(ser.delta[:1], ser.n_samples, axis=0))
    rep = moving_window_scan(frozen, wscc9.jacobian(), window_s=20.0, stride_s=10.0, M=wscc9.M_ind)
    assert len(rep.errors) == rep.times.size
    assert not rep.valid.any() and rep.alarms == ()


@pytest.mark.slow
def test_no_alarms_without_contingency(wscc9):
    for seed in range(10):
        ser = simulate_ambient(wscc9.case, wscc9.frame, ScenarioSchedule(duration=1000.0, seed=seed))
        rep = moving_window_scan(ser, wscc9.jacobian(), window_s=300.0, stride_s=5.0, M=wscc9.M_ind,
                                 method="full", D=wscc9.D_ind)
        assert rep.threshold == DEFAULT_THRESHOLD
        assert rep.alarms == (), f"seed {seed}"


# -------------------------------------------------------------- classify

def test_identical_windows(wscc9):
    ser = simulate_ambient(wscc9.case, wscc9.frame, ScenarioSchedule(duration=600.0, seed=4))
    c = classify_discrepancy(ser, (100.0, 600.0), (100.0, 600.0), model=wscc9.model)
    assert c.kind is Discrepancy.NO_CHANGE
    assert c.mean_shift == 0.0


def test_line_trip_is_topology_change(wscc9):
    ids = wscc9.branch_ids(WSCC9_TRIP)
    ser = simulate_ambient(wscc9.case, wscc9.frame,
                           ScenarioSchedule(duration=1500.0, seed=4, contingencies=((500.0, ids),)))
    c = classify_discrepancy(ser, (0.0, 500.0), (550.0, 1500.0), model=wscc9.model, method="full")
    assert c.kind is Discrepancy.TOPOLOGY_CHANGE
    assert c.mean_shift > 2.0


def test_mean_shift_without_mismatch_is_operating_point_change(wscc9):
    ser = simulate_ambient(wscc9.case, wscc9.frame, ScenarioSchedule(duration=1500.0, seed=4))
    sl = ser.window(750.0, 1500.0)
    delta = ser.delta.copy()
    delta[sl] += 5 * ser.delta[: sl.start].std(axis=0)
    shifted = dataclasses.replace(ser, delta=delta)
    c = classify_discrepancy(shifted, (0.0, 750.0), (750.0, 1500.0), model=wscc9.model, method="full")
    assert c.kind is Discrepancy.OPERATING_POINT_CHANGE
    # without a model the same shift is still attributed to the operating point
    c2 = classify_discrepancy(shifted, (0.0, 750.0), (750.0, 1500.0), M=wscc9.M_ind)
    assert c2.kind is Discrepancy.OPERATING_POINT_CHANGE
