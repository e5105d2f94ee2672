import numpy as np
import pytest

from gridsense import kernels
from gridsense.detector import frobenius_distance
from gridsense.dynamics import Frame, assemble_noise_matrix, solve_lyapunov
from gridsense.errors import InstabilityError, RateError
from gridsense.simulator import (
    AmbientSeries,
    ScenarioSchedule,
    add_measurement_noise,
    downsample,
    simulate_ambient,
)

SIGMA = 0.01

try:
    from gridsense import _kernels  # noqa: F401

    HAVE_COMPILED = True
except ImportError:
    HAVE_COMPILED = False


def run(s, **kw):
    kw.setdefault("duration", 100.0)
    kw.setdefault("seed", 0)
    return simulate_ambient(s.case, s.frame, ScenarioSchedule(**kw))


def test_shape_and_rate(wscc9):
    ser = run(wscc9, duration=500.0)
    assert ser.delta.shape == (5000, 2) and ser.omega.shape == (5000, 2)
    assert ser.sample_rate == 10.0
    assert ser.labels == (1, 2)


def test_same_seed_is_bit_identical(wscc9):
    a, b = run(wscc9, seed=7), run(wscc9, seed=7)
    assert np.array_equal(a.delta, b.delta) and np.array_equal(a.omega, b.omega)
    assert not np.array_equal(a.delta, run(wscc9, seed=8).delta)


def test_events_mark_trip_and_warmup(wscc9):
    ids = wscc9.branch_ids([(5, 7)])
    ser = run(wscc9, duration=200.0, contingencies=((100.0, ids),))
    assert (100.0, f"trip:{ids[0]}") in ser.events
    assert (150.0, "warmup_end") in ser.events
    assert ser.contingency_times() == [100.0]


@pytest.mark.skipif(not HAVE_COMPILED, reason="compiled kernel not built")
def test_backends_agree(wscc9, ieee39):
    for s in (wscc9, ieee39):
        ids = s.branch_ids([(s.case.branches[5].from_bus, s.case.branches[5].to_bus)])
        sched = ScenarioSchedule(duration=30.0, seed=3, contingencies=((10.0, ids),))
        a = simulate_ambient(s.case, s.frame, sched, backend="python")
        b = simulate_ambient(s.case, s.frame, sched, backend="cython")
        assert np.max(np.abs(a.delta - b.delta)) < 1e-12
        assert np.max(np.abs(a.omega - b.omega)) < 1e-12


def test_backend_selection():
    assert kernels.BACKEND in ("cython", "python")
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


@pytest.mark.parametrize("backend", ["python", "cython"])
def test_coi_constraint_drift(wscc9, backend):
    if backend == "cython" and not HAVE_COMPILED:
        pytest.skip("compiled kernel not built")
    m = wscc9.model
    integrate = kernels.get_backend(backend)
    rng = np.random.default_rng(0)
    steps = 20000
    forcing = rng.standard_normal((steps, m.n)) * 0.05
    out = integrate(wscc9.equilibrium, np.zeros(m.n), m.reduced.G, m.reduced.B, m.reduced.E, m.M, m.D, m.Pm,
                    forcing, 0.001, wscc9.frame.index, 10, wscc9.equilibrium, np.pi)
    d_out, w_out = out[0], out[1]
    assert np.max(np.abs(d_out @ m.M)) < 1e-6
    assert np.max(np.abs(w_out @ m.M)) < 1e-6


def test_stationary_mean(wscc9):
    ser = run(wscc9, duration=1000.0, seed=11)
    half = ser.delta[ser.n_samples // 2 :]
    batches = half.reshape(10, -1, ser.m).mean(axis=1)
    se = batches.std(axis=0, ddof=1) / np.sqrt(10)
    target = wscc9.equilibrium[wscc9.ind]
    assert np.all(np.abs(batches.mean(axis=0) - target) < 3 * se)


@pytest.mark.slow
def test_speed_variance_matches_lyapunov(wscc9):
    B = assemble_noise_matrix(wscc9.model, wscc9.frame, np.full(3, SIGMA)).B
    C = solve_lyapunov(wscc9.state_matrix(), B)
    ser = run(wscc9, duration=20000.0, seed=1)
    batches = ser.omega.reshape(20, -1, ser.m).var(axis=1)
    se = batches.std(axis=0, ddof=1) / np.sqrt(20)
    assert np.all(np.abs(ser.omega.var(axis=0) - np.diag(C)[ser.m :]) < 3 * se)


@pytest.mark.slow
def test_covariance_error_scales_like_inverse_sqrt_time(wscc9):
    B = assemble_noise_matrix(wscc9.model, wscc9.frame, np.full(3, SIGMA)).B
    C = solve_lyapunov(wscc9.state_matrix(), B)
    err = []
    for seed in range(10):
        ser = run(wscc9, duration=400.0, seed=seed)
        row = []
        for L in (100, 400):
            x = np.column_stack([ser.delta[: L * 10], ser.omega[: L * 10]])
            row.append(frobenius_distance(np.cov(x.T), C))
        err.append(row)
    e100, e400 = np.mean(err, axis=0)
    assert 1.4 <= e100 / e400 <= 2.9


def test_lost_generator_is_reported(wscc9):
    # opening 1-4 strands generator 1 with nowhere to send its power
    ids = wscc9.branch_ids([(1, 4)])
    with pytest.raises(InstabilityError) as info:
        run(wscc9, duration=100.0, contingencies=((50.0, ids),))
    assert info.value.segment == 1
    assert "segment 1" in str(info.value)


def test_incompatible_step_and_rate(wscc9):
    with pytest.raises(RateError):
        run(wscc9, duration=10.0, dt=0.003)


# -------------------------------------------------------- measurement noise

def test_zero_measurement_noise_is_identity(wscc9):
    ser = run(wscc9, duration=50.0)
    same = add_measurement_noise(ser, 0.0, 0.0, seed=1)
    assert np.array_equal(same.delta, ser.delta) and np.array_equal(same.omega, ser.omega)


def test_measurement_noise_level(wscc9):
    ser = run(wscc9, duration=600.0)
    noisy = add_measurement_noise(ser, 1e-3, 1e-3, seed=1)
    assert ser.n_samples >= 5000
    for clean, dirty in ((ser.delta, noisy.delta), (ser.omega, noisy.omega)):
        sd = (dirty - clean).std(axis=0, ddof=1)
        assert np.all(np.abs(sd - 1e-3) < 0.05e-3)


def test_measurement_noise_seeds_differ(wscc9):
    ser = run(wscc9, duration=50.0)
    a = add_measurement_noise(ser, 1e-3, 0.0, seed=1)
    b = add_measurement_noise(ser, 1e-3, 0.0, seed=2)
    assert a.delta.shape == b.delta.shape
    assert not np.array_equal(a.delta, b.delta)


# ---------------------------------------------------------------- downsample

def series_at(rate, T=1000):
    x = np.arange(T, dtype=float)[:, None] * np.ones((1, 2))
    return AmbientSeries(rate, 0.0, Frame.plain(), x, -x, (1, 2))


def test_downsample_identity():
    ser = series_at(10.0)
    assert downsample(ser, 10.0) is ser


def test_downsample_keeps_every_tenth():
    out = downsample(series_at(100.0), 10.0)
    assert out.n_samples == 100 and out.sample_rate == 10.0
    assert np.array_equal(out.delta[:, 0], np.arange(0, 1000, 10))


def test_downsample_rejects_non_divisor():
    with pytest.raises(RateError):
        downsample(series_at(100.0), 30.0)


def test_window_slice():
    ser = series_at(10.0)
    sl = ser.window(5.0, 10.0)
    assert (sl.start, sl.stop) == (50, 100)
