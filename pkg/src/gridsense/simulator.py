"""Ambient trajectories of the stochastic swing equations.

The nonlinear frame dynamics are integrated by Euler-Maruyama with additive
load noise. Contingencies rebuild the reduced network mid-run; the state is
carried across. Output is decimated to a PMU-like rate.

Random streams come from NumPy's counter-based Philox generator. Each
(purpose, machine) pair gets its own stream keyed by ``SeedSequence(seed,
spawn_key=(purpose, machine))``: purpose 0 is load noise, 1 is angle
measurement noise and 2 is speed measurement noise.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .dynamics import (
    Frame,
    MachineModel,
    is_hurwitz,
    model_state_matrix,
    noise_lower_full,
    solve_equilibrium,
    to_frame,
)
from .errors import InstabilityError, RateError
from .netmodel import NetworkCase, perturb_topology

STREAM_LOAD = 0
STREAM_MEAS_DELTA = 1
STREAM_MEAS_OMEGA = 2

WARMUP_S = 50.0
#: integration steps per noise block; bounds memory on long runs
CHUNK_STEPS = 200_000


@dataclass(frozen=True)
class AmbientSeries:
    sample_rate: float
    t0: float
    frame: Frame
    delta: np.ndarray
    omega: np.ndarray
    labels: tuple[int, ...]
    events: tuple[tuple[float, str], ...] = ()

    def __post_init__(self):
        d = np.asarray(self.delta, dtype=float)
        w = np.asarray(self.omega, dtype=float)
        if d.ndim != 2 or d.shape != w.shape:
            raise ValueError("delta and omega must be 2-D arrays of equal shape")
        if len(self.labels) != d.shape[1]:
            raise ValueError("one label per channel required")
        object.__setattr__(self, "delta", d)
        object.__setattr__(self, "omega", w)

    @property
    def n_samples(self) -> int:
        return self.delta.shape[0]

    @property
    def m(self) -> int:
        return self.delta.shape[1]

    @property
    def t(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_samples) / self.sample_rate

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    def window(self, t_start: float, t_end: float) -> slice:
        """Sample slice covering ``t_start <= t < t_end``."""
        lo = int(np.ceil((t_start - self.t0) * self.sample_rate - 1e-9))
        hi = int(np.ceil((t_end - self.t0) * self.sample_rate - 1e-9))
        return slice(max(lo, 0), min(hi, self.n_samples))

    def select(self, channels: Sequence[int]) -> "AmbientSeries":
        """Restrict to the given channel positions (0-based)."""
        ch = list(channels)
        return dataclasses.replace(
            self,
            delta=self.delta[:, ch],
            omega=self.omega[:, ch],
            labels=tuple(self.labels[c] for c in ch),
        )

    def contingency_times(self) -> list[float]:
        return [t for t, desc in self.events if desc.startswith("trip")]


@dataclass(frozen=True)
class ScenarioSchedule:
    duration: float = 500.0
    dt: float = 0.001
    sigma_load: float | Sequence[float] = 0.01
    contingencies: tuple[tuple[float, tuple[int, ...]], ...] = ()
    measurement_noise_std: tuple[float, float] = (0.0, 0.0)
    output_rate: float = 10.0
    seed: int = 0
    t0: float = 0.0

    def __post_init__(self):
        if self.dt <= 0 or self.output_rate <= 0 or self.duration <= 0:
            raise ValueError("duration, dt and output_rate must be positive")
        if self.dt > 1.0 / self.output_rate + 1e-12:
            raise ValueError("integration step must not exceed the output interval")
        for t, _ in self.contingencies:
            if not self.t0 <= t <= self.t0 + self.duration:
                raise ValueError(f"contingency at {t} s lies outside the run")
        object.__setattr__(
            self, "contingencies", tuple(sorted((float(t), tuple(ids)) for t, ids in self.contingencies))
        )

    def sigma(self, n: int) -> np.ndarray:
        s = np.broadcast_to(np.asarray(self.sigma_load, dtype=float), (n,)).copy()
        if np.any(s < 0):
            raise ValueError("load noise levels must be nonnegative")
        return s


def _decimation(dt: float, rate: float) -> int:
    k = 1.0 / (dt * rate)
    ki = int(round(k))
    if ki < 1 or abs(k - ki) > 1e-9 * k:
        raise RateError(f"output interval {1 / rate} s is not a multiple of dt = {dt} s")
    return ki


def stream(seed: int, purpose: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(purpose, index))
    return np.random.Generator(np.random.Philox(ss))


def _segments(case, base_model, schedule):
    """(t_start, t_end, model, ids tripped at t_start) per constant-topology segment."""
    out = []
    t = schedule.t0
    current_case = case
    model = base_model
    new_ids: tuple[int, ...] = ()
    for tc, ids in schedule.contingencies:
        if tc > t:
            out.append((t, tc, model, new_ids))
            new_ids = ()
        if current_case is None:
            raise ValueError("contingencies need a NetworkCase, not a bare MachineModel")
        current_case = perturb_topology(current_case, ids)
        new_ids += tuple(ids)
        post = MachineModel.from_case(current_case, emf=base_model.reduced.E)
        model = MachineModel(post.reduced, base_model.M, base_model.D, base_model.Pm)
        t = tc
    end = schedule.t0 + schedule.duration
    if end > t:
        out.append((t, end, model, new_ids))
    return out


def simulate_ambient(system: NetworkCase | MachineModel, frame: Frame, schedule: ScenarioSchedule,
                     backend: str | None = None) -> AmbientSeries:
    """Integrate the noisy swing equations and return decimated trajectories."""
    if isinstance(system, NetworkCase):
        case = system
        base = MachineModel.from_case(case)
    else:
        case = None
        base = system
    n = base.n
    frame = frame.resolve(base.M)
    integrate = kernels.get_backend(backend)
    coi_dep = frame.index if frame.kind == "coi" else -1
    integ_frame = frame if frame.kind == "coi" else Frame.plain()
    decim = _decimation(schedule.dt, schedule.output_rate)
    sigma = schedule.sigma(n)

    sq = np.sqrt(schedule.dt)
    gens = [stream(schedule.seed, STREAM_LOAD, i) for i in range(n)]
    chunk = decim * max(1, CHUNK_STEPS // decim)

    segs = _segments(case, base, schedule)
    delta = None
    omega = np.zeros(n)
    d_parts, w_parts = [], []
    events: list[tuple[float, str]] = [(schedule.t0, "start")]
    eq_guess = base.reduced.delta0
    step0 = 0
    for k, (ta, tb, model, new_ids) in enumerate(segs):
        try:
            eq = solve_equilibrium(model, integ_frame, eq_guess)
        except Exception as exc:
            raise InstabilityError(f"segment {k} [{ta:g}, {tb:g}) s has no equilibrium: {exc}", segment=k) from exc
        if model.n > 1 and not is_hurwitz(model_state_matrix(model, Frame.coi(), eq).A):
            raise InstabilityError(f"segment {k} [{ta:g}, {tb:g}) s: state matrix not Hurwitz", segment=k)
        eq_guess = eq
        if delta is None:
            delta = eq.copy()
        if new_ids:
            events.append((ta, "trip:" + ",".join(str(b) for b in new_ids)))
        events.append((min(ta + WARMUP_S, schedule.t0 + schedule.duration), "warmup_end"))
        steps = int(round((tb - schedule.t0) / schedule.dt)) - step0
        L = noise_lower_full(model, integ_frame, sigma)
        done = 0
        while done < steps:
            c = min(chunk, steps - done)
            dW = np.column_stack([g.standard_normal(c) for g in gens]) * sq
            d_out, w_out, delta, omega, bad = integrate(
                delta, omega, model.reduced.G, model.reduced.B, model.reduced.E, model.M, model.D,
                model.Pm, dW @ L.T, schedule.dt, coi_dep, decim, eq, np.pi,
            )
            if bad >= 0:
                t_bad = ta + (done + bad * decim) * schedule.dt
                raise InstabilityError(
                    f"segment {k} [{ta:g}, {tb:g}) s: angle excursion beyond pi at t = {t_bad:.2f} s", segment=k
                )
            d_parts.append(d_out)
            w_parts.append(w_out)
            done += c
        step0 += steps

    d_all = np.concatenate(d_parts)
    w_all = np.concatenate(w_parts)
    n_out = int(round(schedule.duration * schedule.output_rate))
    d_all, w_all = d_all[:n_out], w_all[:n_out]
    labels = tuple(int(i) + 1 for i in frame.independent(n))
    series = AmbientSeries(
        sample_rate=schedule.output_rate,
        t0=schedule.t0,
        frame=frame,
        delta=to_frame(frame, base.M, d_all),
        omega=to_frame(frame, base.M, w_all),
        labels=labels,
        events=tuple(sorted(events)),
    )
    sd, sw = schedule.measurement_noise_std
    if sd > 0 or sw > 0:
        series = add_measurement_noise(series, sd, sw, schedule.seed)
    return series


def add_measurement_noise(series: AmbientSeries, std_delta: float, std_omega: float, seed: int) -> AmbientSeries:
    """Independent Gaussian noise on every sample and channel."""
    if std_delta < 0 or std_omega < 0:
        raise ValueError("noise standard deviations must be nonnegative")
    T, m = series.delta.shape
    d = series.delta.copy()
    w = series.omega.copy()
    for c in range(m):
        if std_delta > 0:
            d[:, c] += std_delta * stream(seed, STREAM_MEAS_DELTA, c).standard_normal(T)
        if std_omega > 0:
            w[:, c] += std_omega * stream(seed, STREAM_MEAS_OMEGA, c).standard_normal(T)
    return dataclasses.replace(series, delta=d, omega=w)


def downsample(series: AmbientSeries, rate: float) -> AmbientSeries:
    """Keep every k-th sample, k = source rate / rate."""
    k = series.sample_rate / rate
    ki = int(round(k))
    if ki < 1 or abs(k - ki) > 1e-9 * k:
        raise RateError(f"{rate} Hz does not divide the source rate {series.sample_rate} Hz")
    if ki == 1:
        return series
    return dataclasses.replace(
        series, sample_rate=series.sample_rate / ki, delta=series.delta[::ki], omega=series.omega[::ki]
    )
