"""Topology-change detection by comparing estimated and model Jacobians."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .dynamics import MachineModel, jacobian_analytic
from .errors import GridsenseError, ZeroReferenceError
from .estimator import SIMPLIFIED, covariance_from_arrays, estimate_jacobian, sample_covariance
from .simulator import AmbientSeries

#: default alarm threshold on the normalized distance
DEFAULT_THRESHOLD = 0.18
#: floor and multiplier of the calibrated threshold
THRESHOLD_FLOOR = 0.08
THRESHOLD_FACTOR = 3.0
CALIBRATION_S = 400.0


def frobenius_distance(X, Y) -> float:
    """||X - Y||_F / ||Y||_F."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch {X.shape} vs {Y.shape}")
    ref = np.linalg.norm(Y)
    if ref == 0:
        raise ZeroReferenceError("reference matrix has zero norm")
    return float(np.linalg.norm(X - Y) / ref)


@dataclass(frozen=True)
class Localization:
    surface: np.ndarray
    pairs: tuple[tuple[int, int, float], ...]  # (label_i, label_j, weight), i <= j
    ranking: tuple[int, ...]
    scores: dict = field(default_factory=dict)


def localize(J_model, J_est, q: int = 4, labels: Sequence[int] | None = None) -> Localization:
    """Residual surface |J_model - J_est| and the machines it implicates.

    Symmetric entries (i, j) and (j, i) are merged into one pair with their
    summed weight. Each of the ``q`` heaviest pairs adds its weight to both
    machines; machines are ranked by total score.
    """
    J_model = np.asarray(J_model, dtype=float)
    J_est = np.asarray(J_est, dtype=float)
    if J_model.shape != J_est.shape:
        raise ValueError(f"shape mismatch {J_model.shape} vs {J_est.shape}")
    m = J_model.shape[0]
    labels = tuple(range(1, m + 1)) if labels is None else tuple(labels)
    e = np.abs(J_model - J_est)
    iu, ju = np.triu_indices(m)
    w = e[iu, ju] + np.where(iu != ju, e[ju, iu], 0.0)
    order = np.argsort(-w, kind="stable")
    top = [k for k in order[:q] if w[k] > 0]
    scores: dict[int, float] = {}
    for k in top:
        for idx in {iu[k], ju[k]}:
            scores[labels[idx]] = scores.get(labels[idx], 0.0) + float(w[k])
    ranking = tuple(sorted(scores, key=lambda lab: (-scores[lab], lab)))
    pairs = tuple((labels[iu[k]], labels[ju[k]], float(w[k])) for k in top)
    return Localization(e, pairs, ranking, scores)


@dataclass(frozen=True)
class DetectionReport:
    times: np.ndarray
    distances: np.ndarray
    valid: np.ndarray
    threshold: float
    alarms: tuple[tuple[float, str], ...]
    invalid_band: tuple[tuple[float, float], ...]
    localization: Localization | None = None
    errors: tuple[tuple[float, str], ...] = ()
    window_s: float = 300.0

    def __post_init__(self):
        d = self.distances[np.isfinite(self.distances)]
        if np.any(d < 0):
            raise ValueError("distances must be nonnegative")

    @property
    def alarmed(self) -> np.ndarray:
        """Per-evaluation alarm flags (valid, past calibration, above threshold)."""
        return self.valid & (self.distances > self.threshold)

    def first_alarm(self, after: float = -np.inf) -> float | None:
        for t, kind in self.alarms:
            if t >= after:
                return t
        return None

    def sustained_after(self, t_from: float) -> bool:
        """True when every valid evaluation from ``t_from`` on is above threshold."""
        sel = self.valid & (self.times >= t_from)
        return bool(sel.any() and np.all(self.distances[sel] > self.threshold))


def moving_window_scan(series: AmbientSeries, model_jacobian, window_s: float = 300.0, stride_s: float = 1.0,
                       M=None, method: str = SIMPLIFIED, D=None, threshold: float | None = DEFAULT_THRESHOLD,
                       calibration_s: float = CALIBRATION_S, events: Sequence[float] | None = None,
                       q: int = 4) -> DetectionReport:
    """Distance between trailing-window Jacobian estimates and ``model_jacobian``.

    An evaluation at time t uses samples in [t - window_s, t). Windows that
    straddle a known event (``events``, default the series' trip events) are
    marked invalid and kept out of the alarm logic. With ``threshold=None``
    the threshold is calibrated as max(floor, 3 x median) over the valid
    distances whose windows end within ``calibration_s`` of the start. That
    median rests on few independent windows, so it is noisy; the fixed
    default suits baselines of a few percent.

    Alarms: ``onset`` at the first valid above-threshold evaluation after
    calibration (and after each return below threshold), ``confirmed`` once
    the distance has stayed above threshold for a full window length
    regardless of validity.
    """
    if M is None:
        raise ValueError("inertias M are required")
    J_ref = np.asarray(model_jacobian, dtype=float)
    if window_s <= 0 or stride_s <= 0:
        raise ValueError("window and stride must be positive")
    events = list(series.contingency_times() if events is None else events)
    t_first = series.t0 + window_s
    t_last = series.t0 + series.duration
    times = np.arange(t_first, t_last + 1e-9, stride_s) if t_first <= t_last + 1e-9 else np.empty(0)

    dist = np.full(len(times), np.nan)
    valid = np.zeros(len(times), dtype=bool)
    errors = []
    est_last = None
    # sample-index windows; cumulative sums would be faster but this is not the bottleneck
    for k, t in enumerate(times):
        sl = series.window(t - window_s, t)
        straddle = any(t - window_s < te < t for te in events)
        try:
            cov = covariance_from_arrays(series.delta[sl], series.omega[sl], (t - window_s, t, sl.stop - sl.start),
                                         series.frame, series.labels)
            est = estimate_jacobian(cov, M, method, D)
        except GridsenseError as exc:
            errors.append((float(t), str(exc)))
            continue
        dist[k] = frobenius_distance(est.J, J_ref)
        valid[k] = not straddle
        if valid[k]:
            est_last = (t, est.J)

    if threshold is None:
        calib = valid & (times <= series.t0 + calibration_s + 1e-9)
        med = float(np.median(dist[calib])) if calib.any() else 0.0
        threshold = max(THRESHOLD_FLOOR, THRESHOLD_FACTOR * med)
    armed = times > series.t0 + calibration_s + 1e-9

    alarms = []
    above_prev = False
    run_start = None
    confirmed = False
    for k, t in enumerate(times):
        over = np.isfinite(dist[k]) and dist[k] > threshold
        hit = over and valid[k] and armed[k]
        if hit and not above_prev:
            alarms.append((float(t), "onset"))
        above_prev = hit if valid[k] else above_prev
        if over and armed[k]:
            run_start = t if run_start is None else run_start
            if not confirmed and t - run_start >= window_s - 1e-9 and valid[k]:
                alarms.append((float(t), "confirmed"))
                confirmed = True
        else:
            run_start = None
            confirmed = False

    bands = []
    for te in events:
        lo, hi = te, te + window_s
        if hi > t_first and lo < t_last:
            bands.append((float(lo), float(hi)))

    loc = None
    if alarms and est_last is not None:
        loc = localize(J_ref, est_last[1], q=q, labels=series.labels)
    return DetectionReport(times, dist, valid, float(threshold), tuple(alarms), tuple(bands), loc, tuple(errors),
                           window_s)


class Discrepancy(str, Enum):
    TOPOLOGY_CHANGE = "TopologyChange"
    OPERATING_POINT_CHANGE = "OperatingPointChange"
    NO_CHANGE = "NoChange"


@dataclass(frozen=True)
class ClassifierThresholds:
    mean_shift: float = 2.0  # in units of the pre-window channel std
    distance: float = 0.12


@dataclass(frozen=True)
class Classification:
    kind: Discrepancy
    mean_shift: float
    distance: float


def classify_discrepancy(series: AmbientSeries, pre_window: tuple[float, float], post_window: tuple[float, float],
                         thresholds: ClassifierThresholds | None = None, *, model: MachineModel | None = None,
                         M=None, method: str = SIMPLIFIED, D=None) -> Classification:
    """Label the change between two windows.

    The Jacobian estimated from the post window is compared against a
    reference: the model Jacobian evaluated at the post-window mean angles
    when ``model`` is given (an operating-point move then leaves no
    mismatch), otherwise the Jacobian estimated from the pre window. A
    mismatch above ``thresholds.distance`` means a topology change; a
    per-channel mean shift without mismatch means an operating-point change.
    With no model, a mismatch that comes with a mean shift is attributed to
    the operating point.
    """
    th = thresholds or ClassifierThresholds()
    pre = sample_covariance(series, pre_window)
    post = sample_covariance(series, post_window)
    sl_pre = series.window(*pre_window)
    sl_post = series.window(*post_window)
    mu_pre = series.delta[sl_pre].mean(axis=0)
    mu_post = series.delta[sl_post].mean(axis=0)
    sd = np.sqrt(np.diag(pre.Q_dd))
    shift = float(np.max(np.abs(mu_post - mu_pre) / np.where(sd > 0, sd, np.inf))) if series.m else 0.0
    if not np.isfinite(shift):
        shift = 0.0

    if model is not None:
        frame = series.frame.resolve(model.M)
        ind = frame.independent(model.n)
        M_ind = model.M[ind]
        D_ind = model.D[ind] if D is None else D
        est = estimate_jacobian(post, M_ind, method, D_ind)
        J_ref = jacobian_analytic(model, mu_post, frame)
        dist = frobenius_distance(est.J, J_ref)
        if dist > th.distance:
            kind = Discrepancy.TOPOLOGY_CHANGE
        elif shift > th.mean_shift:
            kind = Discrepancy.OPERATING_POINT_CHANGE
        else:
            kind = Discrepancy.NO_CHANGE
        return Classification(kind, shift, dist)

    if M is None:
        raise ValueError("either a model or the inertias M are required")
    J_pre = estimate_jacobian(pre, M, method, D).J
    J_post = estimate_jacobian(post, M, method, D).J
    dist = frobenius_distance(J_post, J_pre)
    if shift > th.mean_shift:
        kind = Discrepancy.OPERATING_POINT_CHANGE
    elif dist > th.distance:
        kind = Discrepancy.TOPOLOGY_CHANGE
    else:
        kind = Discrepancy.NO_CHANGE
    return Classification(kind, shift, dist)
