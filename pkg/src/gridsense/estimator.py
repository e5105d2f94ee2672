"""Jacobian, damping and state-matrix estimates from ambient covariances.

The stationary covariance C of x = (delta, omega) obeys A C + C A^T = -B B^T.
Its off-diagonal block gives the Jacobian

    J = M C_ww C_dd^-1 + D C_dw C_dd^-1            (method "full")
    J = M C_ww C_dd^-1                             (method "simplified")

and the diagonal of its speed block gives each machine's damping

    D_k = (M_k [BB^T]_kk / 2 + M_k R_kk / 2) / [C_ww + C_dw C_dd^-1 C_dw]_kk
    R   = C_dw C_dd^-1 C_ww - C_ww C_dd^-1 C_dw

which in the simplified form (C_dw -> 0) is D_k = M_k [BB^T]_kk / (2 [C_ww]_kk).
With the plain-frame noise input [BB^T]_kk = G_kk^2 E_k^4 sigma_k^2 / M_k^2.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import Frame, StateMatrix, assemble_state_matrix
from .errors import DegenerateCovarianceError, IllConditionedWindowError, SampleSizeError
from .simulator import AmbientSeries

SIMPLIFIED = "simplified"
FULL = "full"
METHODS = (SIMPLIFIED, FULL)

#: relative eigenvalue floor of Q_dd; below it the window is rejected
EIG_FLOOR = 1e-12
#: condition number limit of Q_dd
COND_LIMIT = 1e10


class DampingWarning(UserWarning):
    pass


class TrendWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CovariancePair:
    Q_dd: np.ndarray
    Q_ww: np.ndarray
    Q_dw: np.ndarray
    window: tuple[float, float, int]
    frame: Frame = Frame.plain()
    labels: tuple[int, ...] = ()

    def __post_init__(self):
        if self.window[2] < 2:
            raise SampleSizeError("covariance needs at least two samples")

    @property
    def m(self) -> int:
        return self.Q_dd.shape[0]

    def restrict(self, positions: Sequence[int]) -> "CovariancePair":
        ix = np.ix_(positions, positions)
        labels = tuple(self.labels[p] for p in positions) if self.labels else ()
        return CovariancePair(self.Q_dd[ix], self.Q_ww[ix], self.Q_dw[ix], self.window, self.frame, labels)

    @classmethod
    def from_state_covariance(cls, C, frame: Frame = Frame.plain(), labels=()) -> "CovariancePair":
        """Split an exact 2m x 2m covariance (e.g. from ``solve_lyapunov``)."""
        C = np.asarray(C, dtype=float)
        m = C.shape[0] // 2
        return cls(C[:m, :m], C[m:, m:], C[:m, m:], (0.0, np.inf, np.iinfo(np.int64).max), frame, tuple(labels))


@dataclass(frozen=True)
class JacobianEstimate:
    J: np.ndarray
    method: str
    window: tuple[float, float, int]
    frame: Frame
    condition: float
    labels: tuple[int, ...] = ()
    submatrix: bool = False


@dataclass(frozen=True)
class DampingEstimate:
    D: np.ndarray
    method: str
    inputs: dict = field(default_factory=dict)
    negative: tuple[int, ...] = ()  # machine labels
    labels: tuple[int, ...] = ()


def _check_trend(x: np.ndarray, name: str):
    """Warn when a channel carries a linear trend larger than 3x its spread."""
    N = x.shape[0]
    if N < 3:
        return
    s = np.linspace(-0.5, 0.5, N)
    slope = (s @ (x - x.mean(axis=0))) / (s @ s)
    std = x.std(axis=0)
    bad = np.abs(slope) > 3.0 * np.where(std > 0, std, np.inf)
    if np.any(bad):
        warnings.warn(f"{name}: linear trend exceeds 3x channel std in channels {np.flatnonzero(bad).tolist()}",
                      TrendWarning, stacklevel=3)


def covariance_from_arrays(delta, omega, window=None, frame: Frame = Frame.plain(), labels=(),
                           noise_std: tuple[float, float] = (0.0, 0.0)) -> CovariancePair:
    """Unbiased sample covariances with the window mean removed per channel.

    ``noise_std`` = (angle, speed) standard deviations of independent
    measurement noise; their variances are subtracted from the diagonals.
    """
    delta = np.asarray(delta, dtype=float)
    omega = np.asarray(omega, dtype=float)
    N = delta.shape[0]
    if N < 2:
        raise SampleSizeError(f"window holds {N} samples; at least 2 are needed")
    _check_trend(delta, "delta")
    dc = delta - delta.mean(axis=0)
    wc = omega - omega.mean(axis=0)
    Q_dd = dc.T @ dc / (N - 1)
    Q_ww = wc.T @ wc / (N - 1)
    Q_dw = dc.T @ wc / (N - 1)
    Q_dd = 0.5 * (Q_dd + Q_dd.T)
    Q_ww = 0.5 * (Q_ww + Q_ww.T)
    sd, sw = noise_std
    if sd or sw:
        m = Q_dd.shape[0]
        Q_dd = Q_dd - sd**2 * np.eye(m)
        Q_ww = Q_ww - sw**2 * np.eye(m)
    if window is None:
        window = (0.0, float(N), N)
    return CovariancePair(Q_dd, Q_ww, Q_dw, window, frame, tuple(labels))


def sample_covariance(series: AmbientSeries, window: tuple[float, float] | None = None,
                      noise_std: tuple[float, float] = (0.0, 0.0)) -> CovariancePair:
    """Covariances over ``window = (t_start, t_end)`` seconds (whole series if None).

    See ``covariance_from_arrays`` for ``noise_std``.
    """
    if window is None:
        sl = slice(0, series.n_samples)
        t_start, t_end = series.t0, series.t0 + series.duration
    else:
        t_start, t_end = window
        if t_start < series.t0 - 1e-9 or t_end > series.t0 + series.duration + 1e-9 or t_end <= t_start:
            raise SampleSizeError(f"window [{t_start}, {t_end}] s lies outside the series")
        sl = series.window(t_start, t_end)
    N = sl.stop - sl.start
    if N < 2:
        raise SampleSizeError(f"window [{t_start}, {t_end}] s holds {N} samples")
    return covariance_from_arrays(
        series.delta[sl], series.omega[sl], (float(t_start), float(t_end), N), series.frame, series.labels,
        noise_std,
    )


def _inverse_dd(Q_dd: np.ndarray) -> tuple[np.ndarray, float]:
    w, V = np.linalg.eigh(Q_dd)
    lmax = w.max() if w.size else 0.0
    if lmax <= 0:
        raise IllConditionedWindowError("angle covariance is zero; use a longer window", condition=np.inf)
    cond = lmax / w.min() if w.min() > 0 else np.inf
    if w.min() < EIG_FLOOR * lmax or cond > COND_LIMIT:
        raise IllConditionedWindowError(
            f"angle covariance is ill-conditioned (condition {cond:.3g}); use a longer window", condition=cond
        )
    return (V / w) @ V.T, float(cond)


def estimate_jacobian(cov: CovariancePair, M, method: str = SIMPLIFIED, D=None) -> JacobianEstimate:
    """Dynamic state Jacobian from windowed covariances and known inertias."""
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    M = np.asarray(M, dtype=float)
    if M.shape != (cov.m,):
        raise ValueError(f"need {cov.m} inertias, got {M.shape}")
    inv, cond = _inverse_dd(cov.Q_dd)
    J = M[:, None] * (cov.Q_ww @ inv)
    if method == FULL:
        if D is None:
            raise ValueError("the full estimator needs the damping D")
        D = np.asarray(D, dtype=float)
        if D.shape != (cov.m,):
            raise ValueError(f"need {cov.m} damping values, got {D.shape}")
        J = J + D[:, None] * (cov.Q_dw @ inv)
    return JacobianEstimate(J, method, cov.window, cov.frame, cond, cov.labels)


def noise_variance_diag(frame: Frame, M, E, G_diag, sigma) -> np.ndarray:
    """Diagonal of B B^T (speed block) for every machine in ``frame``."""
    M, E, G_diag, sigma = (np.asarray(v, dtype=float) for v in (M, E, G_diag, sigma))
    amp = E**2 * G_diag * sigma
    if frame.kind == "plain":
        return (amp / M) ** 2
    n = len(M)
    if frame.kind == "coi":
        L = np.diag(-amp / M) + np.tile(amp / M.sum(), (n, 1))
    else:
        L = np.diag(-amp / M)
        L = L - L[frame.index : frame.index + 1, :]
    return (L**2).sum(axis=1)


def estimate_damping(cov: CovariancePair, M, E, G_diag, sigma, method: str = SIMPLIFIED) -> DampingEstimate:
    """Per-machine damping from the speed covariance diagonal.

    ``M``, ``E``, ``G_diag`` and ``sigma`` cover every machine. In a COI or
    reference frame only the independent machines get an estimate: the
    dependent machine's speed follows from the frame constraint rather than
    from its own damped equation.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    M, E, G_diag, sigma = (np.asarray(v, dtype=float) for v in (M, E, G_diag, sigma))
    frame = cov.frame
    n = len(M)
    bb = noise_variance_diag(frame, M, E, G_diag, sigma)
    ind = np.arange(n) if cov.m == n else frame.independent(n)
    if len(ind) != cov.m:
        raise ValueError(f"covariance has {cov.m} channels, frame {frame} implies {len(ind)}")
    C_ww_diag = np.diag(cov.Q_ww)
    Mk = M[ind]
    if method == SIMPLIFIED:
        num = 0.5 * Mk * bb[ind]
        den = C_ww_diag
    else:
        inv, _ = _inverse_dd(cov.Q_dd)
        R = cov.Q_dw @ inv @ cov.Q_ww - cov.Q_ww @ inv @ cov.Q_dw
        C_hat = cov.Q_ww + cov.Q_dw @ inv @ cov.Q_dw
        num = 0.5 * (Mk * bb[ind] + Mk * np.diag(R))
        den = np.diag(C_hat)
    if np.any(den <= 0):
        raise DegenerateCovarianceError("speed variance is not positive for some machine")
    D = num / den
    labels = tuple(int(i) + 1 for i in ind)
    negative = tuple(labels[i] for i in np.flatnonzero(D < 0))
    if negative:
        warnings.warn(f"negative damping estimate for machines {list(negative)}", DampingWarning, stacklevel=2)
    inputs = {"E": E.tolist(), "G_diag": G_diag.tolist(), "sigma": sigma.tolist(), "frame": str(frame)}
    return DampingEstimate(D, method, inputs, negative, labels)


def assemble_estimated_state_matrix(est: JacobianEstimate, M, D) -> StateMatrix:
    """State matrix from an estimated Jacobian and known (or estimated) damping."""
    prov = {"source": "estimated", "method": est.method, "window": list(est.window),
            "condition": est.condition}
    return assemble_state_matrix(est.J, M, D, est.frame, prov)


def estimate_submatrix(series: AmbientSeries, observed: Sequence[int], M_sub, method: str = SIMPLIFIED,
                       D_sub=None, window=None) -> JacobianEstimate:
    """Jacobian sub-matrix over the observed machines (by label) from their channels only."""
    observed = list(observed)
    if len(observed) < 2:
        raise ValueError("at least two observed machines are needed")
    pos = {lab: k for k, lab in enumerate(series.labels)}
    missing = [lab for lab in observed if lab not in pos]
    if missing:
        raise ValueError(f"machines {missing} have no channel in the series")
    sub = series.select([pos[lab] for lab in observed])
    cov = sample_covariance(sub, window)
    est = estimate_jacobian(cov, M_sub, method, D_sub)
    return JacobianEstimate(est.J, est.method, est.window, est.frame, est.condition, tuple(observed),
                            submatrix=len(observed) < series.m)
