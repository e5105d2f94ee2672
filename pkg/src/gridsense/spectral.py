"""Eigen-analysis of state matrices for small-signal stability monitoring."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalError

MODEL_BASED = "ModelBased"
ESTIMATED = "Estimated"


class DegeneracyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SpectralReport:
    eigenvalues: np.ndarray
    right: np.ndarray  # columns are right eigenvectors
    left: np.ndarray  # columns w_i with w_i^T v_i = 1
    source: str = MODEL_BASED
    residual: float = 0.0
    defective: tuple[int, ...] = ()

    @property
    def size(self) -> int:
        return len(self.eigenvalues)


def eigen_decompose(A, source: str = MODEL_BASED, tol: float = 1e-8) -> SpectralReport:
    """Full spectrum of a real square matrix with biorthonormal eigenvectors."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    if not np.all(np.isfinite(A)):
        raise ValueError("A has non-finite entries")
    try:
        lam, W, V = scipy.linalg.eig(A, left=True, right=True)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue iteration failed: {exc}", partial=None) from exc
    scale = max(np.linalg.norm(A), 1.0)
    residual = float(np.max(np.linalg.norm(A @ V - V * lam, axis=0))) if len(lam) else 0.0
    if residual > tol * scale:
        raise NumericalError(f"eigenpair residual {residual:.3g} exceeds bound", partial=lam)
    # scipy returns conj(W) as left vectors: w^H A = lam w^H, so the transpose form is conj(W)
    W = W.conj()
    s = np.einsum("ij,ij->j", W, V)
    defective = tuple(int(k) for k in np.flatnonzero(np.abs(s) < 1e-10))
    if defective:
        warnings.warn(f"modes {list(defective)} look defective; participation omitted", DegeneracyWarning,
                      stacklevel=2)
    s = np.where(np.abs(s) < 1e-10, 1.0, s)
    W = W / s
    return SpectralReport(lam, V, W, source, residual, defective)


def rightmost_index(eigenvalues) -> int:
    """Largest real part; ties by smaller |imag|, then by index."""
    lam = np.asarray(eigenvalues)
    order = np.lexsort((np.arange(len(lam)), np.abs(lam.imag), -lam.real))
    return int(order[0])


def rightmost_eigenvalue(report: SpectralReport) -> tuple[complex, np.ndarray, np.ndarray]:
    """(lambda, v_right, w_left) of the critical mode, scaled so w^T v = 1."""
    k = rightmost_index(report.eigenvalues)
    return complex(report.eigenvalues[k]), report.right[:, k], report.left[:, k]


def participation_factors(report: SpectralReport) -> np.ndarray:
    """p_ki = |l_ki r_ki|, each mode's column scaled to a maximum of 1.

    Columns of defective modes are NaN.
    """
    P = np.abs(report.left * report.right)
    cmax = P.max(axis=0)
    cmax = np.where(cmax > 0, cmax, 1.0)
    P = P / cmax
    if report.defective:
        P[:, list(report.defective)] = np.nan
    return P


def is_stable(report: SpectralReport, margin: float = 0.0) -> bool:
    return bool(np.all(report.eigenvalues.real < -margin))


def match_spectra(a, b) -> list[tuple[int, int, float]]:
    """Greedy nearest-neighbour pairing of two eigenvalue sets.

    Repeatedly pairs the closest remaining (a_i, b_j); returns (i, j, |a_i - b_j|).
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    d = np.abs(a[:, None] - b[None, :])
    pairs = []
    free_a = set(range(len(a)))
    free_b = set(range(len(b)))
    for flat in np.argsort(d, axis=None, kind="stable"):
        i, j = divmod(int(flat), len(b))
        if i in free_a and j in free_b:
            pairs.append((i, j, float(d[i, j])))
            free_a.discard(i)
            free_b.discard(j)
            if not free_a or not free_b:
                break
    return pairs


def hausdorff_distance(a, b) -> float:
    """Hausdorff distance between two finite sets in the complex plane."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("eigenvalue sets must be nonempty")
    d = np.abs(a[:, None] - b[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))
