"""Classical swing-equation model: power, frames, Jacobians, state/noise matrices.

Frames
------
``plain``
    absolute rotor angles and speeds of all n machines.
``coi``
    angles/speeds relative to the centre of inertia. One machine is dependent
    (``sum(M * delta) == 0``) and is eliminated, leaving n - 1 states per block.
``ref:k``
    angles/speeds relative to machine k; machine k is dropped.

All machine indices are 0-based in code; ``Frame.parse`` accepts the 1-based
labels used on the command line.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, StabilityError
from .netmodel import NetworkCase, ReducedNetwork, reduce_case


@dataclass(frozen=True)
class Frame:
    kind: str = "plain"
    index: int | None = None

    def __post_init__(self):
        if self.kind not in ("plain", "coi", "ref"):
            raise ValueError(f"unknown frame kind {self.kind!r}")
        if self.kind == "ref" and self.index is None:
            raise ValueError("reference frame needs a machine index")

    @classmethod
    def plain(cls) -> "Frame":
        return cls("plain")

    @classmethod
    def coi(cls, dependent: int | None = None) -> "Frame":
        return cls("coi", dependent)

    @classmethod
    def ref(cls, k: int) -> "Frame":
        return cls("ref", k)

    @classmethod
    def parse(cls, text: str) -> "Frame":
        """``plain``, ``coi``, ``coi:K`` or ``ref:K`` with K a 1-based machine label."""
        kind, _, arg = text.strip().lower().partition(":")
        if kind not in ("plain", "coi", "ref"):
            raise ValueError(f"unknown frame {text!r}")
        if arg:
            k = int(arg)
            if k < 1:
                raise ValueError(f"machine labels start at 1, got {k}")
            return cls(kind, k - 1)
        return cls(kind)

    def __str__(self):
        if self.index is None:
            return self.kind
        return f"{self.kind}:{self.index + 1}"

    def resolve(self, M) -> "Frame":
        """Fix the dependent machine of a COI frame (largest inertia by default)."""
        M = np.asarray(M)
        n = len(M)
        if self.index is not None and not 0 <= self.index < n:
            raise ValueError(f"frame machine index {self.index} out of range for {n} machines")
        if self.kind == "coi" and self.index is None:
            return Frame("coi", int(np.argmax(M)))
        return self

    def independent(self, n: int) -> np.ndarray:
        if self.kind == "plain":
            return np.arange(n)
        if self.index is None:
            raise ValueError("unresolved COI frame; call resolve(M) first")
        return np.array([i for i in range(n) if i != self.index], dtype=int)

    def size(self, n: int) -> int:
        return n if self.kind == "plain" else n - 1


@dataclass(frozen=True)
class MachineModel:
    reduced: ReducedNetwork
    M: np.ndarray
    D: np.ndarray
    Pm: np.ndarray

    def __post_init__(self):
        n = self.reduced.n
        for name in ("M", "D", "Pm"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have length {n}")
            object.__setattr__(self, name, arr)
        if np.any(self.M <= 0):
            raise ValueError("inertias must be positive")
        if np.any(self.D < 0):
            raise ValueError("damping must be nonnegative")

    @classmethod
    def from_case(cls, case: NetworkCase, emf=None) -> "MachineModel":
        red = reduce_case(case, emf)
        g = case.generators
        return cls(red, np.array([x.M for x in g]), np.array([x.D for x in g]), np.array([x.Pm for x in g]))

    @property
    def n(self) -> int:
        return self.reduced.n

    @property
    def M_T(self) -> float:
        return float(self.M.sum())

    def with_network(self, reduced: ReducedNetwork) -> "MachineModel":
        return MachineModel(reduced, self.M, self.D, self.Pm)


@dataclass(frozen=True)
class StateMatrix:
    A: np.ndarray
    frame: Frame
    provenance: dict = field(default_factory=dict, compare=False)

    @property
    def m(self) -> int:
        return self.A.shape[0] // 2


@dataclass(frozen=True)
class NoiseInput:
    B: np.ndarray
    sigma: np.ndarray


# ------------------------------------------------------------------ power

def electrical_power(model: MachineModel, delta) -> np.ndarray:
    """P_e,i = sum_j E_i E_j (G_ij cos(d_i - d_j) + B_ij sin(d_i - d_j))."""
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (model.n,):
        raise ValueError(f"expected {model.n} angles, got shape {delta.shape}")
    V = model.reduced.E * np.exp(1j * delta)
    return (V * np.conj(model.reduced.Y @ V)).real


def coi_power(model: MachineModel, delta) -> float:
    return float(np.sum(model.Pm - electrical_power(model, delta)))


def accelerating_power(model: MachineModel, frame: Frame, delta) -> np.ndarray:
    """Frame right-hand side of M * domega/dt without damping and noise, all machines."""
    pa = model.Pm - electrical_power(model, delta)
    if frame.kind == "coi":
        pa = pa - model.M / model.M_T * pa.sum()
    return pa


def coi_transform(delta, omega, M):
    M = np.asarray(M, dtype=float)
    delta = np.asarray(delta, dtype=float)
    omega = np.asarray(omega, dtype=float)
    d0 = np.dot(M, delta) / M.sum()
    w0 = np.dot(M, omega) / M.sum()
    return delta - d0, omega - w0


def inverse_coi(delta_t, omega_t, delta0, omega0):
    """Absolute angles/speeds from COI-relative ones and the COI angle/speed."""
    return np.asarray(delta_t) + delta0, np.asarray(omega_t) + omega0


def expand(frame: Frame, M, x_ind) -> np.ndarray:
    """Full n-vector from the independent coordinates of ``frame``."""
    M = np.asarray(M, dtype=float)
    n = len(M)
    x_ind = np.asarray(x_ind, dtype=float)
    if frame.kind == "plain":
        return x_ind.copy()
    ind = frame.independent(n)
    out = np.zeros(x_ind.shape[:-1] + (n,))
    out[..., ind] = x_ind
    if frame.kind == "coi":
        out[..., frame.index] = -(x_ind @ M[ind]) / M[frame.index]
    return out


def to_frame(frame: Frame, M, x_full) -> np.ndarray:
    """Project a full n-vector (or stack of them) onto the frame's coordinates."""
    M = np.asarray(M, dtype=float)
    x_full = np.asarray(x_full, dtype=float)
    n = len(M)
    if frame.kind == "plain":
        return x_full.copy()
    ind = frame.independent(n)
    if frame.kind == "coi":
        x = x_full - (x_full @ M / M.sum())[..., None]
    else:
        x = x_full - x_full[..., frame.index : frame.index + 1]
    return x[..., ind]


def _as_full(model: MachineModel, frame: Frame, delta) -> np.ndarray:
    delta = np.asarray(delta, dtype=float)
    if delta.shape == (model.n,):
        return delta
    if frame.kind != "plain" and delta.shape == (model.n - 1,):
        return expand(frame, model.M, delta)
    raise ValueError(f"angle vector of shape {delta.shape} does not fit frame {frame}")


# -------------------------------------------------------------- jacobians

def plain_jacobian(model: MachineModel, delta) -> np.ndarray:
    """dPe_i/d delta_j for all machines; rows sum to zero."""
    E = model.reduced.E
    G, B = model.reduced.G, model.reduced.B
    dd = delta[:, None] - delta[None, :]
    J = np.outer(E, E) * (G * np.sin(dd) - B * np.cos(dd))
    np.fill_diagonal(J, 0.0)
    np.fill_diagonal(J, -J.sum(axis=1))
    return J


def coi_power_gradient(model: MachineModel, delta) -> np.ndarray:
    """dP_coi/d delta_i = 2 sum_{k != i} E_i E_k G_ik sin(delta_i - delta_k)."""
    E = model.reduced.E
    G = model.reduced.G.copy()
    np.fill_diagonal(G, 0.0)
    dd = delta[:, None] - delta[None, :]
    return 2.0 * (np.outer(E, E) * G * np.sin(dd)).sum(axis=1)


def jacobian_analytic(model: MachineModel, delta, frame: Frame) -> np.ndarray:
    """Derivative of the frame's restoring power with respect to its independent angles.

    For the COI frame this is d(Pe_i + M_i/M_T P_coi)/d delta~_j with the dependent
    angle substituted through the inertia constraint.
    """
    frame = frame.resolve(model.M)
    delta = _as_full(model, frame, delta)
    Jp = plain_jacobian(model, delta)
    if frame.kind == "plain":
        return Jp
    ind = frame.independent(model.n)
    if frame.kind == "ref":
        return Jp[np.ix_(ind, ind)]
    g = Jp + np.outer(model.M / model.M_T, coi_power_gradient(model, delta))
    dep = frame.index
    chain = -model.M[ind] / model.M[dep]
    return g[np.ix_(ind, ind)] + np.outer(g[ind, dep], chain)


def restoring_power(model: MachineModel, frame: Frame, delta_ind) -> np.ndarray:
    """Frame function whose derivative is ``jacobian_analytic`` (used by finite differences)."""
    frame = frame.resolve(model.M)
    full = expand(frame, model.M, delta_ind)
    pe = electrical_power(model, full)
    if frame.kind == "coi":
        pe = pe + model.M / model.M_T * coi_power(model, full)
    return pe[frame.independent(model.n)]


# ------------------------------------------------------------ equilibrium

def solve_equilibrium(model: MachineModel, frame: Frame, delta_init=None, tol=1e-9, max_iter=50) -> np.ndarray:
    """Newton iteration with step halving; returns the full n-vector of angles.

    Plain and reference frames hold the reference machine (machine 0 for plain)
    at its initial angle and balance the remaining machines; COI angles are
    returned centred so that ``sum(M * delta) == 0``.
    """
    frame = frame.resolve(model.M)
    n = model.n
    if delta_init is None:
        delta_init = model.reduced.delta0 if model.reduced.delta0 is not None else np.zeros(n)
    delta_init = _as_full(model, frame, delta_init)
    if n == 1:
        return delta_init.copy()

    if frame.kind == "coi":
        ind = frame.independent(n)
        x = to_frame(frame, model.M, delta_init)

        def full(x):
            return expand(frame, model.M, x)

        def resid(x):
            return accelerating_power(model, frame, full(x))[ind]

        def jac(x):
            return -jacobian_analytic(model, full(x), frame)
    else:
        ref = 0 if frame.kind == "plain" else frame.index
        ind = np.array([i for i in range(n) if i != ref])
        base = delta_init.copy()
        x = base[ind].copy()

        def full(x):
            d = base.copy()
            d[ind] = x
            return d

        def resid(x):
            return (model.Pm - electrical_power(model, full(x)))[ind]

        def jac(x):
            return -plain_jacobian(model, full(x))[np.ix_(ind, ind)]

    r = resid(x)
    rn = np.abs(r).max()
    for _ in range(max_iter):
        if rn < tol * 1e-3:
            break
        try:
            step = np.linalg.solve(jac(x), -r)
        except np.linalg.LinAlgError:
            raise ConvergenceError(f"singular power-flow Jacobian, residual {rn:.3g}", residual=rn) from None
        t = 1.0
        while True:
            x_new = x + t * step
            r_new = resid(x_new)
            rn_new = np.abs(r_new).max()
            if rn_new < rn or t < 1e-6:
                break
            t *= 0.5
        if np.abs(x_new - x).max() < 1e-15 and rn_new >= rn:
            break
        x, r, rn = x_new, r_new, rn_new
    if not rn < tol:
        raise ConvergenceError(f"equilibrium not found, residual {rn:.3g}", residual=rn)
    out = full(x)
    if frame.kind == "ref":
        out = out - out[frame.index]
    return out


# --------------------------------------------------------------- matrices

def _restrict(vec, frame: Frame, m: int) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    if vec.shape == (m,):
        return vec
    if frame.kind != "plain" and vec.shape == (m + 1,):
        return vec[frame.independent(m + 1)]
    raise ValueError(f"vector of length {len(vec)} does not fit a {m}-machine frame")


def assemble_state_matrix(J, M, D, frame: Frame = Frame.plain(), provenance=None) -> StateMatrix:
    """A = [[0, I], [-M^-1 J, -M^-1 D]] over the frame's independent machines."""
    J = np.asarray(J, dtype=float)
    if J.ndim != 2 or J.shape[0] != J.shape[1]:
        raise ValueError(f"Jacobian must be square, got {J.shape}")
    m = J.shape[0]
    if frame.kind == "coi" and frame.index is None and len(M) == m + 1:
        frame = frame.resolve(M)
    Mi = _restrict(M, frame, m)
    Di = _restrict(D, frame, m)
    A = np.zeros((2 * m, 2 * m))
    A[:m, m:] = np.eye(m)
    A[m:, :m] = -J / Mi[:, None]
    A[m:, m:] = np.diag(-Di / Mi)
    return StateMatrix(A, frame, dict(provenance or {}))


def noise_lower_full(model: MachineModel, frame: Frame, sigma) -> np.ndarray:
    """n x n map from load-noise increments to speed accelerations of every machine."""
    frame = frame.resolve(model.M)
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (model.n,):
        raise ValueError(f"sigma must have length {model.n}")
    if np.any(sigma < 0):
        raise ValueError("sigma must be nonnegative")
    E = model.reduced.E
    amp = E**2 * np.diag(model.reduced.G) * sigma
    L = np.diag(-amp / model.M)
    if frame.kind == "coi":
        L = L + np.tile(amp / model.M_T, (model.n, 1))
    elif frame.kind == "ref":
        k = frame.index
        L = L - L[k : k + 1, :]
    return L


def assemble_noise_matrix(model: MachineModel, frame: Frame, sigma) -> NoiseInput:
    frame = frame.resolve(model.M)
    L = noise_lower_full(model, frame, sigma)
    ind = frame.independent(model.n)
    m = len(ind)
    B = np.zeros((2 * m, model.n))
    B[m:, :] = L[ind, :]
    return NoiseInput(B, np.asarray(sigma, dtype=float))


def model_state_matrix(model: MachineModel, frame: Frame, delta) -> StateMatrix:
    frame = frame.resolve(model.M)
    J = jacobian_analytic(model, delta, frame)
    ind = frame.independent(model.n)
    return assemble_state_matrix(J, model.M[ind], model.D[ind], frame, {"source": "model"})


def is_hurwitz(A) -> bool:
    return bool(np.all(np.linalg.eigvals(A).real < 0))


def solve_lyapunov(A, B) -> np.ndarray:
    """Stationary covariance C with A C + C A^T = -B B^T.

    Solved by Kronecker vectorisation, which is plenty for the 2m <= 40 systems
    used here.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = A.shape[0]
    eig = np.linalg.eigvals(A)
    if not np.all(eig.real < 0):
        raise StabilityError(f"state matrix is not Hurwitz (max real part {eig.real.max():.3g})")
    Q = B @ B.T
    I = np.eye(n)
    K = np.kron(I, A) + np.kron(A, I)
    c = np.linalg.solve(K, -Q.reshape(-1, order="F"))
    C = c.reshape((n, n), order="F")
    return 0.5 * (C + C.T)
