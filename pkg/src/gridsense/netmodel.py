"""Network cases, admittance assembly and Kron reduction to generator internal nodes.

Case files are plain text with ``[buses]``, ``[branches]``, ``[generators]`` and
``[loads]`` sections, one whitespace separated record per line::

    base_mva 100
    [buses]
    # id  vm  va(rad)
    1  1.04  0.0
    [branches]
    # id  from  to  r  x  b  status
    1  1  4  0.0  0.0576  0.0  1
    [generators]
    # bus  xd'  M  D  Pm  [E]
    1  0.0608  0.63  0.63  0.7164
    [loads]
    # bus  P  Q
    5  1.25  0.5

Everything is per unit on ``base_mva``; angles are radians.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    CaseFormatError,
    DegenerateBranchError,
    NonSymmetricAdmittanceError,
    NotFoundError,
    ReductionSingularError,
    SingularLoadError,
)

CASE_DIR = Path(__file__).parent / "cases"

#: condition number above which the eliminated block is treated as singular
REDUCTION_COND_LIMIT = 1e12


@dataclass(frozen=True)
class Bus:
    id: int
    vm: float
    va: float


@dataclass(frozen=True)
class Branch:
    id: int
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float = 0.0
    in_service: bool = True

    def connects(self, a: int, b: int) -> bool:
        return {self.from_bus, self.to_bus} == {a, b}


@dataclass(frozen=True)
class Generator:
    bus: int
    xd: float
    M: float
    D: float
    Pm: float
    E: float | None = None


@dataclass(frozen=True)
class Load:
    bus: int
    P: float
    Q: float


@dataclass(frozen=True)
class NetworkCase:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...] = ()
    generators: tuple[Generator, ...] = ()
    loads: tuple[Load, ...] = ()
    base_mva: float = 100.0
    name: str = ""

    def __post_init__(self):
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise CaseFormatError("duplicate bus id")
        known = set(ids)
        for br in self.branches:
            for end in (br.from_bus, br.to_bus):
                if end not in known:
                    raise CaseFormatError(f"branch {br.id} references unknown bus {end}")
        for g in self.generators:
            if g.bus not in known:
                raise CaseFormatError(f"generator references unknown bus {g.bus}")
            if not g.M > 0:
                raise CaseFormatError(f"generator at bus {g.bus}: inertia must be positive")
            if not g.xd > 0:
                raise CaseFormatError(f"generator at bus {g.bus}: xd' must be positive")
        for ld in self.loads:
            if ld.bus not in known:
                raise CaseFormatError(f"load references unknown bus {ld.bus}")
        for b in self.buses:
            if not b.vm > 0:
                raise CaseFormatError(f"bus {b.id}: voltage magnitude must be positive")

    @property
    def bus_index(self) -> dict[int, int]:
        return {b.id: k for k, b in enumerate(self.buses)}

    @property
    def voltages(self) -> np.ndarray:
        """Solved complex bus voltages in bus order."""
        return np.array([b.vm * np.exp(1j * b.va) for b in self.buses])

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    def branch(self, branch_id: int) -> Branch:
        for br in self.branches:
            if br.id == branch_id:
                return br
        raise NotFoundError(f"no branch with id {branch_id}")

    def find_branch(self, a: int, b: int) -> Branch:
        """Return the first branch joining buses ``a`` and ``b``."""
        for br in self.branches:
            if br.connects(a, b):
                return br
        raise NotFoundError(f"no branch between buses {a} and {b}")

    def in_service_count(self) -> int:
        return sum(br.in_service for br in self.branches)


@dataclass(frozen=True)
class ReducedNetwork:
    """Admittance matrix seen from the generator internal nodes.

    ``delta0`` holds the internal-node angles of the solved operating point
    when the network was derived from a case; it is only a starting guess.
    """

    Y: np.ndarray
    E: np.ndarray
    delta0: np.ndarray | None = field(default=None, compare=False)

    @property
    def n(self) -> int:
        return len(self.E)

    @property
    def G(self) -> np.ndarray:
        return self.Y.real

    @property
    def B(self) -> np.ndarray:
        return self.Y.imag


# ---------------------------------------------------------------- case files

_SECTIONS = {
    "buses": 3,
    "branches": 7,
    "generators": 5,
    "loads": 3,
}


def _floats(tokens, path, lineno):
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        raise CaseFormatError(f"expected numbers, got {' '.join(tokens)!r}", path, lineno) from exc


def parse_case(text: str, path: str | None = None) -> NetworkCase:
    """Parse the sectioned case format; errors name the offending line."""
    rows: dict[str, list] = {name: [] for name in _SECTIONS}
    section = None
    base_mva = 100.0
    name = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise CaseFormatError(f"unterminated section header {line!r}", path, lineno)
            section = line[1:-1].strip().lower()
            if section not in _SECTIONS:
                raise CaseFormatError(f"unknown section {section!r}", path, lineno)
            continue
        tokens = line.split()
        if section is None:
            key = tokens[0].lower()
            if key == "base_mva" and len(tokens) == 2:
                base_mva = _floats(tokens[1:], path, lineno)[0]
            elif key == "name":
                name = " ".join(tokens[1:])
            else:
                raise CaseFormatError(f"unexpected header entry {line!r}", path, lineno)
            continue
        need = _SECTIONS[section]
        if section == "generators":
            if len(tokens) not in (5, 6):
                raise CaseFormatError("generator needs: bus xd' M D Pm [E]", path, lineno)
        elif len(tokens) != need:
            raise CaseFormatError(f"{section} record needs {need} fields, got {len(tokens)}", path, lineno)
        rows[section].append((lineno, tokens))

    def build(lineno, fn):
        try:
            return fn()
        except CaseFormatError:
            raise
        except (ValueError, TypeError) as exc:
            raise CaseFormatError(str(exc), path, lineno) from exc

    buses = []
    for lineno, tok in rows["buses"]:
        v = _floats(tok, path, lineno)
        buses.append(build(lineno, lambda: Bus(int(v[0]), v[1], v[2])))
    branches = []
    for lineno, tok in rows["branches"]:
        v = _floats(tok, path, lineno)
        branches.append(build(lineno, lambda: Branch(int(v[0]), int(v[1]), int(v[2]), v[3], v[4], v[5], bool(int(v[6])))))
    gens = []
    for lineno, tok in rows["generators"]:
        e = None
        if len(tok) == 6 and tok[5] != "-":
            e = _floats(tok[5:], path, lineno)[0]
        v = _floats(tok[:5], path, lineno)
        gens.append(build(lineno, lambda: Generator(int(v[0]), v[1], v[2], v[3], v[4], e)))
    loads = []
    for lineno, tok in rows["loads"]:
        v = _floats(tok, path, lineno)
        loads.append(build(lineno, lambda: Load(int(v[0]), v[1], v[2])))
    try:
        return NetworkCase(tuple(buses), tuple(branches), tuple(gens), tuple(loads), base_mva, name)
    except CaseFormatError as exc:
        raise CaseFormatError(str(exc), path) from exc


def load_case(path: str | Path) -> NetworkCase:
    """Read a case file. Bare names such as ``wscc9`` resolve to the shipped cases."""
    p = Path(path)
    if not p.exists():
        shipped = CASE_DIR / (p.name if p.suffix else p.name + ".case")
        if p.parent == Path(".") and shipped.exists():
            p = shipped
        else:
            raise FileNotFoundError(f"case file not found: {path}")
    return parse_case(p.read_text(), str(p))


def format_case(case: NetworkCase) -> str:
    out = []
    if case.name:
        out.append(f"name {case.name}")
    out.append(f"base_mva {case.base_mva:g}")
    out.append("\n[buses]\n# id  vm  va(rad)")
    for b in case.buses:
        out.append(f"{b.id:4d}  {b.vm:.15g}  {b.va:.15g}")
    out.append("\n[branches]\n# id  from  to  r  x  b  status")
    for br in case.branches:
        out.append(f"{br.id:4d}  {br.from_bus:4d}  {br.to_bus:4d}  {br.r:.15g}  {br.x:.15g}  {br.b:.15g}  {int(br.in_service)}")
    out.append("\n[generators]\n# bus  xd'  M  D  Pm  E")
    for g in case.generators:
        e = "-" if g.E is None else f"{g.E:.15g}"
        out.append(f"{g.bus:4d}  {g.xd:.15g}  {g.M:.15g}  {g.D:.15g}  {g.Pm:.15g}  {e}")
    out.append("\n[loads]\n# bus  P  Q")
    for ld in case.loads:
        out.append(f"{ld.bus:4d}  {ld.P:.15g}  {ld.Q:.15g}")
    return "\n".join(out) + "\n"


# ------------------------------------------------------------------ assembly

def branch_admittance(br: Branch) -> complex:
    if br.r == 0 and br.x == 0:
        raise DegenerateBranchError(f"branch {br.id} ({br.from_bus}-{br.to_bus}) has zero impedance")
    return 1.0 / complex(br.r, br.x)


def build_ybus(case: NetworkCase) -> np.ndarray:
    """Bus admittance matrix from in-service branches (pi model, no taps)."""
    idx = case.bus_index
    n = len(case.buses)
    Y = np.zeros((n, n), dtype=complex)
    for br in case.branches:
        if not br.in_service:
            continue
        y = branch_admittance(br)
        i, j = idx[br.from_bus], idx[br.to_bus]
        Y[i, i] += y + 0.5j * br.b
        Y[j, j] += y + 0.5j * br.b
        Y[i, j] -= y
        Y[j, i] -= y
    return Y


def load_shunts(case: NetworkCase) -> np.ndarray:
    """Constant-impedance shunt admittance per bus from the solved voltages."""
    idx = case.bus_index
    y = np.zeros(len(case.buses), dtype=complex)
    for ld in case.loads:
        vm = case.buses[idx[ld.bus]].vm
        if vm == 0:
            raise SingularLoadError(f"load at bus {ld.bus} sits on a zero-voltage bus")
        y[idx[ld.bus]] += complex(ld.P, -ld.Q) / vm**2
    return y


def embed_loads_and_generators(ybus: np.ndarray, case: NetworkCase) -> np.ndarray:
    """Add load shunts and generator internal nodes (appended last)."""
    nb = ybus.shape[0]
    ng = case.n_gen
    Y = np.zeros((nb + ng, nb + ng), dtype=complex)
    Y[:nb, :nb] = ybus
    Y[np.arange(nb), np.arange(nb)] += load_shunts(case)
    idx = case.bus_index
    for k, g in enumerate(case.generators):
        y = 1.0 / (1j * g.xd)
        i, e = idx[g.bus], nb + k
        Y[i, i] += y
        Y[e, e] += y
        Y[i, e] -= y
        Y[e, i] -= y
    return Y


def kron_reduce(Y: np.ndarray, retained: Sequence[int]) -> np.ndarray:
    """Eliminate every node not in ``retained``: Y_rr - Y_re Y_ee^-1 Y_er."""
    Y = np.asarray(Y)
    scale = max(np.abs(Y).max(), 1.0)
    if not np.allclose(Y, Y.T, rtol=0, atol=1e-12 * scale):
        raise NonSymmetricAdmittanceError("admittance matrix is not symmetric")
    r = np.asarray(retained, dtype=int)
    e = np.setdiff1d(np.arange(Y.shape[0]), r)
    Yrr = Y[np.ix_(r, r)]
    if e.size == 0:
        return Yrr.copy()
    Yee = Y[np.ix_(e, e)]
    cond = np.linalg.cond(Yee)
    if not np.isfinite(cond) or cond > REDUCTION_COND_LIMIT:
        raise ReductionSingularError(
            f"eliminated block is singular (condition {cond:.3g})", condition=cond
        )
    lu = scipy.linalg.lu_factor(Yee)
    return Yrr - Y[np.ix_(r, e)] @ scipy.linalg.lu_solve(lu, Y[np.ix_(e, r)])


def compute_internal_emf(V: complex, S: complex, xd: float) -> tuple[float, float]:
    """Emf magnitude and angle behind ``xd`` for terminal voltage V and injection S."""
    if abs(V) == 0:
        raise ValueError("terminal voltage must be nonzero")
    e = V + 1j * xd * np.conj(S / V)
    return float(abs(e)), float(np.angle(e))


def generator_injections(case: NetworkCase) -> np.ndarray:
    """Complex power delivered by each generator at the solved operating point."""
    V = case.voltages
    S_net = V * np.conj(build_ybus(case) @ V)
    idx = case.bus_index
    for ld in case.loads:
        S_net[idx[ld.bus]] += complex(ld.P, ld.Q)
    per_bus: dict[int, list[int]] = {}
    for k, g in enumerate(case.generators):
        per_bus.setdefault(g.bus, []).append(k)
    S = np.zeros(case.n_gen, dtype=complex)
    for bus, ks in per_bus.items():
        # parallel units on one bus share the injection equally
        for k in ks:
            S[k] = S_net[idx[bus]] / len(ks)
    return S


def internal_emfs(case: NetworkCase) -> tuple[np.ndarray, np.ndarray]:
    """(E, delta0) for all generators; explicit E in the case file wins for magnitudes."""
    V = case.voltages
    S = generator_injections(case)
    idx = case.bus_index
    E = np.empty(case.n_gen)
    d0 = np.empty(case.n_gen)
    for k, g in enumerate(case.generators):
        E[k], d0[k] = compute_internal_emf(V[idx[g.bus]], S[k], g.xd)
        if g.E is not None:
            E[k] = g.E
    return E, d0


def reduce_case(case: NetworkCase, emf: np.ndarray | None = None) -> ReducedNetwork:
    """Reduced admittance at the internal nodes plus emfs.

    Pass ``emf`` to keep the emfs of an earlier operating point, as is done after
    a topology change (classical model: E is constant).
    """
    Y = embed_loads_and_generators(build_ybus(case), case)
    nb = len(case.buses)
    Yred = kron_reduce(Y, range(nb, nb + case.n_gen))
    E, d0 = internal_emfs(case)
    if emf is not None:
        E = np.asarray(emf, dtype=float)
    return ReducedNetwork(Yred, E, d0)


def perturb_topology(case: NetworkCase, branch_ids: Iterable[int], in_service: bool = False) -> NetworkCase:
    """Copy of ``case`` with the given branches switched out (or back in)."""
    ids = list(branch_ids)
    known = {br.id: br for br in case.branches}
    for bid in ids:
        if bid not in known:
            raise NotFoundError(f"no branch with id {bid}")
        if not in_service and not known[bid].in_service:
            raise NotFoundError(f"branch {bid} is already out of service")
    wanted = set(ids)
    branches = tuple(
        dataclasses.replace(br, in_service=in_service) if br.id in wanted else br for br in case.branches
    )
    return dataclasses.replace(case, branches=branches)


def restore_topology(case: NetworkCase, branch_ids: Iterable[int]) -> NetworkCase:
    return perturb_topology(case, branch_ids, in_service=True)
