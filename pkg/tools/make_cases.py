"""Regenerate the shipped golden cases (wscc9.case, ieee39.case).

Solves an AC power flow once, offline, so that the case files carry solved
bus voltages. The package itself never runs a power flow. Transformer taps are
ignored (series impedance only), consistently with the package's admittance
model, so the stored voltages are exact for that model.

    python tools/make_cases.py
"""

from pathlib import Path

import numpy as np
from scipy.optimize import root

from gridsense.netmodel import (
    Branch,
    Bus,
    Generator,
    Load,
    NetworkCase,
    build_ybus,
    format_case,
    generator_injections,
    internal_emfs,
)

OUT = Path(__file__).resolve().parents[1] / "src" / "gridsense" / "cases"


def power_flow(bus_ids, Y, slack, pv, vset, pg, loads, v0=None):
    """Polar Newton power flow; returns complex voltages indexed like bus_ids."""
    n = len(bus_ids)
    idx = {b: k for k, b in enumerate(bus_ids)}
    Psp = np.zeros(n)
    Qsp = np.zeros(n)
    for b, p in pg.items():
        Psp[idx[b]] += p
    for b, (p, q) in loads.items():
        Psp[idx[b]] -= p
        Qsp[idx[b]] -= q
    vm = np.ones(n)
    for b, v in vset.items():
        vm[idx[b]] = v
    s = idx[slack]
    pv_k = [idx[b] for b in pv]
    ang_unknown = [k for k in range(n) if k != s]
    mag_unknown = [k for k in range(n) if k != s and k not in pv_k]

    def unpack(z):
        va = np.zeros(n)
        m = vm.copy()
        va[ang_unknown] = z[: len(ang_unknown)]
        m[mag_unknown] = z[len(ang_unknown):]
        return m * np.exp(1j * va)

    def mismatch(z):
        V = unpack(z)
        S = V * np.conj(Y @ V)
        return np.concatenate([(S.real - Psp)[ang_unknown], (S.imag - Qsp)[mag_unknown]])

    z0 = np.concatenate([np.zeros(len(ang_unknown)), np.ones(len(mag_unknown))])
    sol = root(mismatch, z0, method="hybr", tol=1e-13)
    assert np.abs(mismatch(sol.x)).max() < 1e-10
    return unpack(sol.x)


def make_case(name, bus_ids, branches, gens, loads, slack, vset, pg):
    buses0 = tuple(Bus(b, 1.0, 0.0) for b in bus_ids)
    brs = tuple(Branch(k + 1, f, t, r, x, b) for k, (f, t, r, x, b) in enumerate(branches))
    skeleton = NetworkCase(buses0, brs, (), (), 100.0, name)
    Y = build_ybus(skeleton)
    pv = [b for b in vset if b != slack]
    V = power_flow(bus_ids, Y, slack, pv, vset, pg, loads)
    buses = tuple(Bus(b, float(abs(v)), float(np.angle(v))) for b, v in zip(bus_ids, V))
    lds = tuple(Load(b, p, q) for b, (p, q) in loads.items())
    gen_objs = tuple(Generator(b, xd, M, D, 0.0) for b, xd, M, D in gens)
    case = NetworkCase(buses, brs, gen_objs, lds, 100.0, name)
    S = generator_injections(case)
    gen_objs = tuple(Generator(g.bus, g.xd, g.M, g.D, float(S[k].real)) for k, g in enumerate(gen_objs))
    case = NetworkCase(buses, brs, gen_objs, lds, 100.0, name)
    return case


def wscc9():
    bus_ids = list(range(1, 10))
    branches = [
        (1, 4, 0.0, 0.0576, 0.0),
        (2, 7, 0.0, 0.0625, 0.0),
        (3, 9, 0.0, 0.0586, 0.0),
        (4, 5, 0.010, 0.085, 0.176),
        (4, 6, 0.017, 0.092, 0.158),
        (5, 7, 0.032, 0.161, 0.306),
        (6, 9, 0.039, 0.170, 0.358),
        (7, 8, 0.0085, 0.072, 0.149),
        (8, 9, 0.0119, 0.1008, 0.209),
    ]
    loads = {5: (1.25, 0.5), 6: (0.9, 0.3), 8: (1.0, 0.35)}
    # M and D as used for the 9-bus ambient study (D = M)
    gens = [(1, 0.0608, 0.63, 0.63), (2, 0.1198, 0.34, 0.34), (3, 0.1813, 0.16, 0.16)]
    vset = {1: 1.04, 2: 1.025, 3: 1.025}
    pg = {2: 1.63, 3: 0.85}
    return make_case("WSCC 3-machine 9-bus", bus_ids, branches, gens, loads, 1, vset, pg)


# standard 39-bus New England data, 100 MVA base
_BR39 = """
1 2 0.0035 0.0411 0.6987
1 39 0.001 0.025 0.75
2 3 0.0013 0.0151 0.2572
2 25 0.007 0.0086 0.146
2 30 0 0.0181 0
3 4 0.0013 0.0213 0.2214
3 18 0.0011 0.0133 0.2138
4 5 0.0008 0.0128 0.1342
4 14 0.0008 0.0129 0.1382
5 6 0.0002 0.0026 0.0434
5 8 0.0008 0.0112 0.1476
6 7 0.0006 0.0092 0.113
6 11 0.0007 0.0082 0.1389
6 31 0 0.025 0
7 8 0.0004 0.0046 0.078
8 9 0.0023 0.0363 0.3804
9 39 0.001 0.025 1.2
10 11 0.0004 0.0043 0.0729
10 13 0.0004 0.0043 0.0729
10 32 0 0.02 0
12 11 0.0016 0.0435 0
12 13 0.0016 0.0435 0
13 14 0.0009 0.0101 0.1723
14 15 0.0018 0.0217 0.366
15 16 0.0009 0.0094 0.171
16 17 0.0007 0.0089 0.1342
16 19 0.0016 0.0195 0.304
16 21 0.0008 0.0135 0.2548
16 24 0.0003 0.0059 0.068
17 18 0.0007 0.0082 0.1319
17 27 0.0013 0.0173 0.3216
19 20 0.0007 0.0138 0
19 33 0.0007 0.0142 0
20 34 0.0009 0.018 0
21 22 0.0008 0.014 0.2565
22 23 0.0006 0.0096 0.1846
22 35 0 0.0143 0
23 24 0.0022 0.035 0.361
23 36 0.0005 0.0272 0
25 26 0.0032 0.0323 0.531
25 37 0.0006 0.0232 0
26 27 0.0014 0.0147 0.2396
26 28 0.0043 0.0474 0.7802
26 29 0.0057 0.0625 1.029
28 29 0.0014 0.0151 0.249
29 38 0.0008 0.0156 0
"""

_LOAD39 = {
    1: (97.6, 44.2), 3: (322, 2.4), 4: (500, 184), 7: (233.8, 84), 8: (522, 176.6),
    9: (6.5, -66.6), 12: (8.53, 88), 15: (320, 153), 16: (329, 32.3), 18: (158, 30),
    20: (680, 103), 21: (274, 115), 23: (247.5, 84.6), 24: (308.6, -92.2), 25: (224, 47.2),
    26: (139, 17), 27: (281, 75.5), 28: (206, 27.6), 29: (283.5, 26.9), 31: (9.2, 4.6),
    39: (1104, 250),
}

# bus, H (s, system base), xd' (pu), Pg (MW), Vset
_GEN39 = [
    (30, 42.0, 0.031, 250, 1.0499),
    (31, 30.3, 0.0697, None, 0.982),
    (32, 35.8, 0.0531, 650, 0.9841),
    (33, 28.6, 0.0436, 632, 0.9972),
    (34, 26.0, 0.132, 508, 1.0123),
    (35, 34.8, 0.05, 650, 1.0494),
    (36, 26.4, 0.049, 560, 1.0636),
    (37, 24.3, 0.057, 540, 1.0275),
    (38, 34.5, 0.057, 830, 1.0265),
    (39, 500.0, 0.006, 1000, 1.03),
]

# damping values of the 39-bus ambient study, generators ordered by bus 30..39
_D39 = [11.88, 8.57, 10.13, 8.09, 7.36, 9.85, 7.47, 6.88, 14.64, 21.22]

# inertia convention of the 9-bus study's machines 2 and 3: M = H / 18.85
_M_PER_H = 1.0 / 18.85


def ieee39():
    bus_ids = list(range(1, 40))
    branches = [tuple(float(v) for v in line.split()) for line in _BR39.strip().splitlines()]
    branches = [(int(f), int(t), r, x, b) for f, t, r, x, b in branches]
    loads = {b: (p / 100.0, q / 100.0) for b, (p, q) in _LOAD39.items()}
    gens = [(bus, xd, round(H * _M_PER_H, 4), d) for (bus, H, xd, _, _), d in zip(_GEN39, _D39)]
    vset = {bus: v for bus, _, _, _, v in _GEN39}
    pg = {bus: p / 100.0 for bus, _, _, p, _ in _GEN39 if p is not None}
    return make_case("IEEE 39-bus 10-machine", bus_ids, branches, gens, loads, 31, vset, pg)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for fname, fn in (("wscc9.case", wscc9), ("ieee39.case", ieee39)):
        case = fn()
        E, d0 = internal_emfs(case)
        print(fname, "E =", np.round(E, 4), "Pm =", np.round([g.Pm for g in case.generators], 4))
        (OUT / fname).write_text(format_case(case))


if __name__ == "__main__":
    main()
