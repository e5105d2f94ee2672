"""Compare the compiled and NumPy Euler-Maruyama kernels.

    python benchmarks/bench_kernels.py [--steps 20000] [--repeat 3]
"""

import argparse
import time

import numpy as np

from gridsense import kernels
from gridsense.dynamics import Frame, MachineModel, noise_lower_full, solve_equilibrium
from gridsense.netmodel import load_case


def run(backend, model, frame, forcing, eq):
    fn = kernels.get_backend(backend)
    r = model.reduced
    t = time.perf_counter()
    out = fn(eq, np.zeros(model.n), r.G, r.B, r.E, model.M, model.D, model.Pm, forcing, 0.01,
             frame.index, 10, eq, np.pi)
    return time.perf_counter() - t, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    try:
        kernels.get_backend("cython")
    except ImportError:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    print(f"{'case':8s} {'n':>3s} {'steps':>7s} {'python s':>10s} {'cython s':>10s} {'speedup':>8s} {'max diff':>9s}")
    for name in ("wscc9", "ieee39"):
        model = MachineModel.from_case(load_case(name))
        frame = Frame.coi().resolve(model.M)
        eq = solve_equilibrium(model, frame)
        rng = np.random.default_rng(0)
        L = noise_lower_full(model, frame, np.full(model.n, 0.01))
        forcing = rng.standard_normal((args.steps, model.n)) * np.sqrt(0.01) @ L.T
        tp = min(run("python", model, frame, forcing, eq)[0] for _ in range(args.repeat))
        tc = min(run("cython", model, frame, forcing, eq)[0] for _ in range(args.repeat))
        diff = np.abs(run("python", model, frame, forcing, eq)[1][0] - run("cython", model, frame, forcing, eq)[1][0])
        print(f"{name:8s} {model.n:3d} {args.steps:7d} {tp:10.4f} {tc:10.4f} {tp / tc:8.1f} {diff.max():9.2e}")


if __name__ == "__main__":
    main()
