"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Each row reports the best of N wall-clock timings per backend and the
speed-up of the compiled core. Outputs of the two backends are compared
as a sanity check.
"""
import argparse
import time

import numpy as np

from rehab_ilc import _backend, elbow, narx
from rehab_ilc.elbow import JointParams, refine
from rehab_ilc.task import TaskSpec, target_motor_command


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases():
    tau = target_motor_command(TaskSpec(0.2), JointParams())
    net = narx.fit_normalization(narx.init(narx.VARIANTS["NARX1"], 0), tau, tau)
    theta = np.ascontiguousarray(net.params)
    widths = np.array([4, 7, 1], dtype=np.intp)
    u = net.normalize_input(tau.samples)
    exo, fb = np.array([0, 1], dtype=np.intp), np.array([1, 2], dtype=np.intp)
    fine = refine(tau.samples, 2 * elbow.SUBSTEPS)
    p = JointParams()
    return {
        "narx_forward (3000 steps)": lambda k: k.narx_forward(theta, widths, u, exo, fb)[0],
        "narx_jacobian (3000 x 43)": lambda k: k.narx_jacobian(theta, widths, u, exo, fb)[1],
        "narx_gradient (BPTT)": lambda k: k.narx_gradient(theta, widths, u, u, exo, fb)[0],
        "rk4_simulate (30 s)": lambda k: k.rk4_simulate(fine, elbow.SUBSTEPS, tau.dt, p.inertia,
                                                        p.viscosity, p.stiffness, 0.0, 0.0)[0],
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = _backend.available()
    if "cython" not in backends:
        print("compiled kernels are not built; only the numpy fallback is available")
    mods = {name: _backend.load(name) for name in backends}
    print(f"{'kernel':<28}" + "".join(f"{b + ' [ms]':>16}" for b in backends) + f"{'speed-up':>12}")
    for name, fn in cases().items():
        timings, outputs = {}, {}
        for b, mod in mods.items():
            timings[b], outputs[b] = best_of(lambda: fn(mod), args.repeat)
        line = f"{name:<28}" + "".join(f"{1e3 * timings[b]:>16.3f}" for b in backends)
        if len(mods) == 2:
            line += f"{timings['python'] / timings['cython']:>11.1f}x"
            np.testing.assert_allclose(outputs["cython"], outputs["python"], rtol=1e-9, atol=1e-12)
        print(line)


if __name__ == "__main__":
    main()
