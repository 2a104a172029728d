"""Compare the numba-compiled kernels against the pure-numpy fallback.

Both backends run identical source (see msk.engine), so besides timing we
check that results agree bitwise. Run from the repo root:

    python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from msk import engine
from msk.dynamics import inverse_dynamics, mass_matrix
from msk.fixtures import full_body, pendulum
from msk.integrator import rollout
from msk.model import pack


def timeit(fn, repeat=50, warmup=3):
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append((time.perf_counter() - start) * 1000)
    return np.mean(times), np.std(times)


def bench_kernel(label, call, repeat=50):
    nb = engine.compiled()
    py = engine.core_py
    res_nb = call(nb)
    res_py = call(py)
    if not isinstance(res_nb, tuple):
        res_nb, res_py = (res_nb,), (res_py,)
    diff = max(np.abs(np.asarray(a, dtype=float) - np.asarray(b,
               dtype=float)).max(initial=0.0)
               for a, b in zip(res_nb, res_py))
    t_nb, s_nb = timeit(lambda: call(nb), repeat=repeat)
    t_py, s_py = timeit(lambda: call(py), repeat=repeat)
    print("%-28s numba %8.3f ms +/- %6.3f   numpy %8.3f ms +/- %6.3f   "
          "%6.1fx   maxdiff %.1e"
          % (label, t_nb, s_nb, t_py, s_py, t_py / t_nb, diff))


def bench_api(label, fn, repeat=20):
    saved = engine.active
    try:
        engine.active = engine.compiled()
        res_nb = fn()
        t_nb, s_nb = timeit(fn, repeat=repeat)
        engine.active = engine.core_py
        res_py = fn()
        t_py, s_py = timeit(fn, repeat=repeat)
    finally:
        engine.active = saved
    diff = np.abs(np.asarray(res_nb) - np.asarray(res_py)).max()
    print("%-28s numba %8.3f ms +/- %6.3f   numpy %8.3f ms +/- %6.3f   "
          "%6.1fx   maxdiff %.1e"
          % (label, t_nb, s_nb, t_py, s_py, t_py / t_nb, diff))


def main():
    print("backend in this session: %s" % engine.backend_name())
    body = full_body()
    pm = pack(body)
    rng = np.random.default_rng(0)
    q = 0.1 * rng.standard_normal(pm.n)
    qd = 0.1 * rng.standard_normal(pm.n)
    qdd = 0.1 * rng.standard_normal(pm.n)
    z = np.zeros(pm.n)

    print("\nraw kernels, full body (%d coords, %d segments):"
          % (pm.n, len(body.segments)))
    bench_kernel("rnea", lambda c: c.rnea(*pm.kin, *pm.iner, pm.gravity, q,
                                          qd, qdd))
    bench_kernel("crba", lambda c: c.crba(*pm.kin, *pm.iner, q))
    bench_kernel("fk", lambda c: c.fk(*pm.kin, q))
    bench_kernel("contact", lambda c: c.contact(*pm.kin, *pm.sph, q, qd))
    bench_kernel("fd_core",
                 lambda c: c.fd_core(*pm.kin, *pm.iner, *pm.sph, pm.gravity,
                                     q, qd, z, 1, np.zeros((0, 3)))[0])

    print("\npublic API, full body:")
    bench_api("inverse_dynamics",
              lambda: inverse_dynamics(body, q, qd, qdd).tau)
    bench_api("mass_matrix", lambda: mass_matrix(body, q))

    pend = pendulum()
    x0 = (np.array([0.4]), np.array([0.0]))
    print("\nrollout, pendulum, 1 s at dt=1e-3:")
    bench_api("rollout rk4",
              lambda: rollout(pend, x0, dt=1e-3, horizon=1.0).q,
              repeat=5)
    zb = np.zeros(pm.n)
    print("\nrollout, full body (free fall), 0.1 s at dt=1e-3:")
    bench_api("rollout rk4",
              lambda: rollout(body, (zb, zb), dt=1e-3, horizon=0.1).q,
              repeat=5)


if __name__ == "__main__":
    main()
