"""Compare the numba kernels against their fallback paths.

    python benchmarks/bench_kernels.py [--sizes 10 50 200] [--repeat 5]

Load-flow kernels are timed against the vectorised numpy forms; the
Q-learning loop is timed against its uncompiled Python body. Results are
checked for agreement before timings are reported.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from solargrid import kernels
from solargrid._accel import NUMBA_ENABLED
from solargrid.svc_rl import EnvConfig, Hyperparameters, _training_draws


def random_system(n: int, rng: np.random.Generator):
    """Ring-plus-chords admittance matrix with a mildly perturbed voltage profile."""
    Y = np.zeros((n, n), dtype=complex)
    edges = [(i, (i + 1) % n) for i in range(n)] + [
        tuple(rng.choice(n, 2, replace=False)) for _ in range(n // 2)]
    for i, k in edges:
        y = 1.0 / complex(rng.uniform(0.005, 0.05), rng.uniform(0.05, 0.5))
        Y[i, i] += y
        Y[k, k] += y
        Y[i, k] -= y
        Y[k, i] -= y
    vm = 1.0 + 0.05 * rng.standard_normal(n)
    va = 0.1 * rng.standard_normal(n)
    pvpq = np.arange(1, n, dtype=np.int64)
    pq = np.arange(1 + n // 5, n, dtype=np.int64)
    return vm, va, Y.real.copy(), Y.imag.copy(), pvpq, pq


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_load_flow(sizes, repeat):
    rng = np.random.default_rng(0)
    rows = []
    for n in sizes:
        vm, va, G, B, pvpq, pq = random_system(n, rng)
        p1, q1 = kernels._injections_loop(vm, va, G, B)
        p2, q2 = kernels._injections_numpy(vm, va, G, B)
        assert np.allclose(p1, p2, atol=1e-10) and np.allclose(q1, q2, atol=1e-10)
        J1 = kernels._jacobian_loop(vm, va, G, B, p1, q1, pvpq, pq)
        J2 = kernels._jacobian_numpy(vm, va, G, B, p1, q1, pvpq, pq)
        assert np.allclose(J1, J2, atol=1e-9)
        rows.append((f"injections n={n}",
                     best_of(lambda: kernels._injections_loop(vm, va, G, B), repeat),
                     best_of(lambda: kernels._injections_numpy(vm, va, G, B), repeat)))
        rows.append((f"jacobian n={n}",
                     best_of(lambda: kernels._jacobian_loop(vm, va, G, B, p1, q1, pvpq, pq), repeat),
                     best_of(lambda: kernels._jacobian_numpy(vm, va, G, B, p1, q1, pvpq, pq), repeat)))
    return rows


def bench_training(episodes, repeat):
    config = EnvConfig()
    hyper = Hyperparameters(episodes=episodes)
    offsets, u, a = _training_draws(config, hyper)
    eps = hyper.epsilons()
    args = (offsets, u, a, eps, config.actions, config.k_v, config.q_limit, config.nominal_voltage,
            config.band_low, config.band_high, config.deviation_weight, config.in_band_bonus,
            config.v_min, config.bin_width, hyper.learning_rate, hyper.discount)
    shape = (config.n_bins, config.actions.shape[0])
    fast = kernels.train_q_table
    slow = getattr(fast, "py_func", fast)

    q1, q2 = np.zeros(shape), np.zeros(shape)
    fast(q1, *args)
    slow(q2, *args)
    assert np.array_equal(q1, q2), "compiled and Python Q-learning disagree"
    return [(f"q-learning {episodes} episodes",
             best_of(lambda: fast(np.zeros(shape), *args), repeat),
             best_of(lambda: slow(np.zeros(shape), *args), repeat))]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[10, 50, 200])
    ap.add_argument("--episodes", type=int, default=500)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not NUMBA_ENABLED:
        print("numba disabled (SOLARGRID_DISABLE_NUMBA); both columns time the fallback path")
    rows = bench_load_flow(args.sizes, args.repeat) + bench_training(args.episodes, args.repeat)
    print(f"{'kernel':<28}{'numba ms':>12}{'fallback ms':>14}{'speed-up':>10}")
    for name, t_fast, t_slow in rows:
        print(f"{name:<28}{1e3 * t_fast:>12.3f}{1e3 * t_slow:>14.3f}{t_slow / t_fast:>9.1f}x")


if __name__ == "__main__":
    main()
