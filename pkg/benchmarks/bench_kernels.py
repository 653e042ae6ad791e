"""Time the numba kernels against their numpy twins, then one full replication per backend.

    python benchmarks/bench_kernels.py [--repeat 20] [--skip-engine]

The end-to-end part runs the engine in a subprocess with and without
RURALV2X_DISABLE_NUMBA so each run picks its backend at import time.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from ruralv2x import kernels

ENGINE_SNIPPET = """
import time
from ruralv2x import kernels
from ruralv2x.config import ScenarioConfig
from ruralv2x.engine import run_replication
cfg = ScenarioConfig(density_rho={rho}, sim_duration={duration})
run_replication(cfg.replace(sim_duration=0.2))  # compile / warm caches
t = time.perf_counter()
run_replication(cfg)
print(kernels.BACKEND, time.perf_counter() - t)
"""


def kernel_cases(n_nodes: int):
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 2000, n_nodes)
    y = rng.uniform(-8, 13, n_nodes)
    pt = np.full(n_nodes, 23.0)
    shadow = rng.normal(0, 3, (n_nodes, n_nodes))
    delta = rng.uniform(0, 20, (n_nodes, n_nodes))
    normals = rng.standard_normal((n_nodes, n_nodes))
    p_mw = rng.uniform(0, 1e-9, (n_nodes, n_nodes))
    n_tx = 3 * n_nodes
    tx, slot, lo = rng.integers(0, n_nodes, n_tx), rng.integers(0, 200, n_tx), rng.integers(0, 4, n_tx)
    sig = rng.uniform(1e-12, 1e-9, n_nodes)
    interf = rng.uniform(0, 1e-10, (8, n_nodes))
    ov = rng.uniform(0, 1, 8)
    ici = rng.uniform(0, 1e-2, n_nodes)
    return {
        "rx_power_matrix": (x, y, pt, 6.0, 5.9, 2000.0, shadow),
        "shadowing_step": (shadow, delta, normals, 3.0, 25.0),
        "sense_grid": (tx, slot, lo, 2, p_mw, 200, 5),
        "slot_sinr": (sig, 1e-12, interf, ov, ici),
    }


def bench_kernels(n_nodes: int, repeat: int) -> None:
    print(f"kernels, {n_nodes} nodes, best of {repeat} (ms)")
    print(f"{'kernel':18s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s}")
    for name, args in kernel_cases(n_nodes).items():
        fast = getattr(kernels, f"{name}_numba")
        slow = getattr(kernels, f"{name}_numpy")
        fast(*args)  # jit compile outside the timing
        t_np = min(timeit.repeat(lambda: slow(*args), number=1, repeat=repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: fast(*args), number=1, repeat=repeat)) * 1e3
        print(f"{name:18s} {t_np:10.3f} {t_nb:10.3f} {t_np / t_nb:8.2f}")


def bench_engine(rho: float, duration: float) -> None:
    print(f"\none replication, rho={rho:g} veh/km, {duration:g} s simulated")
    code = ENGINE_SNIPPET.format(rho=rho, duration=duration)
    for disable in ("0", "1"):
        env = dict(os.environ, RURALV2X_DISABLE_NUMBA=disable)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        backend, seconds = out.stdout.split()
        print(f"{backend:6s} {float(seconds):8.2f} s")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=201)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--rho", type=float, default=100.0)
    ap.add_argument("--duration", type=float, default=5.0)
    ap.add_argument("--skip-engine", action="store_true")
    args = ap.parse_args()
    bench_kernels(args.nodes, args.repeat)
    if not args.skip_engine:
        bench_engine(args.rho, args.duration)


if __name__ == "__main__":
    main()
