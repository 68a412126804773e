#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Usage:
    python benchmarks/bench_kernels.py [--points N] [--zones Z] [--repeat R]

Runs the zone-containment and rigid-transform kernels on synthetic
workloads sized like a long field session, then times one full
simulate -> count pipeline pass for context. The numpy fallback is
always timed; the numba path is skipped (with a note) when numba is
unavailable or LIDARTMC_DISABLE_NUMBA is set.
"""

import argparse
import time

import numpy as np

from lidartmc import _kernels


def timeit(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_containment(n_points, n_zones, repeat):
    rng = np.random.default_rng(1)
    pn = rng.uniform(-60, 60, n_points)
    pe = rng.uniform(-60, 60, n_points)
    zn = rng.uniform(-30, 30, n_zones)
    ze = rng.uniform(-30, 30, n_zones)
    yaw = rng.uniform(-np.pi, np.pi, n_zones)
    zcos, zsin = np.cos(yaw), np.sin(yaw)
    zhl = rng.uniform(2, 8, n_zones)
    zhw = rng.uniform(1, 4, n_zones)
    args = (pn, pe, zn, ze, zcos, zsin, zhl, zhw)

    rows = []
    t_np = timeit(lambda: _kernels.points_in_zones_numpy(*args), repeat)
    rows.append(("containment", "numpy", t_np))
    if _kernels.NUMBA_ENABLED:
        _kernels._points_in_zones_nb(*args)  # compile outside the timer
        t_nb = timeit(lambda: _kernels._points_in_zones_nb(*args), repeat)
        rows.append(("containment", "numba", t_nb))
        assert np.array_equal(
            _kernels._points_in_zones_nb(*args), _kernels.points_in_zones_numpy(*args)
        )
    return rows


def bench_transform(n_points, repeat):
    rng = np.random.default_rng(2)
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    t = rng.uniform(-10, 10, 3)
    pts = rng.uniform(-100, 100, (n_points, 3))

    rows = []
    t_np = timeit(lambda: _kernels.apply_rigid_numpy(pts, q, t), repeat)
    rows.append(("rigid transform", "numpy", t_np))
    if _kernels.NUMBA_ENABLED:
        _kernels._apply_rigid_nb(pts, q, t)
        t_nb = timeit(lambda: _kernels._apply_rigid_nb(pts, q, t), repeat)
        rows.append(("rigid transform", "numba", t_nb))
    return rows


def bench_pipeline():
    from lidartmc.counting import count_session
    from lidartmc.ingest import frames_to_ned, merge_streams
    from lidartmc.reference import build_reference_config
    from lidartmc.simgen import SimConfig, random_script, simulate

    cfg = build_reference_config()
    rng = np.random.default_rng(3)
    sim = SimConfig(seed=4)
    script = random_script(cfg, rng, 50, sim)
    t0 = time.perf_counter()
    session = simulate(script, cfg, sim)
    merged = merge_streams(list(session.frames_by_sensor.values()))
    ned = frames_to_ned(merged, session.registry)
    events, _ = count_session(ned, cfg)
    dt = time.perf_counter() - t0
    n_det = sum(len(f.detections) for f in merged.frames)
    print(
        f"\npipeline: {len(script)} vehicles, {n_det} detections, "
        f"{len(events)} events in {dt * 1000:.1f} ms"
    )


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--points", type=int, default=500_000)
    parser.add_argument("--zones", type=int, default=16)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    print(f"numba path: {'enabled' if _kernels.NUMBA_ENABLED else 'DISABLED (numpy only)'}")
    print(f"workload: {args.points} points x {args.zones} zones, best of {args.repeat}\n")
    rows = bench_containment(args.points, args.zones, args.repeat)
    rows += bench_transform(args.points, args.repeat)

    print(f"{'kernel':<18} {'path':<7} {'best (ms)':>10} {'speedup':>8}")
    baselines = {}
    for kernel, path, t in rows:
        if path == "numpy":
            baselines[kernel] = t
        speedup = baselines[kernel] / t if t else float("inf")
        print(f"{kernel:<18} {path:<7} {t * 1000:>10.2f} {speedup:>7.2f}x")

    bench_pipeline()


if __name__ == "__main__":
    main()
