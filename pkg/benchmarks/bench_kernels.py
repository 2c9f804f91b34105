"""Time the compiled and pure-Python beamforming kernels on one imaging window.

Usage::

    python3 benchmarks/bench_kernels.py [--frames 300] [--repeat 5]

Prints the best-of-N time per backend and checks the two agree.
"""

import argparse
import time

import numpy as np

from multiradar.imaging import ImageGrid, _pixel_sampling, steering_weights, taylor_window
from multiradar.kernels import available_backends
from multiradar.scene import BreathingTarget, RadarPlacement, SceneConfig, synthesize


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--frames", type=int, default=300)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    radar = RadarPlacement(1)
    scene = SceneConfig([BreathingTarget(1, (0.5, 2.5))], [radar], duration=args.frames * radar.slow_dt)
    cube = synthesize(scene)[0]
    grid = ImageGrid()
    k0, frac, phi = _pixel_sampling(cube, grid)
    coef = np.ascontiguousarray(steering_weights(cube.element_x, cube.wavelength, phi,
                                                 taylor_window(cube.n_elements)))
    samples = np.ascontiguousarray(cube.samples)
    print(f"{cube.n_frames} frames x {k0.size} pixels x {cube.n_elements} elements")

    results = {}
    for name, kernel in available_backends().items():
        out = np.empty((cube.n_frames, k0.size), dtype=np.complex128)
        best = np.inf
        for _ in range(args.repeat):
            t = time.perf_counter()
            kernel(samples, k0, frac, coef, out)
            best = min(best, time.perf_counter() - t)
        results[name] = out.copy()
        print(f"{name:>9}: {best * 1e3:8.1f} ms")
    if len(results) == 2:
        diff = np.max(np.abs(results["compiled"] - results["python"]))
        print(f"max |compiled - python| = {diff:.3g}")
    else:
        print("compiled backend not built; only the fallback was timed")


if __name__ == "__main__":
    main()
