"""Benchmark the numba residual kernels against the numpy fallback.

Times three levels on a realistic five-depth calibration set (125
samples): the raw kernels, one numeric-Jacobian evaluation, and the full
mapper fits with the backend swapped in.  Run as::

    python3 benchmarks/bench_backends.py [--repeats N]
"""

import argparse
import time

import numpy as np

import gaze3d._kernels as kernels
from gaze3d import (
    ResidualProblem,
    default_bundle,
    fit_mapper,
    numeric_jacobian,
    poly_features,
)
from gaze3d._kernels import NUMBA_AVAILABLE


def best_of(fn, repeats, inner):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        best = min(best, (time.perf_counter() - t0) / inner)
    return best


def build_inputs():
    bundle = default_bundle("display")
    samples = [s for d in bundle.depths() for s in bundle.calibration[d]]
    res = np.asarray(bundle.rig.eye_camera.resolution)
    feats = np.array([poly_features((s.pupil_px - res / 2) / (res / 2))
                      for s in samples])
    targets = np.array([s.target for s in samples])
    poses = np.array([s.pupil_pose for s in samples])

    model_2d3d = fit_mapper("2d3d", samples)
    params_2d3d = np.concatenate((model_2d3d.weights.ravel(),
                                  model_2d3d.center))
    model_3d3d = fit_mapper("3d3d", samples)
    params_3d3d = np.concatenate((model_3d3d.angles, model_3d3d.center))
    return samples, feats, targets, poses, params_2d3d, params_3d3d


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repeats; the best is kept")
    args = parser.parse_args()

    samples, feats, targets, poses, p23, p33 = build_inputs()
    print(f"inputs: {len(samples)} calibration samples, "
          f"numba available: {NUMBA_AVAILABLE}")

    impls = {"numpy": (kernels.residuals_2d3d_numpy,
                       kernels.residuals_3d3d_numpy)}
    if NUMBA_AVAILABLE:
        kernels.residuals_2d3d_numba(p23, feats, targets)   # JIT warmup
        kernels.residuals_3d3d_numba(p33, poses, targets)
        impls["numba"] = (kernels.residuals_2d3d_numba,
                          kernels.residuals_3d3d_numba)

    rows = []
    for backend, (r23, r33) in impls.items():
        rows.append((f"kernel 2d3d ({backend})",
                     best_of(lambda: r23(p23, feats, targets),
                             args.repeats, 2000)))
        rows.append((f"kernel 3d3d ({backend})",
                     best_of(lambda: r33(p33, poses, targets),
                             args.repeats, 2000)))
        prob23 = ResidualProblem(dim=17,
                                 residual=lambda p: r23(p, feats, targets))
        prob33 = ResidualProblem(dim=6,
                                 residual=lambda p: r33(p, poses, targets))
        rows.append((f"jacobian 2d3d ({backend})",
                     best_of(lambda: numeric_jacobian(prob23, p23),
                             args.repeats, 50)))
        rows.append((f"jacobian 3d3d ({backend})",
                     best_of(lambda: numeric_jacobian(prob33, p33),
                             args.repeats, 200)))

        saved = kernels.residuals_2d3d, kernels.residuals_3d3d
        kernels.residuals_2d3d, kernels.residuals_3d3d = r23, r33
        try:
            rows.append((f"fit 2d3d ({backend})",
                         best_of(lambda: fit_mapper("2d3d", samples),
                                 max(2, args.repeats // 2), 1)))
            rows.append((f"fit 3d3d ({backend})",
                         best_of(lambda: fit_mapper("3d3d", samples),
                                 max(2, args.repeats // 2), 1)))
        finally:
            kernels.residuals_2d3d, kernels.residuals_3d3d = saved

    width = max(len(name) for name, _ in rows)
    print(f"\n{'case'.ljust(width)}      time")
    for name, seconds in rows:
        print(f"{name.ljust(width)}  {seconds * 1e6:9.1f} us")

    if NUMBA_AVAILABLE:
        print("\nspeedup (numpy time / numba time):")
        timings = dict(rows)
        for case in ("kernel 2d3d", "kernel 3d3d", "jacobian 2d3d",
                     "jacobian 3d3d", "fit 2d3d", "fit 3d3d"):
            ratio = timings[f"{case} (numpy)"] / timings[f"{case} (numba)"]
            print(f"  {case}: {ratio:.1f}x")


if __name__ == "__main__":
    main()
