"""Compare the compiled and pure-numpy kernels on 640x480 inputs.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Also times a full fit in a subprocess with POTHOLEDT_DISABLE_NUMBA=1 so the
fallback path is measured end to end.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from potholedt import kernels
from potholedt.synth import draw_scene, generate

FIT_SNIPPET = """
import time
from potholedt.synth import draw_scene, generate
from potholedt.transform import fit_and_transform
img = generate(draw_scene(3, noise_sigma=0.2, invalid_fraction=0.05)).image
fit_and_transform(img)
t = time.perf_counter()
for _ in range({n}):
    fit_and_transform(img)
print((time.perf_counter() - t) / {n} * 1e3)
"""


def best_ms(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat)) * 1e3


def fit_ms(disable, n):
    env = dict(os.environ, POTHOLEDT_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", FIT_SNIPPET.format(n=n)], env=env,
                         capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if kernels.residual_ss_numba is None:
        sys.exit("numba is disabled; unset POTHOLEDT_DISABLE_NUMBA to compare")

    scene = generate(draw_scene(3, noise_sigma=0.2, invalid_fraction=0.05))
    vals = np.ascontiguousarray(scene.image.values)
    valid = scene.image.valid
    g = vals[valid]
    vs, us = np.nonzero(valid)
    gc, uc, vc = g - g.mean(), us - us.mean(), vs - vs.mean()
    cols = int(np.nanmax(vals)) + 1
    mask = np.ascontiguousarray(scene.mask | (np.random.default_rng(0).random(vals.shape) < 0.02))

    cases = [
        ("v-disparity", lambda: kernels.vdisp_counts_numba(vals, 1.0, cols),
         lambda: kernels.vdisp_counts_numpy(vals, 1.0, cols)),
        ("8-conn labels", lambda: kernels.label_8conn_numba(mask),
         lambda: kernels.label_8conn_numpy(mask)),
        ("residual sum", lambda: kernels.residual_ss_numba(gc, uc, vc, 0.9, 0.1, 0.2),
         lambda: kernels.residual_ss_numpy(gc, uc, vc, 0.9, 0.1, 0.2)),
    ]
    print(f"{'kernel':<16}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}")
    for name, fast, slow in cases:
        fast()  # compile
        a, b = best_ms(fast, args.repeat), best_ms(slow, args.repeat)
        print(f"{name:<16}{a:>10.3f}{b:>10.3f}{b / a:>8.1f}x")
    a, b = fit_ms(False, 10), fit_ms(True, 10)
    print(f"{'full fit':<16}{a:>10.1f}{b:>10.1f}{b / a:>8.1f}x")


if __name__ == "__main__":
    main()
