"""Compare the compiled kernels against the numpy fallback.

Run:  python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from gfi._kernels import numpy_backend

try:
    from gfi._kernels import _native as native_backend
except ImportError:
    native_backend = None

CONV_CASES = [
    ("conv 16x(8,32,32) k3", (16, 8, 32, 32), (16, 8, 3, 3), (1, 1), (1, 1)),
    ("conv 16x(16,16,16) k3", (16, 16, 16, 16), (32, 16, 3, 3), (1, 1),
     (1, 1)),
    ("conv 4x(5,1000,70) k(27,3) s(7,1)", (4, 5, 1000, 70), (8, 5, 27, 3),
     (7, 1), (0, 1)),
]


def timeit(fn, *args, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_conv(backend):
    rng = np.random.default_rng(0)
    rows = []
    for name, xs, ws, (sh, sw), (ph, pw) in CONV_CASES:
        x = rng.standard_normal(xs, dtype=np.float32)
        w = rng.standard_normal(ws, dtype=np.float32)
        kh, kw = ws[2:]
        y = backend.conv2d_fwd(x, w, sh, sw, ph, pw)
        rows.append((f"{name} fwd",
                     timeit(backend.conv2d_fwd, x, w, sh, sw, ph, pw)))
        rows.append((f"{name} bwd_x",
                     timeit(backend.conv2d_bwd_x, y, w, sh, sw, ph, pw,
                            xs[2], xs[3])))
        rows.append((f"{name} bwd_w",
                     timeit(backend.conv2d_bwd_w, y, x, sh, sw, ph, pw,
                            kh, kw)))
    return rows


def bench_wave(backend):
    rng = np.random.default_rng(1)
    shape = (94, 114)
    pc = rng.standard_normal(shape)
    pp = rng.standard_normal(shape)
    coef = np.full(shape, 0.25)

    def run():
        a, b = pc, pp
        for _ in range(200):
            a, b = backend.wave_step(a, b, coef), a

    return [("wave 94x114 x200 steps", timeit(run))]


def main():
    backends = [("numpy", numpy_backend)]
    if native_backend is not None:
        backends.append(("native", native_backend))
    else:
        print("compiled backend unavailable; benchmarking numpy only")
    results = {}
    for bname, backend in backends:
        for case, secs in bench_conv(backend) + bench_wave(backend):
            results.setdefault(case, {})[bname] = secs
    width = max(len(c) for c in results)
    names = [b for b, _ in backends]
    print(f"{'case':<{width}}  " + "  ".join(f"{n:>10}" for n in names)
          + ("     speedup" if len(names) == 2 else ""))
    for case, per in results.items():
        line = f"{case:<{width}}  " + "  ".join(
            f"{per[n] * 1e3:9.2f}ms" for n in names)
        if len(names) == 2:
            line += f"  {per['numpy'] / per['native']:9.2f}x"
        print(line)


if __name__ == "__main__":
    main()
