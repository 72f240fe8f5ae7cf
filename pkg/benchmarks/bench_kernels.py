"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from prnufuse import kernels
from prnufuse.mcd import draw_starts, support_size


def cases(rng):
    img = rng.normal(128, 30, (258, 258))
    res = rng.normal(size=(256, 256))
    x = rng.normal(size=(400, 2))
    h = support_size(len(x))
    starts = draw_starts(len(x), 500, rng)
    return {
        "local_wiener 256x256": lambda m: m.local_wiener(img, 3, 9.0),
        "phase_fold 256x256 P=8": lambda m: m.phase_fold(res, 8),
        "mcd_search n=400, 500 starts": lambda m: m.mcd_search(x, h, starts, 100),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    try:
        backends = {"cython": kernels.get_backend("cython")}
    except ImportError:
        backends = {}
        print("compiled extension not built; timing the fallback only")
    backends["python"] = kernels.get_backend("python")
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s}" + "".join(f"{b:>12s}" for b in backends) + "   speedup")
    for name, fn in cases(rng).items():
        secs = {b: min(timeit.repeat(lambda: fn(m), number=1, repeat=args.repeat))
                for b, m in backends.items()}
        row = "".join(f"{secs[b] * 1e3:10.2f}ms" for b in backends)
        speed = f"{secs['python'] / secs['cython']:8.1f}x" if "cython" in secs else ""
        print(f"{name:32s}{row}{speed}")


if __name__ == "__main__":
    main()
