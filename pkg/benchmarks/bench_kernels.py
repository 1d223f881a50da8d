"""Time each hot kernel on its numba path and its numpy twin.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

The first numba call is excluded (compilation); both paths are checked for
identical output before timing.
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from anonlab import _kernels as K


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases(rng):
    bases = rng.integers(0, 2**63, 5, dtype=np.uint64)
    entry = rng.poisson(3, (40, 600)).astype(np.float64)
    exit_ = np.roll(entry, 1, axis=1) + rng.normal(0, 0.3, entry.shape)
    online = rng.random((40, 1000)) < 0.8
    patterns = rng.random((100, 1000)) < 0.9
    n = 1 << 20
    return {
        "prg_words (1M words)": (lambda: K.nb_prg_words(np.uint64(bases[0]), n),
                                 lambda: K.np_prg_words(int(bases[0]), n)),
        "xor_prg_words (5 x 1M)": (lambda: K.nb_xor_prg_words(bases, n),
                                   lambda: K.np_xor_prg_words(bases, n)),
        "lagged_pearson (40x40x600, +-5)": (lambda: K.nb_lagged_pearson(entry, exit_, 5, 8),
                                            lambda: K.np_lagged_pearson(entry, exit_, 5, 8)),
        "cumulative_candidates (40x1000)": (lambda: K.nb_cumulative_candidates(online),
                                            lambda: K.np_cumulative_candidates(online)),
        "buddy_count x1000 owners": (lambda: [K.nb_buddy_count(patterns, o) for o in range(1000)],
                                     lambda: [K.np_buddy_count(patterns, o) for o in range(1000)]),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None)
    args = ap.parse_args(argv)
    if not K.use_jit():
        raise SystemExit("numba path disabled (ANONLAB_DISABLE_JIT set or numba missing)")
    rows = []
    for name, (nb, npy) in cases(np.random.default_rng(0)).items():
        a, b = nb(), npy()  # warm-up + parity
        if isinstance(a, tuple):
            assert np.array_equal(a[1], b[1]) and np.allclose(a[0], b[0], equal_nan=True), name
        else:
            assert np.array_equal(np.asarray(a), np.asarray(b)), name
        t_nb, t_np = _best(nb, args.repeat), _best(npy, args.repeat)
        rows.append({"kernel": name, "numba_s": t_nb, "numpy_s": t_np, "speedup": t_np / t_nb})
        print("%-36s numba %9.4f s   numpy %9.4f s   x%.1f" % (name, t_nb, t_np, t_np / t_nb))
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
