"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Reports the best-of-N wall time per call for the MLP training loop (one
short run per architecture) and the Savitzky-Golay convolution, plus the
largest absolute difference between the two backends' outputs.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from specal import mlp
from specal.kernels import backend_module
from specal.preprocess import SavGolParams, savgol_coefficients


def best_time(fn, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def train_case(hidden, n=460, p=331, nv=130, epochs=200, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    t = X[:, :5].sum(axis=1) / 5
    Xv = rng.standard_normal((nv, p))
    tv = Xv[:, :5].sum(axis=1) / 5
    W, b = mlp.init_weights(mlp.MlpArchitecture(hidden).layer_sizes(p), np.random.default_rng(seed))
    # patience above the epoch budget so every call runs the same number of epochs
    return (X, t, Xv, tv, W, b, 0.1, 0.999, epochs, epochs + 1, 1e-6)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=200)
    args = ap.parse_args(argv)

    try:
        cy = backend_module("cython")
    except ImportError:
        print("compiled extension not built; run `pip install -e . --no-build-isolation` first")
        return 1
    py = backend_module("python")

    print(f"{'kernel':<28}{'python ms':>12}{'cython ms':>12}{'speedup':>10}{'max |diff|':>14}")
    for hidden in ((), (10,), (20, 10), (80,)):
        case = train_case(hidden, epochs=args.epochs)
        tp = best_time(lambda: py.train_full_batch(*case), args.repeat)
        tc = best_time(lambda: cy.train_full_batch(*case), args.repeat)
        rp, rc = py.train_full_batch(*case), cy.train_full_batch(*case)
        diff = max(float(np.max(np.abs(a - b))) for a, b in zip(rp[0] + rp[1], rc[0] + rc[1]))
        name = f"train [{','.join(map(str, hidden)) or 'linear'}] x{args.epochs}"
        print(f"{name:<28}{tp * 1e3:>12.2f}{tc * 1e3:>12.2f}{tp / tc:>10.2f}{diff:>14.2e}")

    X = np.random.default_rng(1).random((660, 331))
    for w, po, d in ((5, 2, 2), (41, 2, 1), (101, 5, 3)):
        c = savgol_coefficients(SavGolParams(w, po, d))
        tp = best_time(lambda: py.savgol_valid(X, c), args.repeat)
        tc = best_time(lambda: cy.savgol_valid(X, c), args.repeat)
        diff = float(np.max(np.abs(py.savgol_valid(X, c) - cy.savgol_valid(X, c))))
        print(f"{f'savgol {w},{po},{d} (660x331)':<28}{tp * 1e3:>12.2f}{tc * 1e3:>12.2f}{tp / tc:>10.2f}{diff:>14.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
