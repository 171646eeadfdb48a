"""Timing comparison of the compiled and pure-Python integrator kernels.

Run with: python3 benchmarks/bench_integrate.py

Covers the two hot paths: a single oscillator solve (as used by the
simulate command) and a pipeline-style batch of token fits, where
every candidate threshold triggers a resimulation of the fitted model.
"""

import math
import time

from gesture_sindy.features import polynomial_library
from gesture_sindy.integrate import available_backends, integrate
from gesture_sindy.oscillators import ActivationSchedule, OscillatorParams
from gesture_sindy.pipeline import CorpusSpec, fit_token, generate_synthetic_corpus


def timeit(fn, repeat):
    fn()  # warm up
    start = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - start) / repeat


def bench_solve(backend, repeat=200):
    params = OscillatorParams(k=2000.0, b=2 * math.sqrt(2000.0), T=0.2, x0=1.0)
    act = ActivationSchedule(kind="ramped", ta=0.02, tb=0.05, tc=0.2, td=0.24)
    return timeit(
        lambda: integrate("linear", params, (0.0, 0.25), 0.001,
                          activation=act, backend=backend),
        repeat,
    )


def bench_fit_batch(backend, repeat=3):
    spec = CorpusSpec(n_linear=16, n_cubic=8, seed=0)
    tokens, _ = generate_synthetic_corpus(spec, backend=backend)
    library = polynomial_library(1, arity=2)

    def run():
        for token in tokens:
            fit_token(token, library, order=2, backend=backend)

    return timeit(run, repeat)


def main():
    backends = available_backends()
    print(f"available backends: {', '.join(backends)}")
    results = {}
    for backend in backends:
        solve_s = bench_solve(backend)
        batch_s = bench_fit_batch(backend)
        results[backend] = (solve_s, batch_s)
        print(f"{backend:>9}: single solve {solve_s * 1e3:8.3f} ms   "
              f"24-token fit batch {batch_s * 1e3:9.1f} ms")
    if "compiled" in results and "python" in results:
        s = results["python"][0] / results["compiled"][0]
        b = results["python"][1] / results["compiled"][1]
        print(f"speedup (python/compiled): solve {s:.1f}x, fit batch {b:.1f}x")


if __name__ == "__main__":
    main()
