"""Time the compiled kernels against the pure-Python fallback.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``. Each kernel is
called on identical inputs per backend; the best of ``repeat`` runs is
reported along with the speed-up of the compiled module.
"""
import argparse
import sys
import timeit

import numpy as np

from neuroline._backend import available_backends


def _cases():
    rng = np.random.default_rng(0)

    ranks2 = np.arange(2, 34, 2, dtype=np.int64)

    sizes = (8, 16, 16, 1)
    ws = [np.ascontiguousarray(rng.normal(0, 0.3, (a, b))) for a, b in zip(sizes[:-1], sizes[1:])]
    bs = [rng.normal(0, 0.1, b) for b in sizes[1:]]
    x = np.ascontiguousarray(rng.normal(0, 1, (64, 8)))
    dout = np.ascontiguousarray(rng.normal(0, 1, (64, 1)))

    theta, grad, m, v = (rng.normal(0, 1, 433) for _ in range(4))
    v = np.abs(v)

    dv = rng.uniform(-0.2, 0.2, 4800)

    def mwu(k):
        return lambda: k.mwu_tail_counts(ranks2, 8, 150)

    def forward(k):
        return lambda: k.mlp_forward(ws, bs, x, 0.2)

    def backward(k):
        acts, pres = k.mlp_forward(ws, bs, x, 0.2)
        return lambda: k.mlp_backward(ws, acts, pres, dout, 0.2, True)

    def adam(k):
        state = [theta.copy(), m.copy(), v.copy()]
        return lambda: k.adam_step(state[0], grad, state[1], state[2], 1e-3, 0.5, 0.999, 1e-8, 10)

    def rollout(k):
        return lambda: k.damped_rollout(0.0, 0.0, dv, 0.9375, 4.17, 0.125)

    return [
        ("mwu_tail_counts n=16, n1=8", mwu),
        ("mlp_forward batch 64", forward),
        ("mlp_backward batch 64", backward),
        ("adam_step 433 params", adam),
        ("damped_rollout 4800 steps", rollout),
    ]


def _best(fn, repeat):
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    backends = available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; only the Python fallback is available", file=sys.stderr)
    names = sorted(backends, reverse=True)
    header = f"{'kernel':<30}" + "".join(f"{n + ' (us)':>16}" for n in names)
    if len(names) > 1:
        header += f"{'speed-up':>12}"
    print(header)
    for label, make in _cases():
        times = {n: _best(make(backends[n]), args.repeat) for n in names}
        row = f"{label:<30}" + "".join(f"{times[n] * 1e6:>16.2f}" for n in names)
        if len(names) > 1:
            row += f"{times['python'] / times['cython']:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
