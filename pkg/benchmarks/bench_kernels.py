"""Time the compiled kernels against the NumPy fallback.

    python benchmarks/bench_kernels.py [--sims 20000] [--k 50] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from credit_copula import kernels


def inputs(n_sims, k, seed=0):
    rng = np.random.default_rng(seed)
    n = 2 * k
    returns = rng.normal(0.0, 0.32, (n_sims, n))
    drift = np.full(n, (1e-3 - 0.5 * 0.02 ** 2) * 252)
    face = rng.uniform(0.6, 0.9, n)
    owner = np.repeat(np.arange(2, dtype=np.intp), k)
    frac = np.concatenate([face[:k] / face[:k].sum(), face[k:] / face[k:].sum()])
    u = rng.permutation(n_sims) / n_sims + 1.0 / n_sims
    v = rng.permutation(n_sims) / n_sims + 1.0 / n_sims
    return (returns, drift, face, owner, frac, 2), (u, v, 20)


def bench(backend, loss_args, bin_args, repeat):
    t_loss = min(timeit.repeat(lambda: backend.contract_portfolio_losses(*loss_args),
                               number=1, repeat=repeat))
    t_bin = min(timeit.repeat(lambda: backend.copula_bin_counts(*bin_args),
                              number=1, repeat=repeat))
    return t_loss, t_bin


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sims", type=int, default=20_000)
    ap.add_argument("--k", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    loss_args, bin_args = inputs(args.sims, args.k)
    backends = {"python": kernels.python_backend}
    if kernels.compiled_backend is not None:
        backends["cython"] = kernels.compiled_backend
        a = kernels.python_backend.contract_portfolio_losses(*loss_args)
        b = kernels.compiled_backend.contract_portfolio_losses(*loss_args)
        assert np.allclose(a, b, rtol=0, atol=1e-12), "backends disagree"
    else:
        print("compiled kernels not built; timing the fallback only")
    print(f"{args.sims} sims, 2 x {args.k} contracts, best of {args.repeat}")
    print(f"{'backend':<8} {'losses [ms]':>12} {'binning [ms]':>13}")
    times = {}
    for name, be in backends.items():
        times[name] = bench(be, loss_args, bin_args, args.repeat)
        print(f"{name:<8} {1e3 * times[name][0]:>12.2f} {1e3 * times[name][1]:>13.2f}")
    if len(times) == 2:
        (pl, pb), (cl, cb) = times["python"], times["cython"]
        print(f"speed-up: losses x{pl / cl:.1f}, binning x{pb / cb:.1f}")


if __name__ == "__main__":
    main()
