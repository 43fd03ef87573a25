"""Compare the compiled and numpy kernel backends on tomography-sized inputs.

    python3 benchmarks/bench_kernels.py [--repeat 20]
"""

import argparse
import timeit

import numpy as np

from ionnet import _pykernels, proc, qcore, tomo
from ionnet.device import ReadoutErrorModel

try:
    from ionnet import _ckernels
except ImportError:
    _ckernels = None


def workloads():
    rng = np.random.default_rng(0)
    out = {}
    ro = [ReadoutErrorModel(0.01, 0.01)] * 4
    settings = [tuple(s) for s in np.ndindex(*(5,) * 4)]
    eff = tomo._povm_stack(settings, ro).reshape(-1, 16, 16)
    rho = qcore.random_density_matrix(4, rng).data
    out["state 4q"] = (eff, rho)
    data = proc.simulate_process_data(qcore.unitary_channel(np.eye(4)), ro[:2], rng)
    e2, _ = data.effects_and_counts()
    out["process 2q"] = (e2.reshape(-1, 16, 16), rho)
    return out


def bench(backend, effects, rho, repeat):
    effects = np.ascontiguousarray(effects)
    w = np.linspace(0.1, 1.0, len(effects))
    counts = np.round(w * 100)
    t_p = min(timeit.repeat(lambda: backend.effect_probabilities(effects, rho), number=1, repeat=repeat))
    t_w = min(timeit.repeat(lambda: backend.weighted_effect_sum(effects, w), number=1, repeat=repeat))
    p = np.clip(backend.effect_probabilities(effects, rho), 1e-12, None)
    t_l = min(timeit.repeat(lambda: backend.log_likelihood(counts, p, 1e-12), number=1, repeat=repeat))
    return t_p, t_w, t_l


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    backends = {"python": _pykernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    print(f"{'workload':<12}{'backend':<8}{'probs ms':>10}{'R-sum ms':>10}{'loglik ms':>10}")
    for name, (eff, rho) in workloads().items():
        ref = None
        for bname, mod in backends.items():
            times = bench(mod, eff, rho, args.repeat)
            print(f"{name:<12}{bname:<8}" + "".join(f"{1e3 * t:>10.3f}" for t in times))
            probs = mod.effect_probabilities(np.ascontiguousarray(eff), rho)
            if ref is None:
                ref = probs
            elif not np.allclose(ref, probs, atol=1e-12):
                raise SystemExit(f"backends disagree on {name}")


if __name__ == "__main__":
    main()
