"""Compare the compiled and numpy kernel backends on realistic workloads.

    python3 benchmarks/bench_kernels.py [--repeat N]

Sizes match a 160 x 120 traversal: the Gabor bank on the 64 x 512 polar
iris, polar resampling, the Hamming shift search, the harmonic texture and
one full forward/backward pass of the procedural decoder plus identity loss.
"""
import argparse
import time

import numpy as np

from iristraverse import _kernels
from iristraverse import autodiff as ad
from iristraverse.attributes import AttributeSpec, CompositeLoss
from iristraverse.decoders import LatentCode, ProceduralDecoder


def _timeit(fn, repeat):
    fn()  # warm-up
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def workloads():
    rng = np.random.default_rng(0)
    xp = rng.standard_normal((1, 78, 526))
    k = rng.standard_normal((6, 1, 15, 15))
    g = rng.standard_normal((6, 64, 512))
    img = rng.random((120, 160))
    n = 64 * 512
    cx, cy = rng.uniform(0, 159, n), rng.uniform(0, 119, n)
    gs = rng.random(n)
    a = (rng.random((6, 64, 512)) > 0.5).astype(np.uint8)
    b = (rng.random((6, 64, 512)) > 0.5).astype(np.uint8)
    valid = np.ones_like(a)
    valid[:, :7] = valid[:, -7:] = 0
    shifts = np.arange(-16, 17)
    K, N = 12, 160 * 120
    theta, rho = rng.uniform(-np.pi, np.pi, N), rng.random(N)
    u, v = rng.standard_normal(K), rng.standard_normal(K)
    ang, rad, ph = rng.integers(4, 25, K).astype(float), rng.uniform(3, 19, K), rng.uniform(0, 6.3, K)

    dec = ProceduralDecoder(120, 160, 32, seed=0)
    z0 = LatentCode.sample(32, 0)
    x0 = dec.generate(z0).detach()
    loss = CompositeLoss([AttributeSpec("pupil_radius", 20.0), AttributeSpec("identity_hold")], x0)

    def traversal_step():
        zt = ad.Tensor(z0.values, requires_grad=True)
        ad.backward(loss(dec.generate(zt)))

    kern = _kernels
    return {
        "conv2d forward (6x15x15 on 78x526)": lambda: kern.conv2d_forward(xp, k, 1),
        "conv2d grad input": lambda: kern.conv2d_grad_input(g, k, 1, 78, 526),
        "conv2d grad kernel": lambda: kern.conv2d_grad_kernel(g, xp, 15, 15, 1),
        "bilinear fwd+bwd (32768 samples)": lambda: (kern.bilinear_forward(img, cx, cy),
                                                     kern.bilinear_backward(img, cx, cy, gs)),
        "hamming shift search (33 shifts)": lambda: kern.shifted_disagreement(a, b, valid, valid, shifts),
        "harmonic texture fwd (12 x 19200)": lambda: kern.harmonic_forward(theta, rho, u, v, ang, rad, ph),
        "traversal step (decoder + identity loss)": traversal_step,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = _kernels.available_backends()
    jobs = workloads()
    results = {}
    for name in backends:
        previous = _kernels.use_backend(name)
        try:
            results[name] = {label: _timeit(fn, args.repeat) for label, fn in jobs.items()}
        finally:
            _kernels.use_backend(previous)
    width = max(map(len, jobs))
    header = f"{'workload':<{width}}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for label in jobs:
        line = f"{label:<{width}}" + "".join(f"{results[b][label] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) == 2:
            line += f"{results['python'][label] / results['compiled'][label]:>9.1f}x"
        print(line)
    if len(backends) == 1:
        print("compiled kernels not built; only the numpy backend was timed")


if __name__ == "__main__":
    main()
