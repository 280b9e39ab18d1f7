"""Compare the numba kernels against the pure-numpy fallback.

Kernel microbenchmarks run both implementations in-process; the optional
end-to-end mode re-launches a short pre-training run in subprocesses with
HNCL_BACKEND set, since the backend is fixed at import time.

Usage:
    python benchmarks/bench_backends.py [--e2e] [--repeats N]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from hncl import _kernels_numpy
from hncl.numcore import make_rng

try:
    from hncl import _kernels_numba
except ImportError:
    _kernels_numba = None

SHAPES = [
    # (batch, time, cin, cout, kernel, stride)
    (64, 64, 6, 16, 5, 1),
    (64, 60, 16, 32, 5, 2),
    (128, 128, 9, 32, 7, 1),
    (256, 64, 16, 64, 5, 2),
]

E2E_SNIPPET = """
import time
import numpy as np
from dataclasses import replace
from hncl.backend import active_backend
from hncl.data import SynthConfig, generate_synthetic, make_split
from hncl.encoders import EncoderConfig
from hncl.augment import AugmentSpec, AugmentStep
from hncl.train import PretrainConfig, HnlSettings, pretrain

ds = generate_synthetic(SynthConfig(num_classes=6, samples_per_class=30, time_len=64,
                                    channels=(6, 9), noise_sigma=1.0, seed=0))
split = make_split(ds, "cross_subject_odd_even")
enc = lambda c: EncoderConfig(input_channels=c, conv_layers=((16, 5, 1), (32, 5, 2)),
                              embedding_dim=32, projection_dim=16)
aug = AugmentSpec(pipeline=(AugmentStep("jitter", 0.8, {"sigma": 0.1}),))
cfg = PretrainConfig(method="cmc_hnl",
                     encoder_configs={"inertial": enc(6), "skeleton": enc(9)},
                     augment_specs={"inertial": aug, "skeleton": aug},
                     batch_size=64, epochs=1, temperature=0.1,
                     hnl=HnlSettings(beta=1.0, tau_plus=0.1), seed=0)
pretrain(cfg, ds, split)  # warm-up (includes any JIT compilation)
start = time.perf_counter()
pretrain(replace(cfg, epochs=5), ds, split)
print(f"{active_backend()}: 5 pretrain epochs in {time.perf_counter() - start:.2f}s")
"""


def bench_kernels(repeats: int) -> None:
    impls = {"numpy": _kernels_numpy}
    if _kernels_numba is not None:
        impls["numba"] = _kernels_numba
    else:
        print("numba unavailable; benchmarking the numpy path only")

    header = f"{'shape (B,T,Cin,Cout,K,s)':<28} {'op':<9}" + "".join(
        f"{name:>12}" for name in impls
    )
    print(header)
    print("-" * len(header))
    for shape in SHAPES:
        bsz, t, cin, cout, k, stride = shape
        rng = make_rng(0, *shape)
        x = rng.normal(size=(bsz, t, cin))
        w = rng.normal(size=(cout, cin, k))
        b = rng.normal(size=cout)
        grad = None
        rows = {"forward": {}, "backward": {}}
        for name, impl in impls.items():
            out = impl.conv1d_forward(x, w, b, stride)  # warm-up / JIT
            if grad is None:
                grad = rng.normal(size=out.shape)
            impl.conv1d_backward(x, w, grad, stride)
            start = time.perf_counter()
            for _ in range(repeats):
                impl.conv1d_forward(x, w, b, stride)
            rows["forward"][name] = (time.perf_counter() - start) / repeats
            start = time.perf_counter()
            for _ in range(repeats):
                impl.conv1d_backward(x, w, grad, stride)
            rows["backward"][name] = (time.perf_counter() - start) / repeats
        for op, times in rows.items():
            cells = "".join(f"{times[name] * 1e3:>10.2f}ms" for name in impls)
            print(f"{str(shape):<28} {op:<9}{cells}")

    if _kernels_numba is not None:
        rng = make_rng(1)
        x = rng.normal(size=(16, 40, 4))
        w = rng.normal(size=(8, 4, 5))
        b = rng.normal(size=8)
        a = _kernels_numpy.conv1d_forward(x, w, b, 1)
        c = _kernels_numba.conv1d_forward(x, w, b, 1)
        print(f"\nmax |numpy - numba| on a check case: {np.max(np.abs(a - c)):.3e}")


def bench_e2e() -> None:
    print("\nend-to-end pre-training (separate processes):")
    for backend in ("numpy", "numba"):
        env = dict(os.environ, HNCL_BACKEND=backend)
        proc = subprocess.run(
            [sys.executable, "-c", E2E_SNIPPET], env=env, capture_output=True, text=True
        )
        if proc.returncode != 0:
            print(f"{backend}: failed\n{proc.stderr}")
        else:
            print(proc.stdout.strip())


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20)
    parser.add_argument("--e2e", action="store_true", help="also time a short training run per backend")
    args = parser.parse_args()
    bench_kernels(args.repeats)
    if args.e2e:
        bench_e2e()


if __name__ == "__main__":
    main()
