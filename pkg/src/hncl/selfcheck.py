"""Fast built-in verification: gradient checks, reduction identities,
analytic values, sampler statistics, and split protocol examples.

Run via ``hncl selfcheck``; each suite prints one ok/FAIL line. This is a
smoke screen for installations, not a replacement for the test suite.
"""

from __future__ import annotations

import math
import sys

import numpy as np

from .data import SynthConfig, generate_synthetic, make_split
from .encoders import (
    EncoderConfig,
    encoder_backward_batch,
    encoder_forward_batch,
    init_encoder_params,
    init_projection_params,
    projection_backward_batch,
    projection_forward_batch,
)
from .losses import (
    EmbeddingBatch,
    HnlParams,
    debiased_loss_bidirectional,
    hnl_delta,
    hnl_loss_bidirectional,
    info_nce_bidirectional,
    nt_xent_two_view,
)
from .numcore import (
    finite_diff_grad,
    l2_normalize_rows,
    make_rng,
    relative_error,
    stable_logsumexp,
)
from .sampling import hardness_weights, sample_qbeta


def _random_batch(rng, n, d):
    base = rng.normal(size=(n, d))
    return (
        l2_normalize_rows(base + 0.5 * rng.normal(size=(n, d))),
        l2_normalize_rows(base + 0.5 * rng.normal(size=(n, d))),
    )


def _grad_ok(loss_fn, z_s, z_i, rtol=1e-4, atol=1e-8):
    out = loss_fn(z_s, z_i)
    fd = finite_diff_grad(
        lambda p: loss_fn(p["z_s"], p["z_i"]).loss,
        {"z_s": z_s.copy(), "z_i": z_i.copy()},
    )
    for got, ref in ((out.grad_z_s, fd["z_s"]), (out.grad_z_i, fd["z_i"])):
        if relative_error(got, ref) >= rtol and float(np.linalg.norm(got - ref)) >= atol:
            return False
    return True


def check_numerics() -> list[str]:
    problems = []
    if abs(stable_logsumexp([0.0, 0.0]) - math.log(2.0)) > 1e-12:
        problems.append("logsumexp([0,0]) != log 2")
    if abs(stable_logsumexp([1000.0, 1000.0]) - (1000.0 + math.log(2.0))) > 1e-9:
        problems.append("logsumexp overflows at 1000")
    rows = l2_normalize_rows(make_rng(0).normal(size=(5, 4)))
    if np.max(np.abs(np.linalg.norm(rows, axis=1) - 1.0)) > 1e-10:
        problems.append("row normalization is off")
    return problems


def check_gradients(instances: int = 5) -> list[str]:
    problems = []
    rng = make_rng(101)
    for i in range(instances):
        n = int(rng.integers(2, 7))
        d = int(rng.integers(3, 10))
        z_s, z_i = _random_batch(rng, n, d)
        t = float(rng.uniform(0.2, 0.8))
        p = HnlParams(beta=float(rng.uniform(0, 2)), tau_plus=0.1, temperature=t,
                      num_negatives=n - 1)
        p2 = HnlParams(beta=p.beta, tau_plus=0.1, temperature=t, num_negatives=2 * n - 2)
        cases = {
            "info_nce": lambda a, b: info_nce_bidirectional(EmbeddingBatch(a, b), t, validate=False),
            "hnl": lambda a, b: hnl_loss_bidirectional(EmbeddingBatch(a, b), p, validate=False),
            "debiased": lambda a, b: debiased_loss_bidirectional(
                EmbeddingBatch(a, b), 0.1, t, validate=False
            ),
            "nt_xent": lambda a, b: nt_xent_two_view(a, b, t, validate=False),
            "nt_xent_hnl": lambda a, b: nt_xent_two_view(a, b, t, p2, validate=False),
        }
        for name, fn in cases.items():
            if not _grad_ok(fn, z_s, z_i):
                problems.append(f"{name} gradient mismatch on instance {i}")
    return problems


def check_identities() -> list[str]:
    problems = []
    rng = make_rng(102)
    for _ in range(5):
        n = int(rng.integers(2, 7))
        z_s, z_i = _random_batch(rng, n, 6)
        batch = EmbeddingBatch(z_s, z_i)
        t = float(rng.uniform(0.2, 1.0))
        p0 = HnlParams(beta=0.0, tau_plus=0.0, temperature=t, num_negatives=n - 1)
        if abs(hnl_loss_bidirectional(batch, p0).loss - info_nce_bidirectional(batch, t).loss) > 1e-10:
            problems.append("hnl(beta=0, tau=0) != info_nce")
        tau = float(rng.uniform(0.0, 0.2))
        p_tau = HnlParams(beta=0.0, tau_plus=tau, temperature=t, num_negatives=n - 1)
        a = debiased_loss_bidirectional(batch, tau, t)
        b = hnl_loss_bidirectional(batch, p_tau)
        if a.loss != b.loss or not np.array_equal(a.grad_z_s, b.grad_z_s):
            problems.append("debiased != hnl(beta=0) bitwise")
    p = HnlParams(beta=0.0, tau_plus=0.5, temperature=0.2, num_negatives=3)
    if hnl_delta(1.0, [-1.0, -1.0, -1.0], p) != 3.0 * math.exp(-5.0):
        problems.append("clamped delta is not exactly M e^{-1/t}")
    return problems


def check_analytic_values() -> list[str]:
    problems = []
    z = np.eye(2)
    got = info_nce_bidirectional(EmbeddingBatch(z, z), 1.0).loss
    if abs(got - 4.0 * math.log(1.0 + math.exp(-1.0))) > 1e-9:
        problems.append("aligned-orthogonal info_nce value is off")
    z_s, z_i = np.eye(6)[:3], np.eye(6)[3:]
    p = HnlParams(beta=0.0, tau_plus=0.0, temperature=1.0, num_negatives=2)
    got = hnl_loss_bidirectional(EmbeddingBatch(z_s, z_i), p).loss
    if abs(got - 6.0 * math.log(3.0)) > 1e-9:
        problems.append("zero-similarity hnl value is off")
    return problems


def check_sampler(draws: int = 100_000) -> list[str]:
    problems = []
    sims = np.array([0.8, 0.1, -0.4, 0.6])
    labels = np.ones(4, dtype=int)
    for beta in (0.0, 1.0, 4.0):
        rng = make_rng(103, int(beta * 10))
        counts = np.zeros(4)
        for _ in range(draws):
            counts[sample_qbeta(sims, labels, 0, beta, rng)] += 1
        probs = hardness_weights(sims, beta).weights
        tv = 0.5 * float(np.abs(counts / draws - probs).sum())
        if tv > 0.02:
            problems.append(f"sampler TV distance {tv:.4f} at beta={beta}")
    return problems


def check_splits() -> list[str]:
    problems = []
    ds = generate_synthetic(SynthConfig(num_classes=2, samples_per_class=40, time_len=16,
                                        channels=(3, 3), seed=9))
    split = make_split(ds, "cross_subject_odd_even")
    if set(np.unique(ds.subject_ids[split.train_indices])) != {1, 3, 5, 7}:
        problems.append("odd/even split is wrong")
    ds20 = generate_synthetic(SynthConfig(num_classes=2, samples_per_class=40, time_len=16,
                                          channels=(3, 3), num_subjects=20, seed=9))
    split = make_split(ds20, "cross_subject_first_k", k=16)
    if set(np.unique(ds20.subject_ids[split.train_indices])) != set(range(1, 17)):
        problems.append("first-k split is wrong")
    ds1 = generate_synthetic(SynthConfig(num_classes=2, samples_per_class=40, time_len=16,
                                         channels=(3, 3), num_subjects=1, seed=9))
    split = make_split(ds1, "cross_session_top_fraction", fraction=0.8)
    if set(np.unique(ds1.session_ids[split.train_indices])) != {1, 2, 3, 4}:
        problems.append("top-fraction split is wrong")
    for s in (split,):
        overlap = set(s.train_indices.tolist()) & set(s.test_indices.tolist())
        if overlap:
            problems.append("split indices overlap")
    return problems


def check_encoder_gradients(configs: int = 3) -> list[str]:
    problems = []
    rng = make_rng(104)
    for i in range(configs):
        config = EncoderConfig(
            input_channels=int(rng.integers(1, 4)),
            conv_layers=((int(rng.integers(2, 5)), int(rng.integers(1, 4)), 1),),
            activation="tanh",
            embedding_dim=3,
            projection_dim=3,
        )
        enc = init_encoder_params(config, rng)
        proj = init_projection_params(config, rng)
        window = rng.normal(size=(config.min_input_length + 4, config.input_channels))
        coeff = rng.normal(size=config.projection_dim)
        all_params = {f"e_{k}": v for k, v in enc.items()}
        all_params.update({f"p_{k}": v for k, v in proj.items()})

        def scalar(ps):
            e = {k[2:]: v for k, v in ps.items() if k.startswith("e_")}
            pr = {k[2:]: v for k, v in ps.items() if k.startswith("p_")}
            h, _ = encoder_forward_batch(config, e, window[None])
            z, _ = projection_forward_batch(pr, h)
            return float(np.sum(coeff * z[0]))

        h, ecache = encoder_forward_batch(config, enc, window[None])
        z, pcache = projection_forward_batch(proj, h)
        pgrads, dh = projection_backward_batch(pcache, proj, coeff[None])
        egrads, _ = encoder_backward_batch(ecache, enc, dh)
        fd = finite_diff_grad(scalar, all_params)
        analytic = np.concatenate(
            [egrads[k].ravel() for k in sorted(egrads)]
            + [pgrads[k].ravel() for k in sorted(pgrads)]
        )
        numeric = np.concatenate(
            [fd[f"e_{k}"].ravel() for k in sorted(egrads)]
            + [fd[f"p_{k}"].ravel() for k in sorted(pgrads)]
        )
        if relative_error(analytic, numeric) >= 1e-4:
            problems.append(f"encoder composition gradient mismatch on config {i}")
    return problems


SUITES = [
    ("numerics", check_numerics),
    ("loss gradients", check_gradients),
    ("reduction identities", check_identities),
    ("analytic values", check_analytic_values),
    ("hardness sampler", check_sampler),
    ("split protocols", check_splits),
    ("encoder gradients", check_encoder_gradients),
]


def run_selfcheck(stream=None) -> bool:
    stream = stream or sys.stdout
    ok = True
    for name, fn in SUITES:
        problems = fn()
        if problems:
            ok = False
            for p in problems:
                print(f"FAIL - {name}: {p}", file=stream)
        else:
            print(f"ok   - {name}", file=stream)
    return ok
