"""Dense float64 numerics: stable reductions, normalization, Adam, RNG streams,
and a central-difference gradient oracle.

All arrays are C-ordered ``numpy.float64``. A "param set" is a plain dict
mapping parameter names to arrays; insertion order is the canonical iteration
order, so two param sets built the same way iterate identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DegenerateEmbeddingError, OracleError, ShapeError

ParamSet = dict[str, np.ndarray]

# Rows with smaller Euclidean norm than this are refused rather than
# renormalized: below it the direction is numerical noise.
EPS_NORM = 1e-12


def stable_logsumexp(values) -> float:
    """log(sum(exp(v))) computed with a max shift so it never overflows.

    Raises ValueError on empty input.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("logsumexp of an empty vector is undefined")
    if not np.all(np.isfinite(v)):
        raise ValueError("logsumexp requires finite inputs")
    m = float(np.max(v))
    return m + float(np.log(np.sum(np.exp(v - m))))


def logsumexp_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise stable logsumexp for a 2-D array."""
    mx = np.max(m, axis=1, keepdims=True)
    return (mx + np.log(np.sum(np.exp(m - mx), axis=1, keepdims=True)))[:, 0]


def l2_normalize_rows(m: np.ndarray, eps: float = EPS_NORM) -> np.ndarray:
    """Scale each row of ``m`` to unit Euclidean norm.

    Raises DegenerateEmbeddingError naming the first row whose norm is <= eps.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D array, got shape {m.shape}")
    norms = np.linalg.norm(m, axis=1)
    bad = np.where(norms <= eps)[0]
    if bad.size:
        raise DegenerateEmbeddingError(int(bad[0]), float(norms[bad[0]]))
    return m / norms[:, None]


def cosine_similarity_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise dot products of two row-normalized matrices: out[k, n] = <a_k, b_n>."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"incompatible shapes {a.shape} and {b.shape}")
    return a @ b.T


@dataclass
class AdamState:
    """Adam moment buffers plus hyperparameters; step counts completed updates."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: ParamSet = field(default_factory=dict)
    v: ParamSet = field(default_factory=dict)


def adam_step(params: ParamSet, grads: ParamSet, state: AdamState) -> tuple[ParamSet, AdamState]:
    """One Adam update with bias correction. Returns fresh params and state.

    Moments are lazily initialized to zeros on the first call.
    """
    if set(grads) != set(params):
        raise ShapeError("gradient names do not match parameter names")
    t = state.step + 1
    new_m: ParamSet = {}
    new_v: ParamSet = {}
    new_params: ParamSet = {}
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"grad for {name!r} has shape {g.shape}, param has {p.shape}")
        m_prev = state.m.get(name)
        v_prev = state.v.get(name)
        if m_prev is None:
            m_prev = np.zeros_like(p)
            v_prev = np.zeros_like(p)
        m = b1 * m_prev + (1.0 - b1) * g
        v = b2 * v_prev + (1.0 - b2) * g * g
        new_m[name] = m
        new_v[name] = v
        new_params[name] = p - state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    new_state = AdamState(
        learning_rate=state.learning_rate,
        beta1=b1,
        beta2=b2,
        eps=state.eps,
        step=t,
        m=new_m,
        v=new_v,
    )
    return new_params, new_state


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Seeded counter-based generator (Philox).

    Extra integers select independent substreams, so e.g.
    ``make_rng(seed, epoch, window)`` gives every window its own
    reproducible stream on any platform.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *stream])))


def finite_diff_grad(
    f: Callable[[ParamSet], float], params: ParamSet, h: float = 1e-5
) -> ParamSet:
    """Central-difference gradient of a scalar function of a param set.

    Evaluates f twice per coordinate; intended as a correctness oracle for
    analytic gradients, not for training.
    """
    if h <= 0:
        raise ValueError("step size h must be positive")
    grads: ParamSet = {}
    work = {k: v.copy() for k, v in params.items()}
    for name, p in work.items():
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f(work)
            flat[i] = orig - h
            fm = f(work)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise OracleError(f"non-finite value probing {name!r}[{i}]")
            gflat[i] = (fp - fm) / (2.0 * h)
        grads[name] = g
    return grads


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Norm-based relative difference, robust near zero."""
    na = float(np.linalg.norm(np.asarray(a).ravel()))
    nb = float(np.linalg.norm(np.asarray(b).ravel()))
    denom = max(na, nb, 1e-300)
    return float(np.linalg.norm((np.asarray(a) - np.asarray(b)).ravel())) / denom


def params_relative_error(a: ParamSet, b: ParamSet) -> float:
    """Relative error across two param sets with the same names."""
    if set(a) != set(b):
        raise ShapeError("param sets have different names")
    ca = np.concatenate([a[k].ravel() for k in sorted(a)]) if a else np.zeros(0)
    cb = np.concatenate([b[k].ravel() for k in sorted(b)]) if b else np.zeros(0)
    return relative_error(ca, cb)
