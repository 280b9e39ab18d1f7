"""Contrastive objectives over paired unit-norm projections, with analytic
gradients with respect to the projections.

Four losses are provided:

* ``info_nce_bidirectional`` - cross-modal InfoNCE summed over both anchor
  directions. For anchor k in one modality, the positive is row k of the
  other modality and the candidates are all N rows of the other modality.
* ``hnl_loss_bidirectional`` - same pairing, but each anchor's denominator
  replaces the plain negative sum with a hardness-reweighted, class-prior
  corrected estimate ``delta`` (see :func:`hnl_delta`), clamped at its
  analytic minimum ``M * exp(-1/t)``.
* ``debiased_loss_bidirectional`` - the beta = 0 special case of the above.
* ``nt_xent_two_view`` - the two-augmented-view unimodal loss over 2N
  projections, optionally with the same hard-negative denominator.

Similarities are plain dot products (cosine, given unit-norm rows) and every
similarity is divided by the temperature before exponentiation. Losses are
sums over per-anchor terms by default; ``reduction="mean"`` divides by the
number of terms so values are comparable across batch sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyBatchError, InsufficientNegativesError, ShapeError
from .numcore import logsumexp_rows

# Unit-norm tolerance for embedding rows at public entry points.
NORM_ATOL = 1e-8

# exp() stays finite for arguments up to ~709; similarities are in [-1, 1].
_MAX_EXPONENT_SCALE = 700.0


@dataclass(frozen=True)
class HnlParams:
    """Hard-negative loss hyperparameters.

    beta >= 0 concentrates weight on negatives most similar to the anchor;
    tau_plus in [0, 1) is the prior probability that a uniformly drawn
    candidate shares the anchor's class; temperature scales all similarities;
    num_negatives is the number of negatives each anchor sees.
    """

    beta: float
    tau_plus: float
    temperature: float
    num_negatives: int

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if not (0.0 <= self.tau_plus < 1.0):
            raise ValueError(f"tau_plus must be in [0, 1), got {self.tau_plus}")
        if self.num_negatives < 1:
            raise ValueError(f"num_negatives must be >= 1, got {self.num_negatives}")
        if (self.beta + 1.0) / self.temperature > _MAX_EXPONENT_SCALE:
            raise ValueError(
                f"(beta + 1) / temperature = {(self.beta + 1.0) / self.temperature:.1f} "
                f"would overflow exp(); keep it <= {_MAX_EXPONENT_SCALE:.0f}"
            )

    @property
    def tau_minus(self) -> float:
        return 1.0 - self.tau_plus


@dataclass(frozen=True)
class EmbeddingBatch:
    """Index-aligned projection matrices for the two modalities.

    Row k of ``z_s`` and row k of ``z_i`` come from the same input instance
    and form the positive pair; all rows are expected unit-norm.
    """

    z_s: np.ndarray
    z_i: np.ndarray

    @property
    def n_pairs(self) -> int:
        return self.z_s.shape[0]


@dataclass(frozen=True)
class LossOutput:
    """Scalar loss plus gradients matching the two input matrices.

    For two-view losses the first/second gradient slots hold the first/second
    view respectively.
    """

    loss: float
    grad_z_s: np.ndarray
    grad_z_i: np.ndarray


def _check_rows(name: str, z: np.ndarray, validate: bool) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError(f"{name} contains non-finite entries")
    if validate and z.shape[0] > 0:
        norms = np.linalg.norm(z, axis=1)
        worst = int(np.argmax(np.abs(norms - 1.0)))
        if abs(norms[worst] - 1.0) > NORM_ATOL:
            raise ValueError(
                f"{name} row {worst} has norm {norms[worst]:.12f}; rows must be "
                f"unit-norm within {NORM_ATOL}"
            )
    return z


def _check_batch(batch: EmbeddingBatch, validate: bool) -> tuple[np.ndarray, np.ndarray]:
    z_s = _check_rows("z_s", batch.z_s, validate)
    z_i = _check_rows("z_i", batch.z_i, validate)
    if z_s.shape != z_i.shape:
        raise ShapeError(f"modalities disagree: z_s {z_s.shape} vs z_i {z_i.shape}")
    return z_s, z_i


def _scale(reduction: str, n_terms: int) -> float:
    if reduction == "sum":
        return 1.0
    if reduction == "mean":
        return 1.0 / n_terms
    raise ValueError(f"reduction must be 'sum' or 'mean', got {reduction!r}")


def info_nce_bidirectional(
    batch: EmbeddingBatch,
    temperature: float,
    *,
    reduction: str = "sum",
    validate: bool = True,
) -> LossOutput:
    """Cross-modal InfoNCE over both anchor directions.

    Anchor k of modality s scores its positive <z_s_k, z_i_k> against all N
    cross-modal candidates <z_s_k, z_i_n>; the i-anchored direction mirrors
    this, and the loss is the sum of all 2N per-anchor terms.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    z_s, z_i = _check_batch(batch, validate)
    n = z_s.shape[0]
    if n == 0:
        raise EmptyBatchError("cannot score an empty batch")

    s = (z_s @ z_i.T) / temperature
    diag = np.diag(s)
    lse_rows = logsumexp_rows(s)
    lse_cols = logsumexp_rows(s.T)
    terms = (lse_rows - diag) + (lse_cols - diag)

    p_rows = np.exp(s - lse_rows[:, None])
    p_cols = np.exp(s - lse_cols[None, :])
    ds = (p_rows - np.eye(n)) + (p_cols - np.eye(n))

    c = _scale(reduction, 2 * n)
    ds *= c / temperature
    return LossOutput(
        loss=float(np.sum(terms)) * c,
        grad_z_s=ds @ z_i,
        grad_z_i=ds.T @ z_s,
    )


def hnl_delta(sim_pos: float, sims_neg, p: HnlParams) -> float:
    """Corrected denominator mass for one anchor.

    Given the positive similarity and the anchor's negative similarities,
    returns

        max( (1 / tau_minus) * ( sum_i exp((beta+1) s_i / t)
                                 / ((1/M) sum_i exp(beta s_i / t))
                               - tau_plus * M * exp(sim_pos / t) ),
             M * exp(-1 / t) )

    where M = num_negatives and t = temperature. The first argument is a
    hardness-weighted importance estimate of the true-negative mass minus the
    expected same-class contamination; the clamp is the smallest value the
    uncorrected sum could take for unit-norm embeddings, so the result is
    always positive.
    """
    sims = np.asarray(sims_neg, dtype=np.float64)
    if sims.size == 0:
        raise ValueError("delta needs at least one negative similarity")
    if sims.size != p.num_negatives:
        raise ValueError(
            f"got {sims.size} negatives but params declare {p.num_negatives}"
        )
    t = p.temperature
    m = float(p.num_negatives)
    a = float(np.sum(np.exp((p.beta + 1.0) * sims / t)))
    b = float(np.mean(np.exp(p.beta * sims / t)))
    inner = (a / b - p.tau_plus * m * np.exp(sim_pos / t)) / p.tau_minus
    return float(max(inner, m * np.exp(-1.0 / t)))


def _hnl_rows(s: np.ndarray, p: HnlParams) -> tuple[np.ndarray, np.ndarray]:
    """Per-anchor hard-negative terms with anchors along rows of ``s``.

    The positive for row k is s[k, k]; the negatives are the off-diagonal
    entries of row k. Returns (per-anchor losses, dLoss/dS). The max inside
    delta is handled subgradient-style: when the clamp is active that
    anchor's delta contributes no gradient; ties take the unclamped branch.
    """
    n = s.shape[0]
    m = float(n - 1)
    t = p.temperature
    off = ~np.eye(n, dtype=bool)

    diag = np.diagonal(s)
    u = np.exp(diag / t)
    eb = np.exp(p.beta * s / t)
    eb1 = np.exp((p.beta + 1.0) * s / t)
    a = np.sum(np.where(off, eb1, 0.0), axis=1)
    b = np.sum(np.where(off, eb, 0.0), axis=1) / m

    inner = (a / b - p.tau_plus * m * u) / p.tau_minus
    clamp = m * np.exp(-1.0 / t)
    active = inner >= clamp
    delta = np.where(active, inner, clamp)

    denom = u + delta
    losses = -diag / t + np.log(denom)

    g = 1.0 / denom
    ds = np.zeros_like(s)
    coef = (g * active / p.tau_minus)[:, None] * (
        ((p.beta + 1.0) / t) * eb1 * b[:, None] - a[:, None] * (p.beta / t) * eb / m
    ) / (b**2)[:, None]
    ds[off] = coef[off]
    du = u / t
    np.fill_diagonal(
        ds, -1.0 / t + g * du - active * g * (p.tau_plus * m * du) / p.tau_minus
    )
    return losses, ds


def hnl_loss_bidirectional(
    batch: EmbeddingBatch,
    p: HnlParams,
    *,
    reduction: str = "sum",
    validate: bool = True,
) -> LossOutput:
    """Hard-negative cross-modal loss summed over both anchor directions.

    Each anchor's term is -log( exp(s+/t) / (exp(s+/t) + delta) ) with delta
    from :func:`hnl_delta` over the N-1 cross-modal negatives; requires
    ``p.num_negatives == N - 1``.
    """
    z_s, z_i = _check_batch(batch, validate)
    n = z_s.shape[0]
    if n < 2:
        raise InsufficientNegativesError(
            f"need at least 2 pairs so every anchor has a negative, got {n}"
        )
    if p.num_negatives != n - 1:
        raise ValueError(
            f"p.num_negatives must equal N - 1 = {n - 1}, got {p.num_negatives}"
        )

    s = z_s @ z_i.T
    l_rows, d_rows = _hnl_rows(s, p)
    l_cols, d_cols = _hnl_rows(s.T, p)
    ds = d_rows + d_cols.T

    c = _scale(reduction, 2 * n)
    ds *= c
    return LossOutput(
        loss=(float(np.sum(l_rows)) + float(np.sum(l_cols))) * c,
        grad_z_s=ds @ z_i,
        grad_z_i=ds.T @ z_s,
    )


def debiased_loss_bidirectional(
    batch: EmbeddingBatch,
    tau_plus: float,
    temperature: float,
    *,
    reduction: str = "sum",
    validate: bool = True,
) -> LossOutput:
    """Class-prior-corrected loss: the beta = 0 case of the hard-negative loss."""
    n = np.asarray(batch.z_s).shape[0]
    p = HnlParams(
        beta=0.0,
        tau_plus=tau_plus,
        temperature=temperature,
        num_negatives=max(n - 1, 1),
    )
    return hnl_loss_bidirectional(batch, p, reduction=reduction, validate=validate)


def nt_xent_two_view(
    z_a: np.ndarray,
    z_b: np.ndarray,
    temperature: float,
    hnl: HnlParams | None = None,
    *,
    reduction: str = "sum",
    validate: bool = True,
) -> LossOutput:
    """Two-view contrastive loss over the 2N stacked projections.

    Every projection anchors once; its positive is the same instance's other
    view and its denominator spans the positive plus the 2N-2 remaining
    projections from both views. With ``hnl`` given, the plain negative sum
    in each denominator is replaced by the corrected delta (which then needs
    ``hnl.num_negatives == 2N - 2`` and ``hnl.temperature == temperature``).
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    z_a = _check_rows("z_a", z_a, validate)
    z_b = _check_rows("z_b", z_b, validate)
    if z_a.shape != z_b.shape:
        raise ShapeError(f"views disagree: {z_a.shape} vs {z_b.shape}")
    n = z_a.shape[0]
    if n < 2:
        raise InsufficientNegativesError(
            f"need at least 2 instances so every anchor has a negative, got {n}"
        )

    u = np.vstack([z_a, z_b])
    two_n = 2 * n
    s = u @ u.T
    pos = np.concatenate([np.arange(n, two_n), np.arange(n)])
    rows = np.arange(two_n)
    t = temperature

    ds = np.zeros_like(s)
    if hnl is None:
        logits = s / t
        np.fill_diagonal(logits, -np.inf)
        lse = logsumexp_rows(logits)
        terms = lse - logits[rows, pos]
        q = np.exp(logits - lse[:, None])  # zero on the diagonal
        ds = q
        ds[rows, pos] -= 1.0
        ds /= t
    else:
        if hnl.num_negatives != two_n - 2:
            raise ValueError(
                f"hnl.num_negatives must equal 2N - 2 = {two_n - 2}, "
                f"got {hnl.num_negatives}"
            )
        if hnl.temperature != temperature:
            raise ValueError(
                "hnl.temperature must match the loss temperature "
                f"({hnl.temperature} != {temperature})"
            )
        m = float(two_n - 2)
        neg_mask = np.ones_like(s, dtype=bool)
        neg_mask[rows, rows] = False
        neg_mask[rows, pos] = False

        s_pos = s[rows, pos]
        up = np.exp(s_pos / t)
        eb = np.exp(hnl.beta * s / t)
        eb1 = np.exp((hnl.beta + 1.0) * s / t)
        a = np.sum(np.where(neg_mask, eb1, 0.0), axis=1)
        b = np.sum(np.where(neg_mask, eb, 0.0), axis=1) / m
        inner = (a / b - hnl.tau_plus * m * up) / hnl.tau_minus
        clamp = m * np.exp(-1.0 / t)
        active = inner >= clamp
        delta = np.where(active, inner, clamp)
        denom = up + delta
        terms = -s_pos / t + np.log(denom)

        g = 1.0 / denom
        coef = (g * active / hnl.tau_minus)[:, None] * (
            ((hnl.beta + 1.0) / t) * eb1 * b[:, None]
            - a[:, None] * (hnl.beta / t) * eb / m
        ) / (b**2)[:, None]
        ds[neg_mask] = coef[neg_mask]
        dup = up / t
        ds[rows, pos] = -1.0 / t + g * dup - active * g * (hnl.tau_plus * m * dup) / hnl.tau_minus

    c = _scale(reduction, two_n)
    ds *= c
    grad_u = (ds + ds.T) @ u
    return LossOutput(
        loss=float(np.sum(terms)) * c,
        grad_z_s=grad_u[:n],
        grad_z_i=grad_u[n:],
    )
