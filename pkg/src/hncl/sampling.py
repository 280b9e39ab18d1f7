"""Hardness-weighted candidate distributions and a label-aware diagnostic
sampler.

Training never samples explicitly (the batch losses reweight in closed form);
these utilities exist to inspect and test the implied distribution: weight on
candidate i is proportional to exp(beta * sim_i) over the eligible support.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySupportError
from .numcore import stable_logsumexp


@dataclass(frozen=True)
class HardnessWeights:
    """Normalized candidate weights; zero exactly outside ``support``."""

    weights: np.ndarray
    support: np.ndarray


def hardness_weights(sims, beta: float) -> HardnessWeights:
    """Softmax of beta-scaled similarities over all candidates."""
    s = np.asarray(sims, dtype=np.float64)
    if s.size == 0:
        raise ValueError("need at least one candidate similarity")
    if not np.all(np.isfinite(s)):
        raise ValueError("similarities must be finite")
    logits = beta * s
    w = np.exp(logits - stable_logsumexp(logits))
    return HardnessWeights(weights=w, support=np.arange(s.size))


def restricted_hardness_weights(sims, labels, anchor_label, beta: float) -> HardnessWeights:
    """Hardness weights over the candidates whose label differs from the
    anchor's; excluded indices carry exactly zero weight."""
    s = np.asarray(sims, dtype=np.float64)
    labels = np.asarray(labels)
    if s.shape[0] != labels.shape[0]:
        raise ValueError(f"{s.shape[0]} sims but {labels.shape[0]} labels")
    support = np.where(labels != anchor_label)[0]
    if support.size == 0:
        raise EmptySupportError(
            f"no candidate has a label different from {anchor_label!r}"
        )
    weights = np.zeros(s.shape[0])
    weights[support] = hardness_weights(s[support], beta).weights
    return HardnessWeights(weights=weights, support=support)


def sample_qbeta(sims, labels, anchor_label, beta: float, rng: np.random.Generator) -> int:
    """Draw one candidate index, hardness-weighted, restricted to true negatives.

    Needs labels, so it is a diagnostic (the training losses reweight
    negatives in closed form instead of sampling).
    """
    hw = restricted_hardness_weights(sims, labels, anchor_label, beta)
    return int(rng.choice(hw.support, p=hw.weights[hw.support]))
