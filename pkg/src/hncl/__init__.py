"""Cross-modal contrastive pretraining for two-modality time series with a
hard-negative-sampling objective, hand-written gradients, and a frozen-encoder
linear-probe evaluation pipeline."""

__version__ = "0.1.0"

from .losses import (  # noqa: F401
    EmbeddingBatch,
    HnlParams,
    LossOutput,
    debiased_loss_bidirectional,
    hnl_delta,
    hnl_loss_bidirectional,
    info_nce_bidirectional,
    nt_xent_two_view,
)
