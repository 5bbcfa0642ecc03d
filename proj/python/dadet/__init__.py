"""Differential feature alignment: core numeric operations.

The heavy lifting (training, data generation, the CLI) lives in the C++
binary; this module exposes the alignment math and the evaluator for
notebook-scale use.
"""

from ._dadet import (
    ap50,
    apply_fog,
    combine,
    ema_update,
    foreground_mask,
    instance_weights,
    iou,
    pca_projection,
    prediction_discrepancy,
    split_features,
)

__all__ = [
    "ap50",
    "apply_fog",
    "combine",
    "ema_update",
    "foreground_mask",
    "instance_weights",
    "iou",
    "pca_projection",
    "prediction_discrepancy",
    "split_features",
]
