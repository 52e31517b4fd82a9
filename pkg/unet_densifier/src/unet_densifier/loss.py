"""Loss restricted to the sparsely labeled pixels (label 0 is void)."""

import torch
import torch.nn.functional as F


class NoLabeledPixels(ValueError):
    pass


def masked_loss(logits: torch.Tensor, sparse_targets: torch.Tensor) -> torch.Tensor:
    """Mean cross-entropy over non-void pixels only.

    logits: (1, K, H, W) or (K, H, W); single-object mode uses K = 1 with
    BCE against label 2 (foreground), the multi-label case uses CE over K
    channels for labels 1..K.  Void pixels contribute nothing, so their
    gradient is exactly zero.
    """
    if logits.dim() == 3:
        logits = logits[None]
    if sparse_targets.dim() == 2:
        sparse_targets = sparse_targets[None]
    mask = sparse_targets > 0
    if not bool(mask.any()):
        raise NoLabeledPixels("every pixel is void")
    if logits.shape[1] == 1:
        target = (sparse_targets == 2).float()
        raw = F.binary_cross_entropy_with_logits(
            logits[:, 0], target, reduction="none")
        return raw[mask].mean()
    raw = F.cross_entropy(
        logits, (sparse_targets.long() - 1).clamp(min=0), reduction="none")
    return raw[mask].mean()
