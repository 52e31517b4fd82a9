"""Learned sparse-to-dense label propagation (per-sequence U-Net)."""

from .loss import NoLabeledPixels, masked_loss
from .training import ShapeMismatch, predict_dense, train_sequence

__version__ = "0.1.0"
