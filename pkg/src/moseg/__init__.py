"""Trajectory-based motion segmentation toolkit.

Point trajectories from optical flow, motion affinities (translational or
Siamese-GRU), minimum cost multicut clustering, edge-aware label
densification and segmentation metrics.
"""

from . import affinity, densify, flowio, gru, metrics, multicut, synthetic, tracker

__version__ = "0.1.0"
