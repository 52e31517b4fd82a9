"""Synthetic test sequences: translating rectangles over a static background
with exact piecewise-constant forward/backward flow and ground-truth masks."""

from dataclasses import dataclass

import numpy as np

from .flowio import FlowField, Image, LabelMap

# (x0, y0, w, h, (vx, vy), color); gt labels are 2, 3, ... in this order.
# Colors are chosen luma-bright against the dark background so edge maps
# carry a strong ridge along object boundaries.
_RECTS = (
    (4, 36, 16, 16, (2, 0), (250, 210, 70)),
    (40, 6, 14, 14, (-1, 1), (80, 230, 240)),
    (6, 6, 10, 10, (1, 1), (240, 120, 220)),
    (46, 44, 10, 10, (0, -2), (150, 250, 130)),
)
_BACKGROUND = (35, 35, 35)


@dataclass
class SyntheticSequence:
    frames: list      # Image per frame
    fwd_flows: list   # FlowField t -> t+1
    bwd_flows: list   # FlowField t+1 -> t
    gt_maps: list     # LabelMap per frame (background 1, objects 2..)
    velocities: list  # (vx, vy) per object


def make_sequence(width=64, height=64, n_frames=12, objects=2) -> SyntheticSequence:
    if not (1 <= objects <= len(_RECTS)):
        raise ValueError(f"objects must be in 1..{len(_RECTS)}")
    rects = _RECTS[:objects]

    def rect_at(r, t):
        x0, y0, w, h, (vx, vy), _ = r
        return x0 + vx * t, y0 + vy * t, w, h

    # all rectangles must stay inside the frame for the whole sequence
    for r in rects:
        for t in range(n_frames):
            x, y, w, h = rect_at(r, t)
            if not (0 <= x and x + w <= width and 0 <= y and y + h <= height):
                raise ValueError("rectangle leaves the frame; shorten the sequence")

    frames, gt_maps = [], []
    for t in range(n_frames):
        img = np.empty((height, width, 3), dtype=np.uint8)
        img[...] = _BACKGROUND
        gt = np.ones((height, width), dtype=np.int32)
        for k, r in enumerate(rects):
            x, y, w, h = rect_at(r, t)
            img[y : y + h, x : x + w] = r[5]
            gt[y : y + h, x : x + w] = k + 2
        frames.append(Image(width, height, 3, img))
        gt_maps.append(LabelMap(width, height, gt))

    fwd, bwd = [], []
    for t in range(n_frames - 1):
        f = np.zeros((height, width, 2), dtype=np.float32)
        b = np.zeros((height, width, 2), dtype=np.float32)
        for r in rects:
            vx, vy = r[4]
            x, y, w, h = rect_at(r, t)
            f[y : y + h, x : x + w] = (vx, vy)
            x, y, w, h = rect_at(r, t + 1)
            b[y : y + h, x : x + w] = (-vx, -vy)
        fwd.append(FlowField(width, height, f))
        bwd.append(FlowField(width, height, b))
    return SyntheticSequence(frames, fwd, bwd, gt_maps, [r[4] for r in rects])
