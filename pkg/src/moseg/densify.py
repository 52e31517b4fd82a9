"""Sparse-to-dense label propagation.

Trajectory labels are rasterized into per-frame seed pixels; every other
pixel then takes the label of its geodesically nearest seed, where step
costs grow with the Sobel edge strength of the blurred frame.  This is the
deterministic densifier of the pipeline; it consumes exactly the signals
(smoothed RGB, edge map) that a learned densifier would.
"""

import heapq
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from ._util import iround
from .flowio import Image, LabelMap
from .tracker import TrajectorySet


class NoSeeds(ValueError):
    pass


class EmptyPartition(ValueError):
    pass


# max magnitude of the 3x3 Sobel pair on 8-bit input: 4*255 per axis
_SOBEL_NORM = 4.0 * 255.0 * math.sqrt(2.0)


def to_gray(img: Image) -> np.ndarray:
    """Float luma plane; RGB collapses via 0.299 R + 0.587 G + 0.114 B."""
    d = img.data.astype(np.float64)
    if img.channels == 1:
        return d[..., 0]
    return 0.299 * d[..., 0] + 0.587 * d[..., 1] + 0.114 * d[..., 2]


def sobel_magnitude(img: Image) -> np.ndarray:
    """Normalized gradient magnitude in [0, 1], replicate-padded borders."""
    g = np.pad(to_gray(img), 1, mode="edge")
    gx = (
        (g[:-2, 2:] + 2.0 * g[1:-1, 2:] + g[2:, 2:])
        - (g[:-2, :-2] + 2.0 * g[1:-1, :-2] + g[2:, :-2])
    )
    gy = (
        (g[2:, :-2] + 2.0 * g[2:, 1:-1] + g[2:, 2:])
        - (g[:-2, :-2] + 2.0 * g[:-2, 1:-1] + g[:-2, 2:])
    )
    return np.hypot(gx, gy) / _SOBEL_NORM


def gaussian_blur(img: Image, sigma: float) -> Image:
    """Separable Gaussian with kernel radius ceil(3 sigma); sigma 0 is identity."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return img
    r = math.ceil(3.0 * sigma)
    xs = np.arange(-r, r + 1, dtype=np.float64)
    kernel = np.exp(-(xs ** 2) / (2.0 * sigma * sigma))
    kernel /= kernel.sum()
    data = img.data.astype(np.float64)
    pad = np.pad(data, ((0, 0), (r, r), (0, 0)), mode="edge")
    tmp = np.zeros_like(data)
    for i, k in enumerate(kernel):
        tmp += k * pad[:, i : i + img.width, :]
    pad = np.pad(tmp, ((r, r), (0, 0), (0, 0)), mode="edge")
    out = np.zeros_like(data)
    for i, k in enumerate(kernel):
        out += k * pad[i : i + img.height, :, :]
    out = np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    return Image(img.width, img.height, img.channels, out)


@dataclass
class SparseFrameLabels:
    """Seed pixels (x, y, label >= 1) for one frame."""

    frame: int
    seeds: list


def rasterize_sparse_labels(ts: TrajectorySet, traj_labels: dict, frame: int,
                            keep=None) -> SparseFrameLabels:
    """Project labeled trajectory points into integer seed pixels.

    `keep` is None (all labels), a set (filter), or a dict (filter and
    remap).  Pixels claimed by two different labels are voided.
    """
    at = {}
    dead = set()
    for tr in ts.trajectories:
        if not tr.alive_at(frame):
            continue
        lab = traj_labels.get(tr.id)
        if lab is None:
            continue
        if isinstance(keep, dict):
            lab = keep.get(lab)
            if lab is None:
                continue
        elif keep is not None and lab not in keep:
            continue
        x, y = tr.position(frame)
        key = (iround(x), iround(y))
        if key in dead:
            continue
        if key in at and at[key] != lab:
            del at[key]
            dead.add(key)
        else:
            at[key] = lab
    seeds = [(x, y, lab) for (x, y), lab in sorted(at.items())]
    return SparseFrameLabels(frame, seeds)


@dataclass
class LabelSelection:
    """Which components survive densification, and their output labels."""

    mode: str
    background: int | None
    frame_foreground: dict
    mapping: dict

    def frame_mapping(self, frame: int) -> dict:
        if self.mode == "multi":
            return self.mapping
        m = {self.background: 1}
        fg = self.frame_foreground.get(frame)
        if fg is not None:
            m[fg] = 2
        return m


def select_labels(traj_labels: dict, ts: TrajectorySet, mode="multi",
                  min_count=5, min_frac=0.05) -> LabelSelection:
    """Component selection per the binary/multi labeling strategies.

    Binary: globally most frequent component is background (1); per frame
    the most frequent other component is foreground (2).  Multi: keep
    components of size >= max(min_count, min_frac * largest), renumbered
    from 1 by decreasing size.
    """
    if not traj_labels:
        raise EmptyPartition("no trajectory labels")
    sizes = Counter(traj_labels.values())
    if mode == "binary":
        background = min(sizes, key=lambda c: (-sizes[c], c))
        frame_fg = {}
        for t in range(ts.frame_count):
            counts = Counter(
                traj_labels[tr.id]
                for tr in ts.trajectories
                if tr.alive_at(t)
                and tr.id in traj_labels
                and traj_labels[tr.id] != background
            )
            if counts:
                frame_fg[t] = min(counts, key=lambda c: (-counts[c], c))
        return LabelSelection("binary", background, frame_fg, {})
    if mode != "multi":
        raise ValueError(f"unknown label mode {mode!r}")
    largest = max(sizes.values())
    threshold = max(min_count, min_frac * largest)
    kept = sorted((c for c in sizes if sizes[c] >= threshold),
                  key=lambda c: (-sizes[c], c))
    return LabelSelection("multi", None, {}, {c: i + 1 for i, c in enumerate(kept)})


def geodesic_densify(img: Image, seeds: SparseFrameLabels, lam=50.0,
                     sigma_blur=2.0, edges=None) -> LabelMap:
    """Multi-source shortest path from all seeds on the 4-connected grid.

    Step cost between neighbors p, q is 1 + lam * (g(p) + g(q)) / 2 with g
    the Sobel magnitude of the blurred frame (recomputed here unless an
    `edges` map is passed in).  Distance ties go to the smaller label; seed
    pixels keep their labels exactly.
    """
    if not seeds.seeds:
        raise NoSeeds(f"frame {seeds.frame} has no seeds")
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if edges is None:
        edges = sobel_magnitude(gaussian_blur(img, sigma_blur))
    h, w = edges.shape
    dist = np.full((h, w), np.inf)
    labels = np.zeros((h, w), dtype=np.int32)
    settled = np.zeros((h, w), dtype=bool)
    heap = []
    for x, y, lab in seeds.seeds:
        if not (0 <= x < w and 0 <= y < h):
            raise ValueError(f"seed ({x}, {y}) out of bounds")
        heapq.heappush(heap, (0.0, int(lab), int(y), int(x)))
    while heap:
        d, lab, y, x = heapq.heappop(heap)
        if settled[y, x]:
            continue
        settled[y, x] = True
        dist[y, x] = d
        labels[y, x] = lab
        for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
            if not (0 <= ny < h and 0 <= nx < w) or settled[ny, nx]:
                continue
            nd = d + 1.0 + lam * (edges[y, x] + edges[ny, nx]) / 2.0
            if nd < dist[ny, nx] or (nd == dist[ny, nx] and lab < labels[ny, nx]):
                dist[ny, nx] = nd
                labels[ny, nx] = lab
                heapq.heappush(heap, (nd, lab, ny, nx))
    return LabelMap(w, h, labels)
