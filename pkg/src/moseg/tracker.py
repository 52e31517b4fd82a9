"""Semi-dense point tracking through precomputed optical flow.

Trajectories are advected with bilinear flow samples, killed on leaving
the frame or failing the forward-backward consistency test, and re-seeded
on a coarse grid so every cell keeps roughly one live track.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._util import iround
from .flowio import FlowField

# why a trajectory stopped growing
END_OF_SEQUENCE = "eos"
LEFT_FRAME = "bounds"
FB_FAILED = "fb"


class OutOfBounds(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass
class Trajectory:
    """One point track: sub-pixel (x, y) per frame from start_frame on."""

    id: int
    start_frame: int
    positions: np.ndarray  # (length, 2) float64
    end_reason: str = END_OF_SEQUENCE

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)

    @property
    def length(self) -> int:
        return len(self.positions)

    @property
    def end_frame(self) -> int:
        return self.start_frame + len(self.positions) - 1

    def alive_at(self, frame: int) -> bool:
        return self.start_frame <= frame <= self.end_frame

    def position(self, frame: int) -> np.ndarray:
        if not self.alive_at(frame):
            raise OutOfBounds(f"trajectory {self.id} not alive at frame {frame}")
        return self.positions[frame - self.start_frame]

    def derivatives(self) -> np.ndarray:
        """Forward differences, pixels/frame; entry t is the step t -> t+1."""
        return np.diff(self.positions, axis=0)


@dataclass
class TrajectorySet:
    trajectories: list
    frame_count: int
    width: int | None = None
    height: int | None = None
    sampling_step: int = 8

    def __post_init__(self):
        ids = [tr.id for tr in self.trajectories]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate trajectory ids")

    def by_id(self) -> dict:
        return {tr.id: tr for tr in self.trajectories}


def seed_points(frame_dims, sampling_step, occupied_mask=None):
    """Cell-center seed candidates on the sampling grid, row-major.

    A cell is skipped when its center pixel is marked in occupied_mask.
    """
    w, h = frame_dims
    s = sampling_step
    if s < 1:
        raise ValueError("sampling_step must be >= 1")
    half = s / 2.0
    pts = []
    for j in range(h // s):
        y = j * s + half
        if y > h - 1:
            continue
        for i in range(w // s):
            x = i * s + half
            if x > w - 1:
                continue
            if occupied_mask is not None and occupied_mask[iround(y), iround(x)]:
                continue
            pts.append((x, y))
    return pts


def sample_flow_bilinear(flow: FlowField, p):
    """Bilinearly interpolated flow vector at sub-pixel position p."""
    x, y = p
    if not (0 <= x <= flow.width - 1 and 0 <= y <= flow.height - 1):
        raise OutOfBounds(f"({x}, {y}) outside {flow.width}x{flow.height}")
    x0, y0 = int(x), int(y)
    x1, y1 = min(x0 + 1, flow.width - 1), min(y0 + 1, flow.height - 1)
    fx, fy = x - x0, y - y0
    d = flow.data
    top = (1.0 - fx) * d[y0, x0] + fx * d[y0, x1]
    bot = (1.0 - fx) * d[y1, x0] + fx * d[y1, x1]
    u, v = (1.0 - fy) * top + fy * bot
    return float(u), float(v)


def fb_check(fwd: FlowField, bwd: FlowField, p, c1=0.01, c2=0.5) -> bool:
    """Forward-backward consistency: true iff p tracks reliably.

    ||w + w_back||^2 < c1 (||w||^2 + ||w_back||^2) + c2, with w sampled at p
    and w_back at the advected position; False when p advects out of frame.
    """
    u, v = sample_flow_bilinear(fwd, p)
    qx, qy = p[0] + u, p[1] + v
    if not (0 <= qx <= bwd.width - 1 and 0 <= qy <= bwd.height - 1):
        return False
    bu, bv = sample_flow_bilinear(bwd, (qx, qy))
    lhs = (u + bu) ** 2 + (v + bv) ** 2
    rhs = c1 * (u * u + v * v + bu * bu + bv * bv) + c2
    return lhs < rhs


@dataclass
class _Track:
    seed_order: int
    start: int
    pts: list
    reason: str = END_OF_SEQUENCE


def track_sequence(fwd_flows, bwd_flows=None, dims=None, sampling_step=8,
                   c1=0.01, c2=0.5) -> TrajectorySet:
    """Track a whole sequence of flow fields into a TrajectorySet.

    Per frame: advect live tracks, terminate unreliable ones (excluding the
    failed step), then seed unoccupied sampling cells.  Tracks shorter than
    two frames are discarded.  Fully deterministic.
    """
    if not fwd_flows:
        raise ValueError("need at least one forward flow field")
    w, h = fwd_flows[0].width, fwd_flows[0].height
    if dims is not None and tuple(dims) != (w, h):
        raise DimensionMismatch(f"dims {dims} != flow {w}x{h}")
    for f in fwd_flows:
        if (f.width, f.height) != (w, h):
            raise DimensionMismatch("forward flows disagree on dimensions")
    if bwd_flows is not None:
        if len(bwd_flows) != len(fwd_flows):
            raise DimensionMismatch("forward/backward flow counts differ")
        for f in bwd_flows:
            if (f.width, f.height) != (w, h):
                raise DimensionMismatch("backward flows disagree on dimensions")

    n_steps = len(fwd_flows)
    s = sampling_step
    half = s / 2.0
    live: list[_Track] = []
    done: list[_Track] = []
    seed_counter = 0

    for t in range(n_steps + 1):
        # occupancy: pixels within s/2 (Chebyshev) of a live point at frame t
        mask = np.zeros((h, w), dtype=bool)
        for tr in live:
            x, y = tr.pts[-1]
            x0, x1 = max(math.ceil(x - half), 0), min(math.floor(x + half), w - 1)
            y0, y1 = max(math.ceil(y - half), 0), min(math.floor(y + half), h - 1)
            if x0 <= x1 and y0 <= y1:
                mask[y0 : y1 + 1, x0 : x1 + 1] = True
        for (x, y) in seed_points((w, h), s, mask):
            live.append(_Track(seed_counter, t, [(x, y)]))
            seed_counter += 1

        if t == n_steps:
            break
        fwd = fwd_flows[t]
        bwd = bwd_flows[t] if bwd_flows is not None else None
        survivors = []
        for tr in live:
            x, y = tr.pts[-1]
            u, v = sample_flow_bilinear(fwd, (x, y))
            nx, ny = x + u, y + v
            if not (0 <= nx <= w - 1 and 0 <= ny <= h - 1):
                tr.reason = LEFT_FRAME
                done.append(tr)
                continue
            if bwd is not None and not fb_check(fwd, bwd, (x, y), c1, c2):
                tr.reason = FB_FAILED
                done.append(tr)
                continue
            tr.pts.append((nx, ny))
            survivors.append(tr)
        live = survivors

    done.extend(live)
    done.sort(key=lambda trk: trk.seed_order)
    kept = [trk for trk in done if len(trk.pts) >= 2]
    trajectories = [
        Trajectory(i, trk.start, np.array(trk.pts, dtype=np.float64), trk.reason)
        for i, trk in enumerate(kept)
    ]
    return TrajectorySet(trajectories, n_steps + 1, w, h, s)
