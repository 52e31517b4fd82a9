"""Pairwise motion distances and the trajectory affinity graph.

The translational model compares frame-wise motion derivatives of two
trajectories, normalized by the local optical-flow variation, and pools
the maximum over their joint lifetime.  Distances (or learned
probabilities) map to signed edge costs for the multicut solver:
positive = attractive, negative = repulsive.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._util import iround
from .flowio import FlowField
from .tracker import Trajectory, TrajectorySet


class OutOfLifetime(ValueError):
    pass


class NoOverlap(ValueError):
    pass


COST_CLAMP = 10.0


@dataclass(frozen=True)
class AffinityGraph:
    """Trajectory nodes with signed real edge costs, edges stored u < v."""

    node_count: int
    edges: np.ndarray     # (m, 2) int64
    costs: np.ndarray     # (m,) float64
    node_meta: np.ndarray # (node_count,) int64, trajectory id per node

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        c = np.asarray(self.costs, dtype=np.float64).reshape(-1)
        meta = np.asarray(self.node_meta, dtype=np.int64).reshape(-1)
        if len(e) != len(c):
            raise ValueError("edge/cost count mismatch")
        if len(meta) != self.node_count:
            raise ValueError("node_meta length mismatch")
        if len(e):
            if e.min() < 0 or e.max() >= self.node_count:
                raise ValueError("edge endpoint out of range")
            if np.any(e[:, 0] >= e[:, 1]):
                raise ValueError("edges must satisfy u < v")
            keys = e[:, 0] * self.node_count + e[:, 1]
            if len(np.unique(keys)) != len(keys):
                raise ValueError("duplicate edges")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite edge cost")
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "costs", c)
        object.__setattr__(self, "node_meta", meta)

    def with_costs(self, costs) -> "AffinityGraph":
        return AffinityGraph(self.node_count, self.edges, costs, self.node_meta)


def joint_derivative_steps(a: Trajectory, b: Trajectory):
    """Inclusive range [t0, t1] of frames t where both tracks have t and t+1."""
    t0 = max(a.start_frame, b.start_frame)
    t1 = min(a.end_frame, b.end_frame) - 1
    return t0, t1


def motion_derivative(tr: Trajectory, frame: int):
    """Forward difference of the track position at `frame`, pixels/frame."""
    if not (tr.start_frame <= frame and frame + 1 <= tr.end_frame):
        raise OutOfLifetime(f"frame {frame} has no step in trajectory {tr.id}")
    i = frame - tr.start_frame
    d = tr.positions[i + 1] - tr.positions[i]
    return float(d[0]), float(d[1])


def flow_deviation(flow: FlowField, p, window_radius=3) -> float:
    """RMS deviation of flow vectors from their window mean around p.

    The (2r+1)^2 window is centered on the rounded position and clipped to
    the image.
    """
    cx, cy = iround(p[0]), iround(p[1])
    r = window_radius
    x0, x1 = max(cx - r, 0), min(cx + r, flow.width - 1)
    y0, y1 = max(cy - r, 0), min(cy + r, flow.height - 1)
    win = flow.data[y0 : y1 + 1, x0 : x1 + 1].astype(np.float64).reshape(-1, 2)
    dev = win - win.mean(axis=0)
    return float(np.sqrt((dev ** 2).sum(axis=1).mean()))


def sigma_t(flow: FlowField, p_a, p_b, window_radius=3, eps=0.5) -> float:
    """Flow-variation normalizer: eps + min of the two window RMS deviations."""
    return eps + min(
        flow_deviation(flow, p_a, window_radius),
        flow_deviation(flow, p_b, window_radius),
    )


def flow_deviation_map(flow: FlowField, window_radius=3) -> np.ndarray:
    """flow_deviation evaluated at every integer pixel, via box sums."""
    r = window_radius
    d = flow.data.astype(np.float64)
    ones = np.ones((flow.height, flow.width))
    n = _box_sum(ones, r)
    su = _box_sum(d[..., 0], r)
    sv = _box_sum(d[..., 1], r)
    suu = _box_sum(d[..., 0] ** 2, r)
    svv = _box_sum(d[..., 1] ** 2, r)
    var = (suu + svv) / n - ((su / n) ** 2 + (sv / n) ** 2)
    return np.sqrt(np.maximum(var, 0.0))


def _box_sum(a: np.ndarray, r: int) -> np.ndarray:
    """Sum over the (2r+1)^2 window clipped to the array, per pixel."""
    h, w = a.shape
    c = np.zeros((h + 1, w + 1))
    c[1:, 1:] = a.cumsum(axis=0).cumsum(axis=1)
    ys = np.arange(h)
    xs = np.arange(w)
    y0, y1 = np.maximum(ys - r, 0), np.minimum(ys + r, h - 1) + 1
    x0, x1 = np.maximum(xs - r, 0), np.minimum(xs + r, w - 1) + 1
    return (
        c[np.ix_(y1, x1)] - c[np.ix_(y0, x1)] - c[np.ix_(y1, x0)] + c[np.ix_(y0, x0)]
    )


def dist_t(a: Trajectory, b: Trajectory, frame: int, sigma: float) -> float:
    """Normalized translational motion difference at one time step."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    t0, t1 = joint_derivative_steps(a, b)
    if not (t0 <= frame <= t1):
        raise NoOverlap(f"frame {frame} not a joint step of {a.id}, {b.id}")
    dax, day = motion_derivative(a, frame)
    dbx, dby = motion_derivative(b, frame)
    return math.hypot(dax - dbx, day - dby) / sigma


def motion_distance(a: Trajectory, b: Trajectory, sigma_fn) -> float:
    """Maximum of dist_t over the joint lifetime.

    sigma_fn(frame, pos_a, pos_b) supplies the per-step normalizer.
    """
    t0, t1 = joint_derivative_steps(a, b)
    if t1 < t0:
        raise NoOverlap(f"trajectories {a.id}, {b.id} share no derivative step")
    best = 0.0
    for t in range(t0, t1 + 1):
        s = sigma_fn(t, a.position(t), b.position(t))
        best = max(best, dist_t(a, b, t, s))
    return best


def build_graph(ts: TrajectorySet, d_max=30.0, min_overlap=1) -> AffinityGraph:
    """Edges between trajectory pairs with enough temporal overlap that come
    spatially close; costs start at zero."""
    if d_max <= 0:
        raise ValueError("d_max must be positive")
    if min_overlap < 1:
        raise ValueError("min_overlap must be >= 1")
    trajs = ts.trajectories
    n = len(trajs)
    edges = []
    for i in range(n):
        a = trajs[i]
        for j in range(i + 1, n):
            b = trajs[j]
            t0 = max(a.start_frame, b.start_frame)
            t1 = min(a.end_frame, b.end_frame)
            if t1 - t0 < min_overlap:
                continue
            pa = a.positions[t0 - a.start_frame : t1 - a.start_frame + 1]
            pb = b.positions[t0 - b.start_frame : t1 - b.start_frame + 1]
            dmin = np.sqrt(((pa - pb) ** 2).sum(axis=1).min())
            if dmin <= d_max:
                edges.append((i, j))
    edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
    meta = np.array([tr.id for tr in trajs], dtype=np.int64)
    return AffinityGraph(n, edges, np.zeros(len(edges)), meta)


def translational_costs(graph: AffinityGraph, ts: TrajectorySet, flows,
                        window_radius=3, eps=0.5, theta=1.0) -> AffinityGraph:
    """Fill graph costs from the translational motion model.

    flows[t] is the forward field for the step t -> t+1; per-step sigma uses
    precomputed per-frame deviation maps (same values as sigma_t).
    """
    dev_maps = [flow_deviation_map(f, window_radius) for f in flows]
    by_id = ts.by_id()
    costs = np.empty(len(graph.edges))
    for k, (u, v) in enumerate(graph.edges):
        a, b = by_id[int(graph.node_meta[u])], by_id[int(graph.node_meta[v])]

        def sig(t, pa, pb):
            m = dev_maps[t]
            da = m[iround(pa[1]), iround(pa[0])]
            db = m[iround(pb[1]), iround(pb[0])]
            return eps + min(da, db)

        costs[k] = cost_from_distance(motion_distance(a, b, sig), theta)
    return graph.with_costs(costs)


def cost_from_distance(d, theta=1.0):
    """Linear attractive/repulsive mapping, clamped to +-COST_CLAMP."""
    return np.clip(theta - np.asarray(d, dtype=np.float64), -COST_CLAMP, COST_CLAMP)[()]


def cost_from_probability(p):
    """Logit of sameness from P(different motion), clamped to +-COST_CLAMP."""
    q = np.clip(np.asarray(p, dtype=np.float64), 1e-6, 1.0 - 1e-6)
    return np.clip(np.log((1.0 - q) / q), -COST_CLAMP, COST_CLAMP)[()]
