"""Siamese GRU affinity model for trajectory pairs.

Two weight-shared GRU legs embed the motion derivatives of a trajectory
pair; per time step the squared distance between the hidden states forms
an N-vector that a small fully-connected head squashes to the probability
that the pair moves differently (label 1) rather than together (label 0).

Training is plain SGD with momentum on an MSE loss; all gradients are
hand-derived (backpropagation through time over the shared legs) and are
validated against central finite differences in the test suite.
"""

from dataclasses import dataclass

import numpy as np

from ._util import fmt_float, iround
from .affinity import AffinityGraph, NoOverlap, joint_derivative_steps
from .flowio import BadHeader, Truncated
from .tracker import Trajectory, TrajectorySet


class EmptyTrainingSet(ValueError):
    pass


class NoUsablePairs(ValueError):
    pass


_PARAM_ORDER = (
    "w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h",
    "fc1_w", "fc1_b", "fc2_w", "fc2_b",
)
_GRUP_NAMES = (
    "W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h",
    "fc1_w", "fc1_b", "fc2_w", "fc2_b",
)


@dataclass
class GruParams:
    """Shared parameters of both Siamese legs plus the two-layer head."""

    w_z: np.ndarray  # (h, input_dim)
    u_z: np.ndarray  # (h, h)
    b_z: np.ndarray  # (h,)
    w_r: np.ndarray
    u_r: np.ndarray
    b_r: np.ndarray
    w_h: np.ndarray
    u_h: np.ndarray
    b_h: np.ndarray
    fc1_w: np.ndarray  # (k, N)
    fc1_b: np.ndarray  # (k,)
    fc2_w: np.ndarray  # (1, k)
    fc2_b: np.ndarray  # (1,)

    def __post_init__(self):
        for name in _PARAM_ORDER:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))

    @property
    def hidden_dim(self) -> int:
        return self.w_z.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_z.shape[1]

    @property
    def n_steps(self) -> int:
        return self.fc1_w.shape[1]

    @property
    def head_width(self) -> int:
        return self.fc1_w.shape[0]

    def arrays(self):
        return [(name, getattr(self, name)) for name in _PARAM_ORDER]

    def copy(self) -> "GruParams":
        return GruParams(*(getattr(self, n).copy() for n in _PARAM_ORDER))

    def zeros_like(self) -> "GruParams":
        return GruParams(*(np.zeros_like(getattr(self, n)) for n in _PARAM_ORDER))

    @classmethod
    def init_random(cls, hidden_dim=2, n_steps=25, head_width=8, input_dim=2,
                    seed=0, scale=0.1) -> "GruParams":
        rng = np.random.default_rng(seed)
        h, k, n, d = hidden_dim, head_width, n_steps, input_dim
        shapes = [
            (h, d), (h, h), (h,), (h, d), (h, h), (h,), (h, d), (h, h), (h,),
            (k, n), (k,), (1, k), (1,),
        ]
        return cls(*(rng.uniform(-scale, scale, s) for s in shapes))


@dataclass
class AlignedPair:
    """Fixed-length derivative sequences for one trajectory pair."""

    xa: np.ndarray  # (N, 2)
    xb: np.ndarray  # (N, 2)
    label: float    # 0 = same motion pattern, 1 = different

    def __post_init__(self):
        self.xa = np.asarray(self.xa, dtype=np.float64)
        self.xb = np.asarray(self.xb, dtype=np.float64)
        if self.xa.shape != self.xb.shape or self.xa.ndim != 2:
            raise ValueError("aligned sequences must share shape (N, 2)")


def align_pair(a: Trajectory, b: Trajectory, n_steps: int):
    """Cut or pad the joint derivative sequences to exactly n_steps.

    Shorter joint lifetimes repeat each leg's final joint derivative; longer
    ones keep an n_steps window centered on the step of maximum motion
    difference (ties earliest), shifted to stay inside the joint lifetime.
    """
    t0, t1 = joint_derivative_steps(a, b)
    if t1 < t0:
        raise NoOverlap(f"trajectories {a.id}, {b.id} share no derivative step")
    da = a.derivatives()[t0 - a.start_frame : t1 - a.start_frame + 1]
    db = b.derivatives()[t0 - b.start_frame : t1 - b.start_frame + 1]
    joint = len(da)
    if joint < n_steps:
        pad = n_steps - joint
        xa = np.vstack([da, np.repeat(da[-1:], pad, axis=0)])
        xb = np.vstack([db, np.repeat(db[-1:], pad, axis=0)])
        return xa, xb
    if joint == n_steps:
        return da.copy(), db.copy()
    d = np.linalg.norm(da - db, axis=1)
    t_star = int(np.argmax(d))  # first maximum = earliest tie
    before = (n_steps - 1 + 1) // 2
    start = min(max(t_star - before, 0), joint - n_steps)
    return da[start : start + n_steps].copy(), db[start : start + n_steps].copy()


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def gru_step(x, h_prev, params: GruParams):
    """One standard GRU cell update for a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    z = _sigmoid(params.w_z @ x + params.u_z @ h_prev + params.b_z)
    r = _sigmoid(params.w_r @ x + params.u_r @ h_prev + params.b_r)
    hc = np.tanh(params.w_h @ x + params.u_h @ (r * h_prev) + params.b_h)
    return (1.0 - z) * h_prev + z * hc


def _forward_batch(xa, xb, params: GruParams):
    """Vectorized Siamese forward pass for stacked pairs.

    xa, xb: (B, N, 2).  Returns (prob (B,), cache).
    """
    batch, n_steps, _ = xa.shape
    h = params.hidden_dim
    legs = []
    hidden = {}
    for name, xs in (("a", xa), ("b", xb)):
        h_t = np.zeros((batch, h))
        steps = []
        hs = np.empty((n_steps, batch, h))
        for t in range(n_steps):
            x = xs[:, t, :]
            z = _sigmoid(x @ params.w_z.T + h_t @ params.u_z.T + params.b_z)
            r = _sigmoid(x @ params.w_r.T + h_t @ params.u_r.T + params.b_r)
            hc = np.tanh(x @ params.w_h.T + (r * h_t) @ params.u_h.T + params.b_h)
            h_new = (1.0 - z) * h_t + z * hc
            steps.append((x, h_t, z, r, hc))
            hs[t] = h_new
            h_t = h_new
        legs.append(steps)
        hidden[name] = hs
    diff = hidden["a"] - hidden["b"]                  # (N, B, h)
    dist = (diff ** 2).sum(axis=2).T                  # (B, N)
    a1 = dist @ params.fc1_w.T + params.fc1_b         # (B, k)
    r1 = np.maximum(a1, 0.0)
    a2 = r1 @ params.fc2_w.T + params.fc2_b           # (B, 1)
    prob = _sigmoid(a2[:, 0])
    cache = {
        "legs": legs, "hidden": hidden, "diff": diff, "dist": dist,
        "a1": a1, "r1": r1, "prob": prob,
    }
    return prob, cache


def siamese_forward(pair: AlignedPair, params: GruParams):
    """Probability that the pair moves differently, plus the backprop cache."""
    prob, cache = _forward_batch(pair.xa[None], pair.xb[None], params)
    return float(prob[0]), cache


def _bptt_leg(steps, dh_ext, params: GruParams, grads: GruParams):
    """Backpropagate one leg through time, accumulating shared gradients.

    dh_ext[t] is the external gradient arriving at the hidden state of step
    t; returns nothing (grads are accumulated in place).
    """
    batch = dh_ext.shape[1]
    dh = np.zeros((batch, params.hidden_dim))
    for t in reversed(range(len(steps))):
        x, h_prev, z, r, hc = steps[t]
        dh = dh + dh_ext[t]
        dz = dh * (hc - h_prev)
        dhc = dh * z
        dh_prev = dh * (1.0 - z)
        dahc = dhc * (1.0 - hc ** 2)
        drh = dahc @ params.u_h          # gradient at (r * h_prev)
        dr = drh * h_prev
        dh_prev = dh_prev + drh * r
        daz = dz * z * (1.0 - z)
        dar = dr * r * (1.0 - r)
        grads.w_h += dahc.T @ x
        grads.u_h += dahc.T @ (r * h_prev)
        grads.b_h += dahc.sum(axis=0)
        grads.w_z += daz.T @ x
        grads.u_z += daz.T @ h_prev
        grads.b_z += daz.sum(axis=0)
        grads.w_r += dar.T @ x
        grads.u_r += dar.T @ h_prev
        grads.b_r += dar.sum(axis=0)
        dh = dh_prev + daz @ params.u_z + dar @ params.u_r


def loss_and_gradients(pairs, params: GruParams, labels=None):
    """Mean squared error over the batch and its exact analytic gradient."""
    if len(pairs) == 0:
        raise EmptyTrainingSet("empty batch")
    xa = np.stack([p.xa for p in pairs])
    xb = np.stack([p.xb for p in pairs])
    y = np.asarray([p.label for p in pairs] if labels is None else labels,
                   dtype=np.float64)
    prob, cache = _forward_batch(xa, xb, params)
    batch = len(pairs)
    err = prob - y
    mse = float((err ** 2).mean())

    grads = params.zeros_like()
    dprob = 2.0 * err / batch
    da2 = dprob * prob * (1.0 - prob)                 # (B,)
    grads.fc2_w += (da2 @ cache["r1"])[None, :]
    grads.fc2_b += np.array([da2.sum()])
    dr1 = np.outer(da2, params.fc2_w[0])              # (B, k)
    da1 = dr1 * (cache["a1"] > 0)
    grads.fc1_w += da1.T @ cache["dist"]
    grads.fc1_b += da1.sum(axis=0)
    ddist = da1 @ params.fc1_w                        # (B, N)
    # distance layer: dist_t = sum_i (ha_ti - hb_ti)^2
    dh_a = 2.0 * ddist.T[:, :, None] * cache["diff"]  # (N, B, h)
    _bptt_leg(cache["legs"][0], dh_a, params, grads)
    _bptt_leg(cache["legs"][1], -dh_a, params, grads)
    return mse, grads


def predict(pairs, params: GruParams) -> np.ndarray:
    """Probabilities of "different motion" for a list of aligned pairs."""
    if len(pairs) == 0:
        return np.zeros(0)
    xa = np.stack([p.xa for p in pairs])
    xb = np.stack([p.xb for p in pairs])
    prob, _ = _forward_batch(xa, xb, params)
    return prob


def train(pairs, labels=None, epochs=3, lr=0.001, batch=256, seed=0,
          momentum=0.9, hidden_dim=2, head_width=8):
    """SGD-with-momentum training from a seeded uniform [-0.1, 0.1] init.

    Returns (params, per-epoch losses); the reported loss is the full-set
    MSE evaluated after each epoch's updates.
    """
    if len(pairs) == 0:
        raise EmptyTrainingSet("no training pairs")
    n_steps = pairs[0].xa.shape[0]
    if labels is not None:
        pairs = [AlignedPair(p.xa, p.xb, l) for p, l in zip(pairs, labels)]
    params = GruParams.init_random(hidden_dim, n_steps, head_width,
                                   input_dim=pairs[0].xa.shape[1], seed=seed)
    velocity = params.zeros_like()
    rng = np.random.default_rng(seed)
    losses = []
    for _ in range(epochs):
        order = rng.permutation(len(pairs))
        for lo in range(0, len(pairs), batch):
            chunk = [pairs[i] for i in order[lo : lo + batch]]
            _, grads = loss_and_gradients(chunk, params)
            for name in _PARAM_ORDER:
                v = getattr(velocity, name)
                v *= momentum
                v += getattr(grads, name)
                getattr(params, name)[...] -= lr * v
        epoch_loss, _ = loss_and_gradients(pairs, params)
        losses.append(epoch_loss)
    return params, losses


# ---------------------------------------------------------------------------
# training pairs from ground truth


def trajectory_gt_label(tr: Trajectory, gt_maps: dict):
    """Ground-truth region of a trajectory, or None when it is unreliable.

    Frames without ground truth (or with void under the point) contribute
    nothing; touching two different regions disqualifies the trajectory.
    """
    label = None
    for t in range(tr.start_frame, tr.end_frame + 1):
        gm = gt_maps.get(t)
        if gm is None:
            continue
        x, y = tr.position(t)
        v = int(gm.labels[iround(y), iround(x)])
        if v == 0:
            continue
        if label is None:
            label = v
        elif label != v:
            return None
    return label


def sample_training_pairs(graph: AffinityGraph, ts: TrajectorySet,
                          gt_maps: dict, seed=0, n_steps=25):
    """Balanced, gt-labeled aligned pairs from the graph's edges.

    Edge label 0 when both trajectories share their gt region, 1 otherwise;
    the majority class is subsampled (seeded) to equalize counts.
    """
    by_id = ts.by_id()
    node_label = {}
    for node in range(graph.node_count):
        node_label[node] = trajectory_gt_label(by_id[int(graph.node_meta[node])],
                                               gt_maps)
    same, diff = [], []
    for (u, v) in graph.edges:
        lu, lv = node_label[int(u)], node_label[int(v)]
        if lu is None or lv is None:
            continue
        (same if lu == lv else diff).append((int(u), int(v)))
    if not same or not diff:
        raise NoUsablePairs(
            f"cannot balance: {len(same)} same-label vs {len(diff)} different-label edges"
        )
    rng = np.random.default_rng(seed)
    m = min(len(same), len(diff))
    if len(same) > m:
        same = [same[i] for i in sorted(rng.choice(len(same), m, replace=False))]
    if len(diff) > m:
        diff = [diff[i] for i in sorted(rng.choice(len(diff), m, replace=False))]
    pairs = []
    for edges, label in ((same, 0.0), (diff, 1.0)):
        for (u, v) in edges:
            a = by_id[int(graph.node_meta[u])]
            b = by_id[int(graph.node_meta[v])]
            xa, xb = align_pair(a, b, n_steps)
            pairs.append(AlignedPair(xa, xb, label))
    return pairs


def make_separable_pairs(n_pairs=2000, n_steps=25, seed=0, gap_lo=40.0,
                         gap_hi=80.0):
    """Linearly separable pair set: identical constant-velocity derivative
    sequences (label 0) vs. opposite velocities with a derivative gap of
    gap_lo..gap_hi pixels/frame (label 1).

    Large gaps saturate both embedding legs in opposite directions, which
    keeps the task learnable within the few SGD updates that the default
    epochs/batch/lr allow on a 2000-pair set.
    """
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(n_pairs):
        angle = rng.uniform(0.0, 2.0 * np.pi)
        speed = rng.uniform(gap_lo, gap_hi) / 2.0
        v = speed * np.array([np.cos(angle), np.sin(angle)])
        seq = np.tile(v, (n_steps, 1))
        if i % 2 == 0:
            pairs.append(AlignedPair(seq, seq.copy(), 0.0))
        else:
            pairs.append(AlignedPair(seq, -seq, 1.0))
    return pairs


# ---------------------------------------------------------------------------
# GRUP1 checkpoint format


def write_grup(params: GruParams) -> str:
    lines = [
        f"GRUP1 {params.input_dim} {params.hidden_dim} "
        f"{params.n_steps} {params.head_width}"
    ]
    for name, (_, arr) in zip(_GRUP_NAMES, params.arrays()):
        dims = " ".join(str(d) for d in arr.shape)
        lines.append(f"{name} {arr.ndim} {dims}")
        lines.append(" ".join(fmt_float(v) for v in arr.ravel()))
    return "\n".join(lines) + "\n"


def read_grup(text: str) -> GruParams:
    lines = text.splitlines()
    if not lines:
        raise Truncated("grup: empty")
    head = lines[0].split()
    if len(head) != 5 or head[0] != "GRUP1":
        raise BadHeader(f"grup: bad header {lines[0]!r}")
    arrays = []
    i = 1
    for name in _GRUP_NAMES:
        if i + 1 >= len(lines) + 1 or i >= len(lines):
            raise Truncated(f"grup: missing tensor {name}")
        meta = lines[i].split()
        if meta[0] != name:
            raise BadHeader(f"grup: expected tensor {name}, found {meta[0]!r}")
        ndim = int(meta[1])
        shape = tuple(int(v) for v in meta[2 : 2 + ndim])
        if i + 1 >= len(lines):
            raise Truncated(f"grup: missing values for {name}")
        vals = np.array([float(v) for v in lines[i + 1].split()], dtype=np.float64)
        if vals.size != int(np.prod(shape)):
            raise Truncated(f"grup: wrong value count for {name}")
        arrays.append(vals.reshape(shape))
        i += 2
    return GruParams(*arrays)
