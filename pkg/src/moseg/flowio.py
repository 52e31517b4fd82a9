"""File formats used by the segmentation pipeline.

Binary containers: Middlebury .flo flow fields and binary PGM/PPM images
(also used for label maps).  Text containers: TRJ1 point trajectories,
SPL1 sparse per-trajectory labels, GRF1 affinity graphs.

Every reader/writer pair round-trips bit-exactly on the retained fields.
Parsers never read past the declared payload; trailing bytes are ignored
but reported through `warnings`.
"""

import struct
import warnings
from dataclasses import dataclass

import numpy as np

from ._util import fmt_float

FLO_MAGIC = 202021.25
MAX_DIM = 100_000


class FormatError(ValueError):
    """Base class for malformed container data."""


class BadMagic(FormatError):
    pass


class Truncated(FormatError):
    pass


class BadDims(FormatError):
    pass


class BadHeader(FormatError):
    pass


class UnsupportedMaxval(FormatError):
    pass


class LabelOverflow(FormatError):
    pass


class MissingPaletteEntry(FormatError):
    pass


# ---------------------------------------------------------------------------
# core value types


@dataclass(frozen=True)
class FlowField:
    """Dense per-frame displacement field, (u, v) in pixels/frame."""

    width: int
    height: int
    data: np.ndarray  # (height, width, 2) float32

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise BadDims(f"flow dims {self.width}x{self.height}")
        d = np.asarray(self.data, dtype=np.float32)
        if d.shape != (self.height, self.width, 2):
            raise BadDims(
                f"flow payload shape {d.shape}, expected "
                f"({self.height}, {self.width}, 2)"
            )
        object.__setattr__(self, "data", d)


@dataclass(frozen=True)
class Image:
    """8-bit gray (1 channel) or RGB (3 channel) raster."""

    width: int
    height: int
    channels: int
    data: np.ndarray  # (height, width, channels) uint8

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise BadDims(f"unsupported channel count {self.channels}")
        if self.width < 1 or self.height < 1:
            raise BadDims(f"image dims {self.width}x{self.height}")
        d = np.asarray(self.data, dtype=np.uint8)
        if d.shape != (self.height, self.width, self.channels):
            raise BadDims(
                f"image payload shape {d.shape}, expected "
                f"({self.height}, {self.width}, {self.channels})"
            )
        object.__setattr__(self, "data", d)


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel integer labels; 0 is reserved for unlabeled/void."""

    width: int
    height: int
    labels: np.ndarray  # (height, width) int32, all >= 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise BadDims(f"label map dims {self.width}x{self.height}")
        lab = np.asarray(self.labels, dtype=np.int32)
        if lab.shape != (self.height, self.width):
            raise BadDims(
                f"label payload shape {lab.shape}, expected "
                f"({self.height}, {self.width})"
            )
        if lab.min(initial=0) < 0:
            raise FormatError("negative label")
        object.__setattr__(self, "labels", lab)


def _warn_trailing(fmt: str, count: int) -> None:
    if count:
        warnings.warn(f"{fmt}: ignoring {count} trailing byte(s)", stacklevel=3)


# ---------------------------------------------------------------------------
# .flo


def read_flo(buf: bytes) -> FlowField:
    """Parse a little-endian Middlebury .flo container."""
    if len(buf) < 4:
        raise Truncated("flo: no magic")
    (magic,) = struct.unpack_from("<f", buf, 0)
    if magic != FLO_MAGIC:
        raise BadMagic(f"flo: magic {magic!r} != {FLO_MAGIC}")
    if len(buf) < 12:
        raise Truncated("flo: incomplete header")
    w, h = struct.unpack_from("<ii", buf, 4)
    if w <= 0 or h <= 0 or w > MAX_DIM or h > MAX_DIM:
        raise BadDims(f"flo: dims {w}x{h}")
    need = 12 + 8 * w * h
    if len(buf) < need:
        raise Truncated(f"flo: need {need} bytes, got {len(buf)}")
    _warn_trailing("flo", len(buf) - need)
    data = np.frombuffer(buf, dtype="<f4", count=2 * w * h, offset=12)
    return FlowField(w, h, data.reshape(h, w, 2).copy())


def write_flo(flow: FlowField) -> bytes:
    head = struct.pack("<fii", FLO_MAGIC, flow.width, flow.height)
    return head + np.ascontiguousarray(flow.data, dtype="<f4").tobytes()


# ---------------------------------------------------------------------------
# PGM / PPM


def _header_tokens(buf: bytes, start: int, count: int):
    """Read `count` whitespace/comment-separated header tokens.

    Returns (tokens, payload_offset).  The final token must be followed by
    exactly one whitespace byte, after which the raw payload begins.
    """
    toks = []
    i = start
    while len(toks) < count:
        if i >= len(buf):
            raise Truncated("pnm: header ended early")
        c = buf[i : i + 1]
        if c == b"#":
            while i < len(buf) and buf[i : i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(buf) and not buf[j : j + 1].isspace() and buf[j : j + 1] != b"#":
                j += 1
            toks.append(buf[i:j])
            i = j
    if i >= len(buf) or not buf[i : i + 1].isspace():
        raise BadHeader("pnm: missing separator after maxval")
    return toks, i + 1


def read_pnm(buf: bytes) -> Image:
    """Parse binary PGM (P5) or PPM (P6) with maxval 255."""
    if len(buf) < 2:
        raise Truncated("pnm: no tag")
    tag = buf[:2]
    if tag == b"P5":
        channels = 1
    elif tag == b"P6":
        channels = 3
    else:
        raise BadHeader(f"pnm: unsupported tag {tag!r}")
    toks, pos = _header_tokens(buf, 2, 3)
    try:
        w, h, maxval = (int(t) for t in toks)
    except ValueError:
        raise BadHeader(f"pnm: non-numeric header fields {toks!r}") from None
    if maxval != 255:
        raise UnsupportedMaxval(f"pnm: maxval {maxval}")
    if w <= 0 or h <= 0 or w > MAX_DIM or h > MAX_DIM:
        raise BadHeader(f"pnm: dims {w}x{h}")
    need = pos + w * h * channels
    if len(buf) < need:
        raise Truncated(f"pnm: need {need} bytes, got {len(buf)}")
    _warn_trailing("pnm", len(buf) - need)
    data = np.frombuffer(buf, dtype=np.uint8, count=w * h * channels, offset=pos)
    return Image(w, h, channels, data.reshape(h, w, channels).copy())


def write_pnm(img: Image) -> bytes:
    tag = b"P5" if img.channels == 1 else b"P6"
    head = tag + b"\n%d %d\n255\n" % (img.width, img.height)
    return head + np.ascontiguousarray(img.data).tobytes()


# ---------------------------------------------------------------------------
# label maps


def write_labelmap(lmap: LabelMap, palette: dict) -> tuple[bytes, bytes]:
    """Emit (PGM with raw indices, PPM with palette colors).

    Label 0 always renders white in the PPM; every other present label
    must have a palette entry.
    """
    labels = lmap.labels
    if labels.max(initial=0) > 255:
        raise LabelOverflow(f"label {int(labels.max())} does not fit a PGM byte")
    lut = np.zeros((256, 3), dtype=np.uint8)
    lut[0] = (255, 255, 255)
    for lab in np.unique(labels):
        lab = int(lab)
        if lab == 0:
            continue
        if lab not in palette:
            raise MissingPaletteEntry(f"no color for label {lab}")
        lut[lab] = palette[lab]
    pgm = write_pnm(Image(lmap.width, lmap.height, 1, labels.astype(np.uint8)[..., None]))
    ppm = write_pnm(Image(lmap.width, lmap.height, 3, lut[labels]))
    return pgm, ppm


def read_labelmap(buf: bytes) -> LabelMap:
    img = read_pnm(buf)
    if img.channels != 1:
        raise BadHeader("label maps are single channel (PGM)")
    return LabelMap(img.width, img.height, img.data[..., 0].astype(np.int32))


def default_palette(labels) -> dict:
    """Deterministic distinct colors (golden-angle hues) for the given labels."""
    palette = {}
    for lab in sorted(int(l) for l in labels):
        if lab == 0:
            continue
        hue = (lab * 0.6180339887498949) % 1.0
        palette[lab] = _hsv_byte(hue, 0.75, 0.95)
    return palette


def _hsv_byte(h, s, v):
    i = int(h * 6.0) % 6
    f = h * 6.0 - int(h * 6.0)
    p, q, t = v * (1 - s), v * (1 - f * s), v * (1 - (1 - f) * s)
    r, g, b = [
        (v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q),
    ][i]
    return int(r * 255), int(g * 255), int(b * 255)


# ---------------------------------------------------------------------------
# TRJ1 trajectories


def write_trj(ts) -> str:
    """Serialize a TrajectorySet to TRJ1 text."""
    lines = [f"TRJ1 {len(ts.trajectories)} {ts.frame_count}"]
    for tr in ts.trajectories:
        lines.append(f"{tr.id} {tr.start_frame} {len(tr.positions)}")
        for x, y in tr.positions:
            lines.append(f"{fmt_float(x)} {fmt_float(y)}")
    return "\n".join(lines) + "\n"


def read_trj(text: str, width=None, height=None, sampling_step=8):
    """Parse TRJ1 text.  Frame dimensions are not stored in the container."""
    from .tracker import Trajectory, TrajectorySet

    lines = text.splitlines()
    if not lines:
        raise Truncated("trj: empty")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "TRJ1":
        raise BadHeader(f"trj: bad header {lines[0]!r}")
    n_traj, n_frames = int(head[1]), int(head[2])
    trajectories = []
    i = 1
    for _ in range(n_traj):
        if i >= len(lines):
            raise Truncated("trj: missing trajectory header")
        tid, start, length = (int(v) for v in lines[i].split())
        i += 1
        if i + length > len(lines):
            raise Truncated(f"trj: trajectory {tid} truncated")
        pts = np.empty((length, 2), dtype=np.float64)
        for j in range(length):
            sx, sy = lines[i + j].split()
            pts[j] = (float(sx), float(sy))
        i += length
        trajectories.append(Trajectory(tid, start, pts))
    return TrajectorySet(trajectories, n_frames, width, height, sampling_step)


# ---------------------------------------------------------------------------
# SPL1 sparse labels


def write_spl(labels: dict) -> str:
    lines = [f"SPL1 {len(labels)}"]
    for tid in sorted(labels):
        lines.append(f"{tid} {labels[tid]}")
    return "\n".join(lines) + "\n"


def read_spl(text: str) -> dict:
    lines = text.splitlines()
    if not lines:
        raise Truncated("spl: empty")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "SPL1":
        raise BadHeader(f"spl: bad header {lines[0]!r}")
    n = int(head[1])
    if len(lines) < n + 1:
        raise Truncated(f"spl: expected {n} entries, got {len(lines) - 1}")
    out = {}
    for line in lines[1 : n + 1]:
        tid, lab = (int(v) for v in line.split())
        out[tid] = lab
    return out


# ---------------------------------------------------------------------------
# GRF1 affinity graphs


def write_grf(graph) -> str:
    lines = [f"GRF1 {graph.node_count} {len(graph.edges)}"]
    for (u, v), c in zip(graph.edges, graph.costs):
        lines.append(f"{u} {v} {fmt_float(c)}")
    return "\n".join(lines) + "\n"


def read_grf(text: str):
    from .affinity import AffinityGraph

    lines = text.splitlines()
    if not lines:
        raise Truncated("grf: empty")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "GRF1":
        raise BadHeader(f"grf: bad header {lines[0]!r}")
    n_nodes, n_edges = int(head[1]), int(head[2])
    if len(lines) < n_edges + 1:
        raise Truncated(f"grf: expected {n_edges} edges, got {len(lines) - 1}")
    edges = np.empty((n_edges, 2), dtype=np.int64)
    costs = np.empty(n_edges, dtype=np.float64)
    for i, line in enumerate(lines[1 : n_edges + 1]):
        su, sv, sc = line.split()
        edges[i] = (int(su), int(sv))
        costs[i] = float(sc)
    return AffinityGraph(n_nodes, edges, costs, np.arange(n_nodes, dtype=np.int64))
