"""Container format tests: hand-encoded references and round trips."""

import struct

import numpy as np
import pytest

from moseg import flowio
from moseg.tracker import Trajectory, TrajectorySet
from moseg.affinity import AffinityGraph


def encode_flo(w, h, pairs):
    """Reference encoder, independent of the module under test."""
    buf = struct.pack("<fii", 202021.25, w, h)
    for u, v in pairs:
        buf += struct.pack("<ff", u, v)
    return buf


class TestFlo:
    def test_single_pixel_hand_encoded(self):
        buf = encode_flo(1, 1, [(1.5, -0.5)])
        assert len(buf) == 20
        f = flowio.read_flo(buf)
        assert (f.width, f.height) == (1, 1)
        assert f.data[0, 0, 0] == 1.5 and f.data[0, 0, 1] == -0.5

    def test_bad_magic(self):
        buf = struct.pack("<fii", 0.0, 1, 1) + struct.pack("<ff", 0, 0)
        with pytest.raises(flowio.BadMagic):
            flowio.read_flo(buf)

    def test_truncated(self):
        buf = encode_flo(2, 2, [(0, 0)] * 4)
        with pytest.raises(flowio.Truncated):
            flowio.read_flo(buf[:-4])
        with pytest.raises(flowio.Truncated):
            flowio.read_flo(buf[:8])

    def test_bad_dims(self):
        for w, h in ((0, 1), (-3, 4), (200_000, 1)):
            buf = struct.pack("<fii", 202021.25, w, h)
            with pytest.raises(flowio.BadDims):
                flowio.read_flo(buf)

    def test_trailing_bytes_reported(self):
        buf = encode_flo(1, 1, [(1.0, 2.0)]) + b"xx"
        with pytest.warns(UserWarning, match="trailing"):
            f = flowio.read_flo(buf)
        assert f.data[0, 0, 0] == 1.0

    def test_roundtrip_random(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            w, h = int(rng.integers(1, 12)), int(rng.integers(1, 12))
            data = rng.normal(0, 10, (h, w, 2)).astype(np.float32)
            f = flowio.FlowField(w, h, data)
            g = flowio.read_flo(flowio.write_flo(f))
            assert (g.width, g.height) == (w, h)
            assert np.array_equal(g.data, f.data)


class TestPnm:
    def test_pgm_hand_encoded(self):
        img = flowio.read_pnm(b"P5\n2 1\n255\n" + bytes([0, 255]))
        assert (img.width, img.height, img.channels) == (2, 1, 1)
        assert img.data[0, 0, 0] == 0 and img.data[0, 1, 0] == 255

    def test_ppm_hand_encoded(self):
        payload = bytes([1, 2, 3, 4, 5, 6])
        img = flowio.read_pnm(b"P6\n2 1\n255\n" + payload)
        assert img.channels == 3
        assert tuple(img.data[0, 0]) == (1, 2, 3)
        assert tuple(img.data[0, 1]) == (4, 5, 6)

    def test_header_comments_and_whitespace(self):
        img = flowio.read_pnm(b"P5 # tag\n# a comment\n 2\t1 # dims\n255\n" + bytes([7, 8]))
        assert img.width == 2 and img.data[0, 1, 0] == 8

    def test_p4_rejected(self):
        with pytest.raises(flowio.BadHeader):
            flowio.read_pnm(b"P4\n2 1\n255\n\x00")

    def test_maxval(self):
        with pytest.raises(flowio.UnsupportedMaxval):
            flowio.read_pnm(b"P5\n1 1\n127\n\x00")

    def test_truncated_payload(self):
        with pytest.raises(flowio.Truncated):
            flowio.read_pnm(b"P5\n2 2\n255\n" + bytes([1, 2, 3]))

    def test_roundtrip_random(self):
        rng = np.random.default_rng(8)
        for channels in (1, 3):
            for _ in range(25):
                w, h = int(rng.integers(1, 10)), int(rng.integers(1, 10))
                data = rng.integers(0, 256, (h, w, channels), dtype=np.uint8)
                img = flowio.Image(w, h, channels, data)
                back = flowio.read_pnm(flowio.write_pnm(img))
                assert np.array_equal(back.data, img.data)


class TestLabelMap:
    def test_single_pixel(self):
        lmap = flowio.LabelMap(1, 1, np.array([[3]], dtype=np.int32))
        pgm, ppm = flowio.write_labelmap(lmap, {3: (255, 0, 0)})
        assert flowio.read_pnm(pgm).data[0, 0, 0] == 3
        assert tuple(flowio.read_pnm(ppm).data[0, 0]) == (255, 0, 0)

    def test_void_is_white(self):
        lmap = flowio.LabelMap(2, 1, np.array([[0, 1]], dtype=np.int32))
        _, ppm = flowio.write_labelmap(lmap, {1: (10, 20, 30)})
        img = flowio.read_pnm(ppm)
        assert tuple(img.data[0, 0]) == (255, 255, 255)
        assert tuple(img.data[0, 1]) == (10, 20, 30)

    def test_label_overflow(self):
        lmap = flowio.LabelMap(1, 1, np.array([[256]], dtype=np.int32))
        with pytest.raises(flowio.LabelOverflow):
            flowio.write_labelmap(lmap, {256: (0, 0, 0)})

    def test_missing_palette(self):
        lmap = flowio.LabelMap(1, 1, np.array([[5]], dtype=np.int32))
        with pytest.raises(flowio.MissingPaletteEntry):
            flowio.write_labelmap(lmap, {4: (0, 0, 0)})

    def test_roundtrip(self):
        rng = np.random.default_rng(9)
        labels = rng.integers(0, 6, (5, 7)).astype(np.int32)
        lmap = flowio.LabelMap(7, 5, labels)
        pgm, _ = flowio.write_labelmap(lmap, flowio.default_palette(range(1, 6)))
        assert np.array_equal(flowio.read_labelmap(pgm).labels, labels)


def random_trajectory_set(rng, n_frames=10, w=32, h=24):
    trajs = []
    for tid in range(int(rng.integers(1, 8))):
        start = int(rng.integers(0, n_frames - 2))
        length = int(rng.integers(2, n_frames - start + 1))
        pts = np.column_stack([
            rng.uniform(0, w - 1, length),
            rng.uniform(0, h - 1, length),
        ])
        trajs.append(Trajectory(tid, start, pts))
    return TrajectorySet(trajs, n_frames, w, h)


class TestTextFormats:
    def test_trj_roundtrip(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            ts = random_trajectory_set(rng)
            back = flowio.read_trj(flowio.write_trj(ts))
            assert back.frame_count == ts.frame_count
            assert len(back.trajectories) == len(ts.trajectories)
            for a, b in zip(ts.trajectories, back.trajectories):
                assert a.id == b.id and a.start_frame == b.start_frame
                assert np.array_equal(a.positions, b.positions)

    def test_trj_bad_header(self):
        with pytest.raises(flowio.BadHeader):
            flowio.read_trj("TRJX 0 0\n")

    def test_spl_roundtrip(self):
        labels = {0: 2, 5: 1, 3: 7}
        assert flowio.read_spl(flowio.write_spl(labels)) == labels

    def test_spl_truncated(self):
        with pytest.raises(flowio.Truncated):
            flowio.read_spl("SPL1 3\n0 1\n")

    def test_grf_roundtrip(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            n = int(rng.integers(2, 9))
            pairs = [(u, v) for u in range(n) for v in range(u + 1, n)
                     if rng.random() < 0.6]
            edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
            costs = rng.normal(0, 2, len(edges))
            g = AffinityGraph(n, edges, costs, np.arange(n))
            back = flowio.read_grf(flowio.write_grf(g))
            assert back.node_count == n
            assert np.array_equal(back.edges, g.edges)
            assert np.array_equal(back.costs, g.costs)
