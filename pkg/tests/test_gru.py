"""Siamese GRU tests: alignment rules, cell math, gradient correctness."""

import numpy as np
import pytest

from moseg import gru
from moseg.affinity import NoOverlap
from moseg.flowio import LabelMap
from moseg.tracker import Trajectory, TrajectorySet
from moseg.affinity import build_graph


def traj_from_derivatives(tid, start, p0, derivs):
    pts = [np.asarray(p0, dtype=np.float64)]
    for d in derivs:
        pts.append(pts[-1] + d)
    return Trajectory(tid, start, np.array(pts))


class TestAlignPair:
    def test_exact_fit(self):
        a = traj_from_derivatives(0, 0, (0, 0), [(1, 0), (2, 0), (3, 0)])
        b = traj_from_derivatives(1, 0, (5, 5), [(0, 1), (0, 2), (0, 3)])
        xa, xb = gru.align_pair(a, b, 3)
        assert np.array_equal(xa, [[1, 0], [2, 0], [3, 0]])
        assert np.array_equal(xb, [[0, 1], [0, 2], [0, 3]])

    def test_padding_repeats_final_joint_derivative(self):
        a = traj_from_derivatives(0, 0, (0, 0), [(1, 0), (2, 0)])
        b = traj_from_derivatives(1, 0, (5, 5), [(0, 0), (1, 1)])
        xa, xb = gru.align_pair(a, b, 4)
        assert np.array_equal(xa, [[1, 0], [2, 0], [2, 0], [2, 0]])
        assert np.array_equal(xb, [[0, 0], [1, 1], [1, 1], [1, 1]])

    def test_window_centered_on_max_motion_distance(self):
        # 50 joint steps; the difference spikes at step 30, so the window of
        # 25 covers joint steps 18..42 (12 both sides of the peak)
        marks = [(0.01 * t, 0.0) for t in range(50)]
        a = traj_from_derivatives(0, 0, (0, 0), marks)
        spike = [(0.0, 0.0)] * 50
        spike[30] = (100.0, 0.0)
        b = traj_from_derivatives(1, 0, (0, 30), spike)
        xa, xb = gru.align_pair(a, b, 25)
        assert xa.shape == (25, 2)
        assert np.allclose(xa[:, 0], 0.01 * np.arange(18, 43))
        assert xb[12, 0] == 100.0  # the spike sits at the window center

    def test_window_shifts_at_boundary(self):
        spike = [(0.0, 0.0)] * 30
        spike[2] = (50.0, 0.0)
        a = traj_from_derivatives(0, 0, (0, 0), [(0.1 * t, 0) for t in range(30)])
        b = traj_from_derivatives(1, 0, (0, 20), spike)
        xa, _ = gru.align_pair(a, b, 25)
        # t* = 2 would start at -10; clamped to 0
        assert np.allclose(xa[:, 0], 0.1 * np.arange(0, 25))

    def test_tie_breaks_earliest(self):
        d = [(0.0, 0.0)] * 40
        d[10] = d[25] = (7.0, 0.0)
        a = traj_from_derivatives(0, 0, (0, 0), [(0.01 * t, 0) for t in range(40)])
        b = traj_from_derivatives(1, 0, (0, 30), d)
        xa, _ = gru.align_pair(a, b, 25)
        # centered on the earliest peak t*=10 -> window clamps to 0..24
        assert np.allclose(xa[:, 0], 0.01 * np.arange(0, 25))

    def test_no_overlap(self):
        a = traj_from_derivatives(0, 0, (0, 0), [(1, 0)])
        b = traj_from_derivatives(1, 5, (0, 0), [(1, 0)])
        with pytest.raises(NoOverlap):
            gru.align_pair(a, b, 4)


class TestGruStep:
    def test_zero_params_halve_state(self):
        p = GruParamsZero(hidden=3)
        h_prev = np.array([0.4, -0.8, 1.0])
        out = gru.gru_step(np.array([5.0, -2.0]), h_prev, p)
        assert np.allclose(out, 0.5 * h_prev)

    def test_zero_fixed_point(self):
        p = GruParamsZero(hidden=2)
        out = gru.gru_step(np.array([1.0, 1.0]), np.zeros(2), p)
        assert np.allclose(out, 0.0)

    def test_bounded_from_zero_start(self):
        rng = np.random.default_rng(0)
        p = gru.GruParams.init_random(hidden_dim=4, n_steps=6, head_width=3, seed=1)
        h = np.zeros(4)
        for _ in range(50):
            h = gru.gru_step(rng.normal(0, 5, 2), h, p)
            assert np.all(np.abs(h) < 1.0)


def GruParamsZero(hidden=2, n_steps=5, head=3):
    p = gru.GruParams.init_random(hidden, n_steps, head, seed=0)
    return p.zeros_like()


class TestSiameseForward:
    def test_identical_legs_give_zero_distances(self):
        p = gru.GruParams.init_random(2, 5, 3, seed=2)
        x = np.random.default_rng(3).normal(0, 1, (5, 2))
        pair = gru.AlignedPair(x, x.copy(), 0)
        prob, cache = gru.siamese_forward(pair, p)
        assert np.allclose(cache["dist"], 0.0)
        # head output for the zero vector, computed by hand
        a1 = p.fc1_b
        a2 = p.fc2_w[0] @ np.maximum(a1, 0) + p.fc2_b[0]
        assert prob == pytest.approx(1.0 / (1.0 + np.exp(-a2)))

    def test_zero_head_gives_half(self):
        p = gru.GruParams.init_random(2, 4, 3, seed=4)
        p.fc1_w[...] = 0
        p.fc1_b[...] = 0
        p.fc2_w[...] = 0
        p.fc2_b[...] = 0
        rng = np.random.default_rng(5)
        pair = gru.AlignedPair(rng.normal(0, 2, (4, 2)), rng.normal(0, 2, (4, 2)), 1)
        prob, _ = gru.siamese_forward(pair, p)
        assert prob == 0.5

    def test_leg_swap_invariance(self):
        p = gru.GruParams.init_random(3, 6, 4, seed=6)
        rng = np.random.default_rng(7)
        for _ in range(10):
            xa, xb = rng.normal(0, 2, (2, 6, 2))
            pa, _ = gru.siamese_forward(gru.AlignedPair(xa, xb, 0), p)
            pb, _ = gru.siamese_forward(gru.AlignedPair(xb, xa, 0), p)
            assert pa == pytest.approx(pb, abs=1e-12)

    def test_prob_strictly_inside_unit_interval(self):
        p = gru.GruParams.init_random(2, 5, 3, seed=8)
        rng = np.random.default_rng(9)
        for _ in range(20):
            pair = gru.AlignedPair(rng.normal(0, 3, (5, 2)),
                                   rng.normal(0, 3, (5, 2)), 1)
            prob, _ = gru.siamese_forward(pair, p)
            assert 0.0 < prob < 1.0


def finite_difference_grads(pairs, params, eps=1e-4):
    """Independent oracle: central differences on every parameter entry."""
    num = params.zeros_like()
    for name, arr in params.arrays():
        garr = getattr(num, name)
        flat = arr.ravel()
        gflat = garr.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp, _ = gru.loss_and_gradients(pairs, params)
            flat[i] = orig - eps
            lm, _ = gru.loss_and_gradients(pairs, params)
            flat[i] = orig
            gflat[i] = (lp - lm) / (2 * eps)
    return num


def assert_grads_close(analytic, numeric, tol=1e-4):
    for (name, a), (_, n) in zip(analytic.arrays(), numeric.arrays()):
        rel = np.abs(a - n) / np.maximum(1.0, np.abs(a))
        assert rel.max() < tol, f"{name}: max rel err {rel.max():.2e}"


class TestGradients:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(10)
        for draw in range(3):
            p = gru.GruParams.init_random(2, 5, 3, seed=100 + draw)
            pairs = [
                gru.AlignedPair(rng.normal(0, 2, (5, 2)),
                                rng.normal(0, 2, (5, 2)),
                                float(rng.integers(0, 2)))
                for _ in range(3)
            ]
            _, grads = gru.loss_and_gradients(pairs, p)
            numeric = finite_difference_grads(pairs, p)
            assert_grads_close(grads, numeric)

    def test_zero_loss_zero_gradient_at_targets(self):
        p = gru.GruParams.init_random(2, 4, 3, seed=11)
        rng = np.random.default_rng(12)
        pairs = [gru.AlignedPair(rng.normal(0, 1, (4, 2)),
                                 rng.normal(0, 1, (4, 2)), 0) for _ in range(4)]
        probs = gru.predict(pairs, p)
        relabeled = [gru.AlignedPair(q.xa, q.xb, float(pr))
                     for q, pr in zip(pairs, probs)]
        loss, grads = gru.loss_and_gradients(relabeled, p)
        assert loss == pytest.approx(0.0, abs=1e-18)
        for _, arr in grads.arrays():
            assert np.allclose(arr, 0.0)

    def test_batch_duplication_invariance(self):
        p = gru.GruParams.init_random(2, 5, 3, seed=13)
        rng = np.random.default_rng(14)
        pairs = [gru.AlignedPair(rng.normal(0, 1, (5, 2)),
                                 rng.normal(0, 1, (5, 2)),
                                 float(rng.integers(0, 2))) for _ in range(3)]
        l1, g1 = gru.loss_and_gradients(pairs, p)
        l2, g2 = gru.loss_and_gradients(pairs + pairs, p)
        assert l1 == pytest.approx(l2)
        for (_, a), (_, b) in zip(g1.arrays(), g2.arrays()):
            assert np.allclose(a, b)


class TestTrain:
    def test_zero_lr_keeps_parameters(self):
        pairs = gru.make_separable_pairs(40, n_steps=6, seed=15)
        params, _ = gru.train(pairs, epochs=2, lr=0.0, batch=16, seed=15)
        reference = gru.GruParams.init_random(2, 6, 8, seed=15)
        for (_, a), (_, b) in zip(params.arrays(), reference.arrays()):
            assert np.array_equal(a, b)

    def test_seed_determinism(self):
        pairs = gru.make_separable_pairs(60, n_steps=6, seed=16)
        p1, l1 = gru.train(pairs, epochs=2, lr=0.01, batch=16, seed=7)
        p2, l2 = gru.train(pairs, epochs=2, lr=0.01, batch=16, seed=7)
        assert l1 == l2
        for (_, a), (_, b) in zip(p1.arrays(), p2.arrays()):
            assert np.array_equal(a, b)

    def test_empty_training_set(self):
        with pytest.raises(gru.EmptyTrainingSet):
            gru.train([], epochs=1)


class TestSampleTrainingPairs:
    def make_scene(self):
        # two gt regions split at x = 8; four tracks in each
        gt = np.ones((16, 16), dtype=np.int32)
        gt[:, 8:] = 2
        gt_maps = {t: LabelMap(16, 16, gt) for t in range(4)}
        trajs = []
        tid = 0
        for x in (1, 3, 5, 6):
            trajs.append(Trajectory(tid, 0, np.array([[x, y] for y in (2, 3, 4, 5)],
                                                     dtype=np.float64)))
            tid += 1
        for x in (10, 12, 13, 15):
            trajs.append(Trajectory(tid, 0, np.array([[x, y] for y in (2, 3, 4, 5)],
                                                     dtype=np.float64)))
            tid += 1
        ts = TrajectorySet(trajs, 4, 16, 16)
        return ts, gt_maps

    def test_balanced_counts(self):
        ts, gt_maps = self.make_scene()
        graph = build_graph(ts, d_max=30)
        pairs = gru.sample_training_pairs(graph, ts, gt_maps, seed=0, n_steps=5)
        labels = [p.label for p in pairs]
        assert labels.count(0.0) == labels.count(1.0) > 0

    def test_region_crossing_trajectory_excluded(self):
        ts, gt_maps = self.make_scene()
        crosser = Trajectory(99, 0, np.array([[6, 8], [10, 8], [11, 8], [12, 8]],
                                             dtype=np.float64))
        ts2 = TrajectorySet(ts.trajectories + [crosser], 4, 16, 16)
        assert gru.trajectory_gt_label(crosser, gt_maps) is None
        graph = build_graph(ts2, d_max=30)
        pairs = gru.sample_training_pairs(graph, ts2, gt_maps, seed=0, n_steps=5)
        # the crosser contributes nothing: same counts as without it
        base = gru.sample_training_pairs(build_graph(ts, d_max=30), ts, gt_maps,
                                         seed=0, n_steps=5)
        assert len(pairs) == len(base)

    def test_single_region_has_no_usable_pairs(self):
        ts, _ = self.make_scene()
        gt = np.ones((16, 16), dtype=np.int32)
        gt_maps = {t: LabelMap(16, 16, gt) for t in range(4)}
        with pytest.raises(gru.NoUsablePairs):
            gru.sample_training_pairs(build_graph(ts, d_max=30), ts, gt_maps)


class TestGrupFormat:
    def test_roundtrip_bit_exact(self):
        p = gru.GruParams.init_random(2, 7, 4, seed=17)
        q = gru.read_grup(gru.write_grup(p))
        for (_, a), (_, b) in zip(p.arrays(), q.arrays()):
            assert np.array_equal(a, b)

    def test_bad_header(self):
        with pytest.raises(Exception):
            gru.read_grup("NOPE 2 2 5 3\n")
