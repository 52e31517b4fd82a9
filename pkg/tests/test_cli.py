"""CLI stage tests on generated data, including determinism and errors."""

import hashlib

import numpy as np
import pytest

from moseg import cli, flowio


def tree_digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(p.name.encode())
            h.update(p.read_bytes())
    return h.hexdigest()


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    assert cli.main(["synth", "--out", str(d), "--objects", "2"]) == 0
    return d


class TestSynth:
    def test_layout(self, synth_dir):
        assert len(list((synth_dir / "frames").glob("*.ppm"))) == 12
        assert len(list((synth_dir / "flow_fwd").glob("*.flo"))) == 11
        assert len(list((synth_dir / "flow_bwd").glob("*.flo"))) == 11
        assert len(list((synth_dir / "gt").glob("*.pgm"))) == 12
        assert (synth_dir / "config").is_file()

    def test_flow_is_exact(self, synth_dir):
        flo = sorted((synth_dir / "flow_fwd").glob("*.flo"))[0]
        f = flowio.read_flo(flo.read_bytes())
        vals = {tuple(v) for v in f.data.reshape(-1, 2).tolist()}
        assert vals <= {(0.0, 0.0), (2.0, 0.0), (-1.0, 1.0)}

    def test_gt_labels(self, synth_dir):
        gt = flowio.read_labelmap(
            sorted((synth_dir / "gt").glob("*.pgm"))[0].read_bytes())
        assert set(np.unique(gt.labels)) == {1, 2, 3}


class TestPipeline:
    def test_full_run_and_report(self, synth_dir):
        cfg = synth_dir / "config"
        assert cli.main(["pipeline", "--config", str(cfg)]) == 0
        out = synth_dir / "out"
        assert (out / "trajectories.trj").is_file()
        assert (out / "graph.grf").is_file()
        assert (out / "labels.spl").is_file()
        assert len(list((out / "maps").glob("*.pgm"))) == 12
        assert len(list((out / "maps").glob("*.ppm"))) == 12
        assert len(list((out / "sparse").glob("*.pgm"))) == 12
        sparse = flowio.read_labelmap(
            sorted((out / "sparse").glob("*.pgm"))[0].read_bytes())
        present = set(np.unique(sparse.labels))
        assert 0 in present and len(present) > 2  # mostly void plus labels
        report = (out / "report.txt").read_text()
        values = dict(line.split("=") for line in report.strip().splitlines())
        assert float(values["f_measure"]) >= 0.85
        assert int(values["extracted_objects"]) == 2
        assert float(values["density"]) > 0

    def test_stage_replay_is_byte_identical(self, synth_dir, tmp_path):
        cfg = synth_dir / "config"
        out = synth_dir / "out"
        first = tree_digest(out)
        assert cli.main(["cluster", "--config", str(cfg)]) == 0
        assert cli.main(["densify", "--config", str(cfg)]) == 0
        assert cli.main(["eval", "--config", str(cfg)]) == 0
        assert tree_digest(out) == first

    def test_missing_flow_dir_exits_nonzero(self, tmp_path, capsys):
        cfg = tmp_path / "config"
        cfg.write_text("fwd_flow_dir = nope\nout_dir = out\n")
        code = cli.main(["track", "--config", str(cfg)])
        assert code != 0
        err = capsys.readouterr().err
        assert "track" in err and err.count("\n") == 1

    def test_unknown_config_key_rejected(self, tmp_path):
        cfg = tmp_path / "config"
        cfg.write_text("no_such_key = 1\n")
        assert cli.main(["track", "--config", str(cfg)]) != 0

    def test_flag_overrides(self, synth_dir, tmp_path):
        out = tmp_path / "alt"
        code = cli.main(["track", "--config", str(synth_dir / "config"),
                         "--out", str(out), "--set", "sampling_step=16"])
        assert code == 0
        ts = flowio.read_trj((out / "trajectories.trj").read_text())
        # coarser sampling -> fewer trajectories than the default run
        base = flowio.read_trj(
            (synth_dir / "out" / "trajectories.trj").read_text())
        assert 0 < len(ts.trajectories) < len(base.trajectories)


class TestGruStages:
    def test_gru_train_and_cost(self, synth_dir):
        cfg = synth_dir / "config"
        assert cli.main(["gru-train", "--config", str(cfg),
                         "--set", "steps=10"]) == 0
        assert (synth_dir / "out" / "gru.grup").is_file()
        assert cli.main(["gru-cost", "--config", str(cfg)]) == 0
        g1 = flowio.read_grf((synth_dir / "out" / "graph.grf").read_text())
        g2 = flowio.read_grf((synth_dir / "out" / "graph_gru.grf").read_text())
        assert np.array_equal(g1.edges, g2.edges)
        assert not np.array_equal(g1.costs, g2.costs)

    def test_gru_costs_cluster_the_scene(self, synth_dir, tmp_path):
        # the default 3-epoch budget underfits a 12-frame scene; scaled up,
        # the learned costs must reproduce the three motion components
        out = tmp_path / "gru_e2e"
        cfg = str(synth_dir / "config")
        for args in (
            ["track", "--config", cfg],
            ["graph", "--config", cfg],
            ["gru-train", "--config", cfg, "--set", "lr=0.1",
             "--set", "epochs=60", "--set", "seed=1"],
            ["gru-cost", "--config", cfg],
            ["cluster", "--config", cfg, "--graph-file", "graph_gru.grf"],
        ):
            assert cli.main(args + ["--out", str(out)]) == 0
        labels = flowio.read_spl((out / "labels.spl").read_text())
        sizes = sorted(
            np.unique(list(labels.values()), return_counts=True)[1].tolist(),
            reverse=True)
        assert len(sizes) == 3 and sizes[1] >= 4 and sizes[2] >= 4
