"""Pipeline orchestration: one subcommand per stage, file formats between.

Stages exchange the documented containers (.flo, PPM/PGM, TRJ1, GRF1,
SPL1, GRUP1) so each one can be run, cached and replayed in isolation; a
learned densifier can substitute for `densify` without linking against
this package.
"""

import argparse
import os
import sys
from dataclasses import dataclass, fields, replace
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from . import affinity, densify, flowio, gru, metrics, multicut, synthetic, tracker

_PATH_KEYS = ("frames_dir", "fwd_flow_dir", "bwd_flow_dir", "gt_dir", "out_dir")


@dataclass
class PipelineConfig:
    frames_dir: str = "frames"
    fwd_flow_dir: str = "flow_fwd"
    bwd_flow_dir: str = "flow_bwd"
    gt_dir: str = "gt"
    out_dir: str = "out"
    seq: str = "seq"
    sampling_step: int = 8
    c1: float = 0.01
    c2: float = 0.5
    d_max: float = 30.0
    min_overlap: int = 1
    theta: float = 1.0
    window_radius: int = 3
    eps: float = 0.5
    hidden: int = 2
    steps: int = 25
    head: int = 8
    lr: float = 0.001
    batch: int = 256
    epochs: int = 3
    seed: int = 0
    sigma_blur: float = 2.0
    lam: float = 50.0
    label_mode: str = "multi"
    min_count: int = 5
    min_frac: float = 0.05
    jobs: int = 1

    def validate(self):
        if self.sampling_step < 1:
            raise ValueError("sampling_step must be >= 1")
        if self.d_max <= 0 or self.min_overlap < 1:
            raise ValueError("d_max must be > 0 and min_overlap >= 1")
        if self.label_mode not in ("binary", "multi"):
            raise ValueError(f"label_mode {self.label_mode!r}")
        if min(self.hidden, self.steps, self.head, self.batch) < 1:
            raise ValueError("gru dimensions and batch must be >= 1")
        if self.epochs < 0 or self.lr < 0 or self.sigma_blur < 0 or self.lam < 0:
            raise ValueError("negative hyperparameter")
        return self


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _coerce(key: str, value: str):
    kind = _FIELD_TYPES[key]
    if kind in (int, "int"):
        return int(value)
    if kind in (float, "float"):
        return float(value)
    return value


def load_config(path: Path | None, overrides: dict) -> PipelineConfig:
    """Flat `key = value` config file; flag overrides win.

    Relative paths from the config file resolve against its directory;
    relative paths given as flags resolve against the working directory.
    """
    values = {}
    base = Path.cwd()
    if path is not None:
        base = path.parent.resolve()
        for lineno, raw in enumerate(path.read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key == "lambda":  # python keyword, stored as `lam`
                key = "lam"
            if key not in _FIELD_TYPES:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _coerce(key, val)
    from_flags = set(overrides)
    values.update(overrides)
    cfg = PipelineConfig(**values).validate()
    for key in _PATH_KEYS:
        p = Path(getattr(cfg, key))
        if not p.is_absolute():
            root = Path.cwd() if key in from_flags else base
            cfg = replace(cfg, **{key: str(root / p)})
    return cfg


def _list_files(directory: str, suffix: str):
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"directory not found: {d}")
    return sorted(p for p in d.iterdir() if p.suffix == suffix)


def _read_flows(directory: str):
    return [flowio.read_flo(p.read_bytes()) for p in _list_files(directory, ".flo")]


def _read_frames(directory: str):
    return [flowio.read_pnm(p.read_bytes()) for p in _list_files(directory, ".ppm")]


def _read_gt(directory: str) -> dict:
    maps = {}
    for i, p in enumerate(_list_files(directory, ".pgm")):
        maps[i] = flowio.read_labelmap(p.read_bytes())
    return maps


def _out(cfg: PipelineConfig) -> Path:
    p = Path(cfg.out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _load_trajectories(cfg: PipelineConfig) -> tracker.TrajectorySet:
    path = _out(cfg) / "trajectories.trj"
    if not path.is_file():
        raise FileNotFoundError(f"missing {path}; run the track stage first")
    return flowio.read_trj(path.read_text(), sampling_step=cfg.sampling_step)


# ---------------------------------------------------------------------------
# stages


def run_synth(out_dir: str, objects=2, width=64, height=64, n_frames=12,
              seq_name="synth") -> int:
    seq = synthetic.make_sequence(width, height, n_frames, objects)
    root = Path(out_dir)
    for sub in ("frames", "flow_fwd", "flow_bwd", "gt"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for t, img in enumerate(seq.frames):
        (root / "frames" / f"{seq_name}_{t:05d}.ppm").write_bytes(flowio.write_pnm(img))
    for t, (f, b) in enumerate(zip(seq.fwd_flows, seq.bwd_flows)):
        (root / "flow_fwd" / f"{seq_name}_{t:05d}.flo").write_bytes(flowio.write_flo(f))
        (root / "flow_bwd" / f"{seq_name}_{t:05d}.flo").write_bytes(flowio.write_flo(b))
    palette = flowio.default_palette(range(1, 2 + len(seq.velocities)))
    for t, gm in enumerate(seq.gt_maps):
        pgm, _ = flowio.write_labelmap(gm, palette)
        (root / "gt" / f"{seq_name}_{t:05d}.pgm").write_bytes(pgm)
    cfg_lines = [
        "frames_dir = frames",
        "fwd_flow_dir = flow_fwd",
        "bwd_flow_dir = flow_bwd",
        "gt_dir = gt",
        "out_dir = out",
        f"seq = {seq_name}",
    ]
    (root / "config").write_text("\n".join(cfg_lines) + "\n")
    return 0


def run_track(cfg: PipelineConfig) -> int:
    fwd = _read_flows(cfg.fwd_flow_dir)
    bwd = None
    if cfg.bwd_flow_dir and Path(cfg.bwd_flow_dir).is_dir():
        bwd = _read_flows(cfg.bwd_flow_dir) or None
    ts = tracker.track_sequence(fwd, bwd, sampling_step=cfg.sampling_step,
                                c1=cfg.c1, c2=cfg.c2)
    (_out(cfg) / "trajectories.trj").write_text(flowio.write_trj(ts))
    print(f"track: {len(ts.trajectories)} trajectories over {ts.frame_count} frames")
    return 0


def run_graph(cfg: PipelineConfig) -> int:
    ts = _load_trajectories(cfg)
    fwd = _read_flows(cfg.fwd_flow_dir)
    graph = affinity.build_graph(ts, cfg.d_max, cfg.min_overlap)
    graph = affinity.translational_costs(graph, ts, fwd, cfg.window_radius,
                                         cfg.eps, cfg.theta)
    (_out(cfg) / "graph.grf").write_text(flowio.write_grf(graph))
    print(f"graph: {graph.node_count} nodes, {len(graph.edges)} edges")
    return 0


def run_gru_train(cfg: PipelineConfig) -> int:
    ts = _load_trajectories(cfg)
    graph = flowio.read_grf((_out(cfg) / "graph.grf").read_text())
    gt_maps = _read_gt(cfg.gt_dir)
    pairs = gru.sample_training_pairs(graph, ts, gt_maps, seed=cfg.seed,
                                      n_steps=cfg.steps)
    params, losses = gru.train(pairs, epochs=cfg.epochs, lr=cfg.lr,
                               batch=cfg.batch, seed=cfg.seed,
                               hidden_dim=cfg.hidden, head_width=cfg.head)
    (_out(cfg) / "gru.grup").write_text(gru.write_grup(params))
    print(f"gru-train: {len(pairs)} pairs, epoch losses "
          + " ".join(f"{l:.5f}" for l in losses))
    return 0


def run_gru_cost(cfg: PipelineConfig) -> int:
    ts = _load_trajectories(cfg)
    graph = flowio.read_grf((_out(cfg) / "graph.grf").read_text())
    params = gru.read_grup((_out(cfg) / "gru.grup").read_text())
    by_id = ts.by_id()
    pairs = []
    for (u, v) in graph.edges:
        a = by_id[int(graph.node_meta[u])]
        b = by_id[int(graph.node_meta[v])]
        xa, xb = gru.align_pair(a, b, params.n_steps)
        pairs.append(gru.AlignedPair(xa, xb, 0.0))
    probs = gru.predict(pairs, params)
    graph = graph.with_costs(affinity.cost_from_probability(probs))
    (_out(cfg) / "graph_gru.grf").write_text(flowio.write_grf(graph))
    print(f"gru-cost: scored {len(pairs)} edges")
    return 0


def run_cluster(cfg: PipelineConfig, graph_file=None) -> int:
    name = graph_file or "graph.grf"
    graph = flowio.read_grf((_out(cfg) / name).read_text())
    partition, objective = multicut.decompose(graph)
    labels = multicut.partition_to_labels(partition, graph.node_meta)
    (_out(cfg) / "labels.spl").write_text(flowio.write_spl(labels))
    n_comp = len(set(labels.values()))
    print(f"cluster: objective {objective:.4f}, {n_comp} components")
    return 0


def _selection_and_seeds(cfg: PipelineConfig, ts, labels, n_frames):
    selection = densify.select_labels(labels, ts, cfg.label_mode,
                                      cfg.min_count, cfg.min_frac)
    seeds = {}
    for t in range(n_frames):
        sf = densify.rasterize_sparse_labels(ts, labels, t,
                                             selection.frame_mapping(t))
        seeds[t] = sf
    return selection, seeds


def _densify_frame(job):
    img, seeds, lam, sigma_blur = job
    return densify.geodesic_densify(img, seeds, lam, sigma_blur)


def run_densify(cfg: PipelineConfig) -> int:
    frames = _read_frames(cfg.frames_dir)
    ts = _load_trajectories(cfg)
    labels = flowio.read_spl((_out(cfg) / "labels.spl").read_text())
    _, seeds = _selection_and_seeds(cfg, ts, labels, len(frames))
    # rasterized seeds as PGM (0 = void) so external densifiers can train
    # on exactly the sparse labels this stage consumes
    out_sparse = _out(cfg) / "sparse"
    out_sparse.mkdir(exist_ok=True)
    for t, frame in enumerate(frames):
        sparse = np.zeros((frame.height, frame.width), dtype=np.int32)
        for x, y, lab in seeds[t].seeds:
            sparse[y, x] = lab
        pgm, _ = flowio.write_labelmap(
            flowio.LabelMap(frame.width, frame.height, sparse),
            flowio.default_palette(np.unique(sparse)))
        (out_sparse / f"{cfg.seq}_{t:05d}.pgm").write_bytes(pgm)
    jobs = [(frames[t], seeds[t], cfg.lam, cfg.sigma_blur) for t in range(len(frames))]
    if cfg.jobs > 1:
        with Pool(cfg.jobs) as pool:
            maps = pool.map(_densify_frame, jobs)
    else:
        maps = [_densify_frame(j) for j in jobs]
    out_maps = _out(cfg) / "maps"
    out_maps.mkdir(exist_ok=True)
    all_labels = sorted({lab for m in maps for lab in np.unique(m.labels)})
    palette = flowio.default_palette(all_labels)
    for t, lmap in enumerate(maps):
        pgm, ppm = flowio.write_labelmap(lmap, palette)
        (out_maps / f"{cfg.seq}_{t:05d}.pgm").write_bytes(pgm)
        (out_maps / f"{cfg.seq}_{t:05d}.ppm").write_bytes(ppm)
    print(f"densify: wrote {len(maps)} label maps to {out_maps}")
    return 0


def run_eval(cfg: PipelineConfig) -> int:
    pred = [flowio.read_labelmap(p.read_bytes())
            for p in _list_files(str(_out(cfg) / "maps"), ".pgm")]
    gt_list = [flowio.read_labelmap(p.read_bytes())
               for p in _list_files(cfg.gt_dir, ".pgm")]
    if len(pred) != len(gt_list):
        raise ValueError(f"{len(pred)} predicted maps vs {len(gt_list)} gt maps")
    report = metrics.evaluate_sequence(pred, gt_list)
    trj = _out(cfg) / "trajectories.trj"
    spl = _out(cfg) / "labels.spl"
    if trj.is_file() and spl.is_file():
        ts = flowio.read_trj(trj.read_text(), sampling_step=cfg.sampling_step)
        labels = flowio.read_spl(spl.read_text())
        _, seeds = _selection_and_seeds(cfg, ts, labels, len(gt_list))
        report.density = metrics.sparse_density(seeds, dict(enumerate(gt_list)))
    text = report.text()
    (_out(cfg) / "report.txt").write_text(text)
    sys.stdout.write(text)
    return 0


def run_pipeline(cfg: PipelineConfig, use_gru=False) -> int:
    for stage, fn in (
        ("track", run_track),
        ("graph", run_graph),
    ):
        code = fn(cfg)
        if code:
            return code
    graph_file = "graph.grf"
    if use_gru:
        for stage, fn in (("gru-train", run_gru_train), ("gru-cost", run_gru_cost)):
            code = fn(cfg)
            if code:
                return code
        graph_file = "graph_gru.grf"
    code = run_cluster(cfg, graph_file)
    if code:
        return code
    code = run_densify(cfg)
    if code:
        return code
    if Path(cfg.gt_dir).is_dir():
        return run_eval(cfg)
    return 0


# ---------------------------------------------------------------------------
# argument parsing

_OVERRIDE_KEYS = [f.name for f in fields(PipelineConfig)]


def _add_common(sub: argparse.ArgumentParser):
    sub.add_argument("--config", type=Path, default=None,
                     help="flat key = value config file")
    sub.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override a config value (repeatable)")
    sub.add_argument("--jobs", type=int, default=None,
                     help="worker cap (default: MOSEG_JOBS or 1)")
    sub.add_argument("--out", default=None, help="override out_dir")


def _collect_overrides(args) -> dict:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        key, val = (s.strip() for s in item.split("=", 1))
        if key == "lambda":
            key = "lam"
        if key not in _OVERRIDE_KEYS:
            raise ValueError(f"unknown config key {key!r}")
        overrides[key] = _coerce(key, val)
    if args.out is not None:
        overrides["out_dir"] = args.out
    jobs = args.jobs
    if jobs is None:
        jobs = int(os.environ.get("MOSEG_JOBS", "1"))
    overrides["jobs"] = jobs
    return overrides


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="moseg",
                                 description="trajectory motion segmentation pipeline")
    subs = ap.add_subparsers(dest="command", required=True)

    sp = subs.add_parser("synth", help="generate a synthetic test sequence")
    sp.add_argument("--out", required=True)
    sp.add_argument("--objects", type=int, default=2)
    sp.add_argument("--width", type=int, default=64)
    sp.add_argument("--height", type=int, default=64)
    sp.add_argument("--frames", type=int, default=12)
    sp.add_argument("--seq", default="synth")

    for name in ("track", "graph", "gru-train", "gru-cost", "densify", "eval"):
        _add_common(subs.add_parser(name))
    sp = subs.add_parser("cluster")
    _add_common(sp)
    sp.add_argument("--graph-file", default=None,
                    help="graph file inside out_dir (default graph.grf)")
    sp = subs.add_parser("pipeline", help="run every stage in order")
    _add_common(sp)
    sp.add_argument("--use-gru", action="store_true",
                    help="score edges with a gt-trained GRU instead of the "
                         "translational model")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    stage = args.command
    try:
        if stage == "synth":
            return run_synth(args.out, args.objects, args.width, args.height,
                             args.frames, args.seq)
        cfg = load_config(args.config, _collect_overrides(args))
        if stage == "track":
            return run_track(cfg)
        if stage == "graph":
            return run_graph(cfg)
        if stage == "gru-train":
            return run_gru_train(cfg)
        if stage == "gru-cost":
            return run_gru_cost(cfg)
        if stage == "cluster":
            return run_cluster(cfg, args.graph_file)
        if stage == "densify":
            return run_densify(cfg)
        if stage == "eval":
            return run_eval(cfg)
        if stage == "pipeline":
            return run_pipeline(cfg, args.use_gru)
        raise ValueError(f"unknown command {stage!r}")
    except Exception as exc:  # one parseable line, stage named
        print(f"moseg {stage}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
