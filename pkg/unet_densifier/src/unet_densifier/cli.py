"""unet-densify: train a per-sequence densifier, then predict dense maps.

Mirrors the pipeline's densify stage on the file level: consumes PPM
frames and sparse PGM labels, emits PGM label maps the evaluation stage
reads unchanged.
"""

import argparse
import sys
from pathlib import Path

import numpy as np
import torch

from .pnm import read_pnm, write_pgm
from .training import predict_dense, train_sequence


def _read_dir(directory: Path, suffix: str):
    if not directory.is_dir():
        raise FileNotFoundError(f"directory not found: {directory}")
    paths = sorted(p for p in directory.iterdir() if p.suffix == suffix)
    if not paths:
        raise FileNotFoundError(f"no *{suffix} files in {directory}")
    return [read_pnm(p.read_bytes()) for p in paths]


def run_train(args) -> int:
    frames = _read_dir(Path(args.frames), ".ppm")
    sparse = _read_dir(Path(args.sparse), ".pgm")
    log = []
    ckpt = train_sequence(frames, sparse, epochs=args.epochs, lr=args.lr,
                          batch=args.batch, seed=args.seed, mode=args.mode,
                          sigma=args.sigma_blur, train_frac=args.train_frac,
                          log=log)
    torch.save(ckpt, args.checkpoint)
    print("train: epoch losses " + " ".join(f"{l:.5f}" for l in log))
    return 0


def run_predict(args) -> int:
    frames = _read_dir(Path(args.frames), ".ppm")
    ckpt = torch.load(args.checkpoint, weights_only=False)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for t, frame in enumerate(frames):
        labels = predict_dense(ckpt, frame)
        (out / f"{args.seq}_{t:05d}.pgm").write_bytes(
            write_pgm(labels.astype(np.uint8)))
    print(f"predict: wrote {len(frames)} label maps to {out}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="unet-densify",
                                 description="learned sparse-to-dense labels")
    subs = ap.add_subparsers(dest="command", required=True)

    tp = subs.add_parser("train")
    tp.add_argument("--frames", required=True, help="directory of PPM frames")
    tp.add_argument("--sparse", required=True,
                    help="directory of sparse PGM labels (0 = void)")
    tp.add_argument("--checkpoint", required=True)
    tp.add_argument("--epochs", type=int, default=15)
    tp.add_argument("--lr", type=float, default=0.01)
    tp.add_argument("--batch", type=int, default=1)
    tp.add_argument("--seed", type=int, default=0)
    tp.add_argument("--mode", default="rgb+sobel",
                    choices=["rgb", "sobel", "rgb+sobel"])
    tp.add_argument("--sigma-blur", type=float, default=0.0,
                    help="input smoothing; useful on textured frames, "
                         "counterproductive at toy object sizes")
    tp.add_argument("--train-frac", type=float, default=1.0,
                    help="train on the first fraction of the frames only")

    pp = subs.add_parser("predict")
    pp.add_argument("--frames", required=True)
    pp.add_argument("--checkpoint", required=True)
    pp.add_argument("--out", required=True)
    pp.add_argument("--seq", default="seq")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            return run_train(args)
        return run_predict(args)
    except Exception as exc:
        print(f"unet-densify {args.command}: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
