"""Per-sequence training on sparse labels and dense single-frame inference."""

import math

import numpy as np
import torch

from .features import frame_features
from .loss import NoLabeledPixels, masked_loss
from .model import UNet


class ShapeMismatch(ValueError):
    pass


def _pad_to_multiple(x: torch.Tensor, multiple: int = 8):
    _, _, h, w = x.shape
    ph = (multiple - h % multiple) % multiple
    pw = (multiple - w % multiple) % multiple
    if ph or pw:
        x = torch.nn.functional.pad(x, (0, pw, 0, ph), mode="replicate")
    return x, (h, w)


def train_sequence(frames, sparse_maps, epochs=15, lr=0.01, batch=1, seed=0,
                   mode="rgb+sobel", sigma=0.0, base_width=16,
                   train_frac=1.0, log=None):
    """Train a fresh U-Net on one sequence's sparse labels.

    frames: list of (H, W, 3) uint8 arrays; sparse_maps: list of (H, W)
    integer arrays with 0 = void.  Only the first `train_frac` fraction of
    frames supervises training; random horizontal/vertical flips (seeded)
    augment each step.  Returns a checkpoint dict; appends the per-epoch
    mean loss to `log` when given.  Fully deterministic for a fixed seed.
    """
    if len(frames) != len(sparse_maps):
        raise ShapeMismatch(f"{len(frames)} frames vs {len(sparse_maps)} label maps")
    if not frames:
        raise NoLabeledPixels("empty sequence")
    n_train = max(1, math.ceil(train_frac * len(frames)))
    feats, targets = [], []
    classes = 0
    for rgb, sparse in zip(frames[:n_train], sparse_maps[:n_train]):
        if rgb.shape[:2] != sparse.shape:
            raise ShapeMismatch(f"frame {rgb.shape[:2]} vs labels {sparse.shape}")
        feats.append(torch.from_numpy(frame_features(rgb, mode, sigma)))
        targets.append(torch.from_numpy(np.asarray(sparse, dtype=np.int64)))
        classes = max(classes, int(sparse.max()))
    if classes < 1:
        raise NoLabeledPixels("no labeled pixel in the training frames")
    usable = [i for i in range(n_train) if int(targets[i].max()) > 0]

    torch.manual_seed(seed)
    model = UNet(feats[0].shape[0], classes, base_width)
    optim = torch.optim.Adam(model.parameters(), lr=lr)
    rng = np.random.default_rng(seed)

    model.train()
    for _ in range(epochs):
        order = [usable[i] for i in rng.permutation(len(usable))]
        epoch_losses = []
        for lo in range(0, len(order), batch):
            optim.zero_grad()
            total = 0.0
            chunk = order[lo : lo + batch]
            for i in chunk:
                x = feats[i][None]
                t = targets[i][None]
                if rng.random() < 0.5:
                    x = torch.flip(x, [3])
                    t = torch.flip(t, [2])
                if rng.random() < 0.5:
                    x = torch.flip(x, [2])
                    t = torch.flip(t, [1])
                x, (h, w) = _pad_to_multiple(x)
                total = total + masked_loss(model(x)[..., :h, :w], t[0])
            total = total / len(chunk)
            total.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), 1.0)
            optim.step()
            epoch_losses.append(float(total.detach()))
        if log is not None:
            log.append(float(np.mean(epoch_losses)))
    return {
        "state": model.state_dict(),
        "in_channels": feats[0].shape[0],
        "classes": classes,
        "base_width": base_width,
        "mode": mode,
        "sigma": sigma,
        "height": frames[0].shape[0],
        "width": frames[0].shape[1],
    }


def predict_dense(checkpoint: dict, frame: np.ndarray) -> np.ndarray:
    """Per-pixel argmax labels 1..K for one frame, matching its size."""
    if frame.shape[:2] != (checkpoint["height"], checkpoint["width"]):
        raise ShapeMismatch(
            f"frame {frame.shape[:2]} vs training dims "
            f"({checkpoint['height']}, {checkpoint['width']})"
        )
    model = UNet(checkpoint["in_channels"], checkpoint["classes"],
                 checkpoint["base_width"])
    model.load_state_dict(checkpoint["state"])
    model.eval()
    x = torch.from_numpy(frame_features(frame, checkpoint["mode"],
                                        checkpoint["sigma"]))[None]
    x, (h, w) = _pad_to_multiple(x)
    with torch.no_grad():
        logits = model(x)[0, :, :h, :w]
    if checkpoint["classes"] == 1:
        pred = (torch.sigmoid(logits[0]) > 0.5).long() + 1
    else:
        pred = logits.argmax(dim=0) + 1
    return pred.numpy().astype(np.int32)
