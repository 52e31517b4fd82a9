"""Input feature planes: smoothed RGB and a Sobel edge map.

Smoothing removes the local texture a network could use to shortcut the
sparse supervision; the edge map injects object-boundary structure.
"""

import math

import numpy as np


def gaussian_blur(arr: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian on a (H, W) or (H, W, C) float array."""
    if sigma <= 0:
        return arr.astype(np.float64)
    r = math.ceil(3.0 * sigma)
    xs = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(xs ** 2) / (2.0 * sigma * sigma))
    k /= k.sum()
    data = arr.astype(np.float64)
    squeeze = data.ndim == 2
    if squeeze:
        data = data[..., None]
    h, w, _ = data.shape
    pad = np.pad(data, ((0, 0), (r, r), (0, 0)), mode="edge")
    tmp = np.zeros_like(data)
    for i, kv in enumerate(k):
        tmp += kv * pad[:, i : i + w, :]
    pad = np.pad(tmp, ((r, r), (0, 0), (0, 0)), mode="edge")
    out = np.zeros_like(data)
    for i, kv in enumerate(k):
        out += kv * pad[i : i + h, :, :]
    return out[..., 0] if squeeze else out


def sobel_edges(gray: np.ndarray) -> np.ndarray:
    """Normalized 3x3 Sobel magnitude in [0, 1], replicate borders."""
    g = np.pad(gray.astype(np.float64), 1, mode="edge")
    gx = ((g[:-2, 2:] + 2 * g[1:-1, 2:] + g[2:, 2:])
          - (g[:-2, :-2] + 2 * g[1:-1, :-2] + g[2:, :-2]))
    gy = ((g[2:, :-2] + 2 * g[2:, 1:-1] + g[2:, 2:])
          - (g[:-2, :-2] + 2 * g[:-2, 1:-1] + g[:-2, 2:]))
    return np.hypot(gx, gy) / (4.0 * 255.0 * math.sqrt(2.0))


def frame_features(rgb: np.ndarray, mode: str = "rgb+sobel",
                   sigma: float = 2.0) -> np.ndarray:
    """Stack the selected input planes as (C, H, W) float32 in [0, 1]."""
    if rgb.ndim == 2:
        rgb = np.repeat(rgb[..., None], 3, axis=2)
    blurred = gaussian_blur(rgb, sigma)
    gray = 0.299 * blurred[..., 0] + 0.587 * blurred[..., 1] + 0.114 * blurred[..., 2]
    planes = []
    if "rgb" in mode:
        planes.extend(blurred[..., c] / 255.0 for c in range(3))
    if "sobel" in mode:
        planes.append(sobel_edges(gray))
    if not planes:
        raise ValueError(f"no input planes selected by mode {mode!r}")
    return np.stack(planes).astype(np.float32)
