"""Toy-scale U-Net: three down/up levels with skip connections.

Two stabilizers matter at this data scale: GroupNorm (training runs at
batch size 1) and bilinear-upsample decoders.  Stride-2 transposed
convolutions are avoided deliberately: with supervision restricted to
grid-aligned seed pixels they can learn a pixel-parity shortcut and emit
checkerboards.
"""

import torch
import torch.nn as nn


def _block(cin, cout):
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, padding=1),
        nn.GroupNorm(4, cout),
        nn.ReLU(inplace=True),
        nn.Conv2d(cout, cout, 3, padding=1),
        nn.GroupNorm(4, cout),
        nn.ReLU(inplace=True),
    )


def _up(cin, cout):
    return nn.Sequential(
        nn.Upsample(scale_factor=2, mode="bilinear", align_corners=False),
        nn.Conv2d(cin, cout, 3, padding=1),
    )


class UNet(nn.Module):
    """Encoder-decoder with skips; output logits match the input size.

    Inputs must have spatial dimensions divisible by 8 (three poolings);
    callers pad and un-pad around that constraint.
    """

    def __init__(self, in_channels: int, classes: int, base_width: int = 16):
        super().__init__()
        w = base_width
        self.enc1 = _block(in_channels, w)
        self.enc2 = _block(w, 2 * w)
        self.enc3 = _block(2 * w, 4 * w)
        self.bottom = _block(4 * w, 8 * w)
        self.pool = nn.MaxPool2d(2)
        self.up3 = _up(8 * w, 4 * w)
        self.dec3 = _block(8 * w, 4 * w)
        self.up2 = _up(4 * w, 2 * w)
        self.dec2 = _block(4 * w, 2 * w)
        self.up1 = _up(2 * w, w)
        self.dec1 = _block(2 * w, w)
        self.head = nn.Conv2d(w, classes, 1)

    def forward(self, x):
        e1 = self.enc1(x)
        e2 = self.enc2(self.pool(e1))
        e3 = self.enc3(self.pool(e2))
        b = self.bottom(self.pool(e3))
        d3 = self.dec3(torch.cat([self.up3(b), e3], dim=1))
        d2 = self.dec2(torch.cat([self.up2(d3), e2], dim=1))
        d1 = self.dec1(torch.cat([self.up1(d2), e1], dim=1))
        return self.head(d1)
