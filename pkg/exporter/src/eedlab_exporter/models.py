"""Small convolutional classifier with named tap points."""

from __future__ import annotations

import torch
from torch import nn

DEFAULT_CHANNELS = (8, 12, 12, 16, 16, 16)


class SmallCnn(nn.Module):
    """Six conv/batchnorm/relu/pool blocks, then a linear head.

    Pooling halves the spatial size while at least 2 pixels remain, so the
    latent vector after global flattening stays small. Tap names: block1..
    block6, latent (flattened features before the head), logits, softmax.
    """

    def __init__(self, classes: int, channels=DEFAULT_CHANNELS, image_size: int = 28,
                 in_channels: int = 1):
        super().__init__()
        self.classes = classes
        self.channels = tuple(channels)
        self.image_size = image_size
        self.blocks = nn.ModuleList()
        h = image_size
        cin = in_channels
        for cout in channels:
            pool = nn.MaxPool2d(2) if h >= 2 else nn.Identity()
            self.blocks.append(nn.Sequential(
                nn.Conv2d(cin, cout, 3, padding=1),
                nn.BatchNorm2d(cout),
                nn.ReLU(),
                pool,
            ))
            if h >= 2:
                h //= 2
            cin = cout
        self.flatten = nn.Flatten()
        self.head = nn.Linear(cin * h * h, classes)

    def forward(self, x):
        for block in self.blocks:
            x = block(x)
        return self.head(self.flatten(x))

    def tap_modules(self) -> dict[str, nn.Module]:
        taps = {f"block{i + 1}": blk for i, blk in enumerate(self.blocks)}
        taps["latent"] = self.flatten
        taps["logits"] = self.head
        return taps


class IdentityModel(nn.Module):
    """Forwards its input unchanged; used to validate the export path."""

    def __init__(self):
        super().__init__()
        self.probe = nn.Identity()

    def forward(self, x):
        return self.probe(x)

    def tap_modules(self) -> dict[str, nn.Module]:
        return {"identity": self.probe}


def save_checkpoint(model: SmallCnn, path) -> None:
    torch.save({
        "arch": "small-cnn",
        "classes": model.classes,
        "channels": list(model.channels),
        "image_size": model.image_size,
        "state_dict": model.state_dict(),
    }, path)


def load_checkpoint(path) -> SmallCnn:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    model = SmallCnn(blob["classes"], blob["channels"], blob["image_size"])
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model
