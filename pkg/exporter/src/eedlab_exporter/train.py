"""Training harness: the small CNN with or without rotation augmentation.

Fixed hyperparameters: Adam, batch 64, learning rate 5e-4, weight decay
1e-5. Checkpoints are written at iteration 0 and then every
`checkpoint_every` steps, so a run of N iterations yields N/200 + 1 exports
at the default cadence.

A note on the augmentation trend: training WITH rotation augmentation shows
each sample at fresh random orientations every step, which pushes the
learned features toward rotation invariance; models trained WITHOUT
augmentation see one fixed orientation per sample and are free to use
orientation-specific features, so their latent rotation EED is expected to
be higher. The companion trend test asserts that direction.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .dumps import load_dataset
from .models import SmallCnn, save_checkpoint
from .transforms import circular_mask, rotate_image

BATCH_SIZE = 64
LEARNING_RATE = 5e-4
WEIGHT_DECAY = 1e-5


@dataclass
class TrainResult:
    checkpoints: list[Path]
    final_accuracy: float | None
    model: SmallCnn


def _to_batch(images: list[np.ndarray]) -> torch.Tensor:
    arr = np.stack([np.asarray(im, np.float32) for im in images])[:, None]
    return torch.from_numpy(arr)


def evaluate_accuracy(model: SmallCnn, images, labels) -> float:
    model.eval()
    hits = 0
    with torch.no_grad():
        for start in range(0, len(images), BATCH_SIZE):
            chunk = images[start:start + BATCH_SIZE]
            pred = model(_to_batch(chunk)).argmax(dim=1).numpy()
            hits += int((pred == labels[start:start + len(chunk)]).sum())
    return hits / max(1, len(images))


def train_small_cnn(data_manifest, augment: bool, seed: int, iterations: int,
                    out_dir, *, group_order: int = 8, checkpoint_every: int = 200,
                    eval_manifest=None, channels=None) -> TrainResult:
    images, labels, meta = load_dataset(data_manifest)
    classes = int(meta["classes"])
    image_size = int(meta["image_size"])
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(seed)
    kwargs = {"channels": channels} if channels else {}
    model = SmallCnn(classes, image_size=image_size, **kwargs)
    optimizer = torch.optim.Adam(model.parameters(), lr=LEARNING_RATE,
                                 weight_decay=WEIGHT_DECAY)
    loss_fn = nn.CrossEntropyLoss()
    rng = np.random.default_rng(seed)

    checkpoints: list[Path] = []

    def snapshot(step):
        path = out_dir / f"ckpt_{step:05d}.pt"
        save_checkpoint(model, path)
        checkpoints.append(path)

    snapshot(0)
    label_t = torch.from_numpy(labels)
    model.train()
    for step in range(1, iterations + 1):
        idx = rng.integers(0, len(images), size=BATCH_SIZE)
        batch = []
        for i in idx:
            img = images[int(i)]
            if augment:
                img = circular_mask(rotate_image(img, int(rng.integers(group_order)),
                                                 group_order))
            batch.append(img)
        x = _to_batch(batch)
        y = label_t[idx]
        optimizer.zero_grad()
        loss = loss_fn(model(x), y)
        loss.backward()
        optimizer.step()
        if step % checkpoint_every == 0:
            model.eval()
            snapshot(step)
            model.train()

    accuracy = None
    if eval_manifest is not None:
        eval_images, eval_labels, _ = load_dataset(eval_manifest)
        accuracy = evaluate_accuracy(model, eval_images, eval_labels)
    model.eval()
    return TrainResult(checkpoints, accuracy, model)
