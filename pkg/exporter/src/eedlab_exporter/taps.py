"""Activation export: forward hooks dumped into shared grid manifests.

The exporter applies the group element on the input side (rotating the image
before the forward pass); the measurement side applies elements on the
activation side. Grids therefore hold A[sample, element] = f_layer(g x).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .dumps import save_json, write_activation_grid
from .transforms import circular_mask, rotate_image


@dataclass
class TapPlan:
    model: torch.nn.Module
    taps: list[str]
    images: list[np.ndarray]          # HxW float32, the dataset slice
    group_order: int                  # cyclic group c<n> acting by rotations
    out_dir: Path
    name: str = "export"
    norm_images: list[np.ndarray] = field(default_factory=list)
    mask_after_rotation: bool = True


def _capture(model: torch.nn.Module, taps: list[str], x: np.ndarray) -> dict[str, np.ndarray]:
    available = model.tap_modules()
    missing = [t for t in taps if t not in available and t != "softmax"]
    if missing:
        raise KeyError(f"unknown tap layer(s) {missing}; available: "
                       f"{sorted(available) + ['softmax']}")
    grabbed: dict[str, np.ndarray] = {}
    handles = []
    for name in taps:
        if name == "softmax":
            continue
        module = available[name]

        def hook(_m, _inp, out, name=name):
            grabbed[name] = out.detach().squeeze(0).numpy().astype(np.float32)

        handles.append(module.register_forward_hook(hook))
    try:
        with torch.no_grad():
            tens = torch.from_numpy(np.ascontiguousarray(x, dtype=np.float32))
            if tens.ndim == 2:
                tens = tens[None, None]
            elif tens.ndim == 3:
                tens = tens[None]
            logits = model(tens)
        if "softmax" in taps:
            grabbed["softmax"] = torch.softmax(logits.squeeze(0), dim=0).numpy() \
                .astype(np.float32)
    finally:
        for h in handles:
            h.remove()
    return grabbed


def export_activations(plan: TapPlan) -> Path:
    """Dump one grid per tap plus a top-level manifest; returns its path."""
    plan.model.eval()
    out_dir = Path(plan.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n = plan.group_order
    per_tap: dict[str, dict] = {t: {} for t in plan.taps}
    shapes: dict[str, tuple] = {}
    for i, img in enumerate(plan.images):
        for g in range(n):
            rotated = rotate_image(img, g, n)
            if plan.mask_after_rotation:
                rotated = circular_mask(rotated)
            acts = _capture(plan.model, plan.taps, rotated)
            for tap, arr in acts.items():
                prev = shapes.setdefault(tap, arr.shape)
                if prev != arr.shape:
                    raise ValueError(f"tap {tap} shape changed: {prev} vs {arr.shape}")
                per_tap[tap][(i, g)] = arr
    norm_per_tap: dict[str, list] = {t: [] for t in plan.taps}
    for img in plan.norm_images:
        base = circular_mask(np.asarray(img, np.float32)) \
            if plan.mask_after_rotation else np.asarray(img, np.float32)
        acts = _capture(plan.model, plan.taps, base)
        for tap, arr in acts.items():
            norm_per_tap[tap].append(arr)
    grids = {}
    for tap in plan.taps:
        path = write_activation_grid(per_tap[tap], norm_per_tap[tap],
                                     f"c{n}", out_dir / tap,
                                     name=f"{plan.name}-{tap}", layer=tap)
        grids[tap] = str(path.relative_to(out_dir))
    manifest = {
        "kind": "export",
        "name": plan.name,
        "group": f"c{n}",
        "samples": len(plan.images),
        "taps": {tap: {"grid": grids[tap], "shape": list(shapes[tap])}
                 for tap in plan.taps},
    }
    path = out_dir / "export.json"
    save_json(manifest, path)
    return path
