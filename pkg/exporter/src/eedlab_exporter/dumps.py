"""Writers/readers for the shared on-disk formats.

Implemented independently of the measurement package; the byte layout is the
interface contract. Tensor dumps: magic "EEDT", u16 LE version 1, u8 dtype
(0 = float32 LE, 1 = uint8), u8 ndim, ndim x u32 LE dims, row-major payload.
Manifests are JSON with sorted keys.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"EEDT"
VERSION = 1


def write_tensor_dump(arr: np.ndarray, path) -> None:
    arr = np.asarray(arr)
    if arr.dtype == np.uint8:
        tag, payload = 1, np.ascontiguousarray(arr)
    else:
        payload = np.ascontiguousarray(arr, dtype=np.float32)
        if not np.isfinite(payload).all():
            raise ValueError("refusing to dump non-finite values")
        tag = 0
    if not 1 <= payload.ndim <= 8:
        raise ValueError(f"ndim must be in [1,8], got {payload.ndim}")
    header = struct.pack("<4sHBB", MAGIC, VERSION, tag, payload.ndim)
    header += struct.pack(f"<{payload.ndim}I", *payload.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.astype("<f4" if tag == 0 else np.uint8).tobytes())


def read_tensor_dump(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    magic, version, tag, ndim = struct.unpack_from("<4sHBB", blob, 0)
    if magic != MAGIC or version != VERSION:
        raise ValueError(f"not a tensor dump: {path}")
    dims = struct.unpack_from(f"<{ndim}I", blob, 8)
    off = 8 + 4 * ndim
    if tag == 0:
        return np.frombuffer(blob, dtype="<f4", offset=off).reshape(dims).astype(np.float32)
    return np.frombuffer(blob, dtype=np.uint8, offset=off).reshape(dims).copy()


def save_json(obj: dict, path) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n",
                          encoding="utf-8")


def load_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def load_dataset(manifest_path) -> tuple[list[np.ndarray], np.ndarray, dict]:
    """Images, labels, raw manifest from a dataset manifest on disk."""
    manifest_path = Path(manifest_path)
    d = load_json(manifest_path)
    if d.get("kind") != "dataset":
        raise ValueError(f"{manifest_path} is not a dataset manifest")
    images = [read_tensor_dump(manifest_path.parent / it["tensor"])
              for it in d["items"]]
    labels = np.array([int(it["label"]) for it in d["items"]], dtype=np.int64)
    return images, labels, d


def write_activation_grid(entries: dict, norm_tensors, group_name: str, out_dir,
                          name: str, layer: str) -> Path:
    """Grid of activations keyed by (sample, element), consumable by the
    measurement CLI's --activations mode."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = 1 + max(k[0] for k in entries)
    items = []
    for (i, g), arr in sorted(entries.items()):
        fname = f"act_s{i:04d}_g{g}.eedt"
        write_tensor_dump(arr, out_dir / fname)
        items.append({"sample": i, "element": g, "tensor": fname})
    norm_items = []
    for j, arr in enumerate(norm_tensors or []):
        fname = f"norm_{j:04d}.eedt"
        write_tensor_dump(arr, out_dir / fname)
        norm_items.append({"sample": j, "tensor": fname})
    manifest = {
        "kind": "activation-grid",
        "name": name,
        "group": group_name,
        "layer": layer,
        "samples": samples,
        "items": items,
        "norm_items": norm_items,
    }
    path = out_dir / f"{name}.json"
    save_json(manifest, path)
    return path
