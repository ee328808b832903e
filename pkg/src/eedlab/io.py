"""Bit-exact serialization and dataset construction.

Tensor dumps use a tiny fixed header -- magic "EEDT", version u16 LE,
dtype u8 (0 = float32 LE, 1 = uint8), ndim u8, then ndim u32 LE dims and the
row-major payload -- chosen so any toolchain can write it identically.
Manifests are JSON with sorted keys so writes are byte-deterministic.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .actions import circular_mask, rotate2
from .errors import FormatError, InvalidArgumentError
from .groups import FiniteGroup, group_by_name
from .runtime import LayerSpec, ModelSpec
from .tensors import tensor

MAGIC = b"EEDT"
VERSION = 1
DTYPE_F32 = 0
DTYPE_U8 = 1

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def write_tensor_dump(t: np.ndarray, path) -> None:
    t = np.asarray(t)
    if t.dtype == np.uint8:
        dtype_tag, payload = DTYPE_U8, np.ascontiguousarray(t)
    else:
        dtype_tag, payload = DTYPE_F32, tensor(t)
    if payload.ndim < 1 or payload.ndim > 8:
        raise InvalidArgumentError(f"ndim must be in [1,8], got {payload.ndim}")
    header = struct.pack("<4sHBB", MAGIC, VERSION, dtype_tag, payload.ndim)
    header += struct.pack(f"<{payload.ndim}I", *payload.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.astype("<f4" if dtype_tag == DTYPE_F32 else np.uint8).tobytes())


def read_tensor_dump(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < 8:
        raise FormatError(f"truncated header in {path}", offset=len(blob))
    magic, version, dtype_tag, ndim = struct.unpack_from("<4sHBB", blob, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} in {path}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version} in {path}", offset=4)
    if dtype_tag not in (DTYPE_F32, DTYPE_U8):
        raise FormatError(f"unknown dtype tag {dtype_tag} in {path}", offset=6)
    if not 1 <= ndim <= 8:
        raise FormatError(f"ndim {ndim} outside [1,8] in {path}", offset=7)
    dims_end = 8 + 4 * ndim
    if len(blob) < dims_end:
        raise FormatError(f"truncated dims in {path}", offset=len(blob))
    dims = struct.unpack_from(f"<{ndim}I", blob, 8)
    for i, d in enumerate(dims):
        if d == 0:
            raise FormatError(f"zero dimension in {path}", offset=8 + 4 * i)
    count = int(np.prod(dims))
    esize = 4 if dtype_tag == DTYPE_F32 else 1
    expected = dims_end + count * esize
    if len(blob) != expected:
        raise FormatError(
            f"payload length {len(blob) - dims_end} != {count * esize} "
            f"for dims {dims} in {path}", offset=dims_end)
    if dtype_tag == DTYPE_F32:
        arr = np.frombuffer(blob, dtype="<f4", offset=dims_end).reshape(dims)
        if not np.isfinite(arr).all():
            raise FormatError(f"non-finite values in {path}", offset=dims_end)
        return arr.astype(np.float32)  # copy: frombuffer views are read-only
    return np.frombuffer(blob, dtype=np.uint8, offset=dims_end).reshape(dims).copy()


def read_idx_images(path) -> list[np.ndarray]:
    """Standard big-endian IDX image file -> list of HxW float32 in [0,1]."""
    blob = Path(path).read_bytes()
    if len(blob) < 4:
        raise FormatError(f"truncated IDX header in {path}", offset=len(blob))
    magic, = struct.unpack_from(">I", blob, 0)
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(
            f"magic 0x{magic:08x} is not an IDX image file in {path}", offset=0)
    if len(blob) < 16:
        raise FormatError(f"truncated IDX header in {path}", offset=len(blob))
    _, n, h, w = struct.unpack_from(">IIII", blob, 0)
    expected = 16 + n * h * w
    if len(blob) != expected:
        raise FormatError(f"IDX payload length {len(blob) - 16} != {n * h * w}",
                          offset=16)
    raw = np.frombuffer(blob, dtype=np.uint8, offset=16)
    if n == 0:
        return []
    images = raw.reshape(n, h, w).astype(np.float32) / np.float32(255.0)
    return [np.ascontiguousarray(images[i]) for i in range(n)]


def read_idx_labels(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < 4:
        raise FormatError(f"truncated IDX header in {path}", offset=len(blob))
    magic, = struct.unpack_from(">I", blob, 0)
    if magic != IDX_LABELS_MAGIC:
        raise FormatError(
            f"magic 0x{magic:08x} is not an IDX label file in {path}", offset=0)
    if len(blob) < 8:
        raise FormatError(f"truncated IDX header in {path}", offset=len(blob))
    _, n = struct.unpack_from(">II", blob, 0)
    if len(blob) != 8 + n:
        raise FormatError(f"IDX payload length {len(blob) - 8} != {n}", offset=8)
    return np.frombuffer(blob, dtype=np.uint8, offset=8).astype(np.int64)


def save_json(obj: dict, path) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n",
                          encoding="utf-8")


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON in {path}: {exc}") from exc


# --- datasets -------------------------------------------------------------


@dataclass
class DatasetItem:
    tensor: str
    label: int
    rotation_element: int | None = None


@dataclass
class DatasetManifest:
    name: str
    split: str
    classes: int
    image_size: int
    masked: bool
    rotation_group: str | None
    items: list[DatasetItem]
    base_dir: Path | None = field(default=None, compare=False)

    def to_dict(self) -> dict:
        return {
            "kind": "dataset",
            "name": self.name,
            "split": self.split,
            "classes": self.classes,
            "image_size": self.image_size,
            "masked": self.masked,
            "rotation_group": self.rotation_group,
            "items": [{"tensor": it.tensor, "label": it.label,
                       "rotation_element": it.rotation_element}
                      for it in self.items],
        }


def save_dataset_manifest(man: DatasetManifest, path) -> Path:
    path = Path(path)
    save_json(man.to_dict(), path)
    return path


def load_dataset_manifest(path) -> DatasetManifest:
    path = Path(path)
    d = load_json(path)
    if d.get("kind") != "dataset":
        raise FormatError(f"{path} is not a dataset manifest")
    items = [DatasetItem(it["tensor"], int(it["label"]), it.get("rotation_element"))
             for it in d["items"]]
    classes = int(d["classes"])
    for it in items:
        if not 0 <= it.label < classes:
            raise FormatError(f"label {it.label} outside [0, {classes}) in {path}")
        if not (path.parent / it.tensor).exists():
            raise FormatError(f"missing tensor file {it.tensor} referenced by {path}")
    return DatasetManifest(d["name"], d["split"], classes, int(d["image_size"]),
                           bool(d["masked"]), d.get("rotation_group"), items,
                           base_dir=path.parent)


def load_dataset_tensors(man: DatasetManifest) -> list[np.ndarray]:
    if man.base_dir is None:
        raise InvalidArgumentError("manifest has no base directory; load it from disk")
    return [read_tensor_dump(man.base_dir / it.tensor) for it in man.items]


def _blob_image(rng: np.random.Generator, size: int, label: int) -> np.ndarray:
    c = (size - 1) / 2.0
    ys = np.arange(size)[:, None]
    xs = np.arange(size)[None, :]
    img = np.zeros((size, size), dtype=np.float64)
    for _ in range(label + 1):
        ang = rng.uniform(0.0, 2.0 * np.pi)
        rad = rng.uniform(0.0, 0.6 * c)
        cy = c + rad * np.sin(ang)
        cx = c + rad * np.cos(ang)
        sigma = rng.uniform(size / 10.0, size / 6.0)
        amp = rng.uniform(0.5, 1.0)
        img += amp * np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (2.0 * sigma ** 2))
    peak = img.max()
    if peak > 0:
        img = img / peak
    return img.astype(np.float32)


def _band_noise_image(rng: np.random.Generator, size: int, label: int) -> np.ndarray:
    c = (size - 1) / 2.0
    ys = np.arange(size)[:, None] - c
    xs = np.arange(size)[None, :] - c
    img = np.zeros((size, size), dtype=np.float64)
    for _ in range(3):
        cycles = rng.uniform(label + 1.0, label + 2.0)
        ang = rng.uniform(0.0, 2.0 * np.pi)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        kx = 2.0 * np.pi * cycles / size * np.cos(ang)
        ky = 2.0 * np.pi * cycles / size * np.sin(ang)
        img += np.cos(kx * xs + ky * ys + phase)
    lo, hi = img.min(), img.max()
    if hi > lo:
        img = (img - lo) / (hi - lo)
    return img.astype(np.float32)


SYNTH_KINDS = ("gaussian-blobs", "band-limited-noise")


def synthesize_dataset(kind: str, count: int, size: int, classes: int, seed: int,
                       out_dir) -> DatasetManifest:
    """Seeded, masked, square synthetic images with class-dependent structure."""
    if kind not in SYNTH_KINDS:
        raise InvalidArgumentError(f"unknown synthetic kind {kind!r}")
    if size < 8:
        raise InvalidArgumentError(f"size must be >= 8, got {size}")
    if classes < 1:
        raise InvalidArgumentError("need at least one class")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    make = _blob_image if kind == "gaussian-blobs" else _band_noise_image
    items = []
    for i in range(count):
        label = i % classes
        img = circular_mask(make(rng, size, label))
        fname = f"img_{i:05d}.eedt"
        write_tensor_dump(img, out_dir / fname)
        items.append(DatasetItem(fname, label))
    man = DatasetManifest(f"synth-{kind}", "synthetic", classes, size, True, None, items,
                          base_dir=out_dir)
    save_dataset_manifest(man, out_dir / "dataset.json")
    return man


def build_rotated_dataset(src: DatasetManifest, group: FiniteGroup, mask: bool,
                          exclude_classes, seed: int, out_dir) -> DatasetManifest:
    """Rotate each kept image by a seeded-uniform group element.

    Excluded classes are dropped and the remaining labels are compacted to a
    dense range; the applied element is recorded per item.
    """
    if group.kind != "cyclic":
        raise InvalidArgumentError("rotated datasets need a cyclic group")
    excluded = set(int(c) for c in (exclude_classes or ()))
    kept_labels = sorted(set(it.label for it in src.items) - excluded)
    if not kept_labels:
        raise InvalidArgumentError("every class was excluded")
    relabel = {old: new for new, old in enumerate(kept_labels)}
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    items = []
    n = group.order
    for it in src.items:
        element = int(rng.integers(n))
        if it.label in excluded:
            continue
        img = read_tensor_dump(src.base_dir / it.tensor)
        if img.ndim != 2 or img.shape[0] != img.shape[1]:
            raise InvalidArgumentError(
                f"rotated dataset needs square HxW images, got {img.shape}")
        img = rotate2(img, element, n)
        if mask:
            img = circular_mask(img)
        fname = f"rot_{len(items):05d}.eedt"
        write_tensor_dump(img, out_dir / fname)
        items.append(DatasetItem(fname, relabel[it.label], element))
    man = DatasetManifest(f"{src.name}-rot-{group.name}", src.split,
                          len(kept_labels), src.image_size, mask or src.masked,
                          group.name, items, base_dir=out_dir)
    save_dataset_manifest(man, out_dir / "dataset.json")
    return man


# --- models ---------------------------------------------------------------

_LAYER_INT_FIELDS = ("stride", "padding", "window", "block_size")


def save_model(model: ModelSpec, out_dir, manifest_name: str = "model.json") -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    layers = []
    for idx, layer in enumerate(model.layers):
        entry = {"kind": layer.kind}
        for f in _LAYER_INT_FIELDS:
            entry[f] = getattr(layer, f)
        params = {}
        for pname, arr in layer.params.items():
            fname = f"l{idx:02d}_{pname}.eedt"
            write_tensor_dump(arr, out_dir / fname)
            params[pname] = fname
        entry["params"] = params
        layers.append(entry)
    manifest = {
        "kind": "model",
        "name": model.name,
        "input_shape": list(model.input_shape),
        "split_index": model.split_index,
        "block_taps": list(model.block_taps),
        "regular_block_size": model.regular_block_size,
        "layers": layers,
    }
    path = out_dir / manifest_name
    save_json(manifest, path)
    return path


def load_model(path) -> ModelSpec:
    path = Path(path)
    d = load_json(path)
    if d.get("kind") != "model":
        raise FormatError(f"{path} is not a model manifest")
    layers = []
    for entry in d["layers"]:
        params = {pname: read_tensor_dump(path.parent / fname)
                  for pname, fname in entry.get("params", {}).items()}
        layers.append(LayerSpec(
            entry["kind"],
            stride=int(entry.get("stride", 1)),
            padding=int(entry.get("padding", 0)),
            window=int(entry.get("window", 0)),
            block_size=int(entry.get("block_size", 1)),
            params=params,
        ))
    return ModelSpec(d.get("name", "model"), tuple(d["input_shape"]), layers,
                     int(d["split_index"]),
                     tuple(d.get("block_taps", ())),
                     d.get("regular_block_size"))


# --- activation grids ------------------------------------------------------


@dataclass
class ActivationGrid:
    """Pre-computed activations A[sample, element] plus an optional
    untransformed reference sample for latent normalization."""

    name: str
    group: FiniteGroup
    layer: str
    sample_count: int
    base_dir: Path
    entries: dict[tuple[int, int], str]
    norm_entries: list[str]

    def get(self, sample: int, element: int) -> np.ndarray:
        key = (int(sample), int(element))
        if key not in self.entries:
            raise InvalidArgumentError(f"grid has no entry for {key}")
        return read_tensor_dump(self.base_dir / self.entries[key])

    def norm_features(self):
        if not self.norm_entries:
            return None
        return [read_tensor_dump(self.base_dir / f) for f in self.norm_entries]


def load_activation_grid(path) -> ActivationGrid:
    path = Path(path)
    d = load_json(path)
    if d.get("kind") != "activation-grid":
        raise FormatError(f"{path} is not an activation-grid manifest")
    group = group_by_name(d["group"])
    samples = int(d["samples"])
    entries: dict[tuple[int, int], str] = {}
    for it in d["items"]:
        key = (int(it["sample"]), int(it["element"]))
        if key in entries:
            raise FormatError(f"duplicate grid entry {key} in {path}")
        entries[key] = it["tensor"]
    for i in range(samples):
        for g in range(group.order):
            if (i, g) not in entries:
                raise FormatError(f"grid entry ({i},{g}) missing from {path}")
            if not (path.parent / entries[(i, g)]).exists():
                raise FormatError(f"missing tensor file {entries[(i, g)]} in {path}")
    norm = [it["tensor"] for it in d.get("norm_items", [])]
    for f in norm:
        if not (path.parent / f).exists():
            raise FormatError(f"missing norm tensor file {f} in {path}")
    return ActivationGrid(d.get("name", "grid"), group, d.get("layer", ""),
                          samples, path.parent, entries, norm)


def write_activation_grid(tensors_by_pair: dict, norm_tensors, group_name: str,
                          out_dir, name: str = "grid", layer: str = "") -> Path:
    """Dump a full (sample, element) activation grid plus manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    items = []
    samples = 1 + max(k[0] for k in tensors_by_pair)
    for (i, g), arr in sorted(tensors_by_pair.items()):
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
