"""Synthetic scene corpus: rectangle/ellipse scenes with per-shape depths,
ground-truth holograms from the optics module, deterministic train/val/test
splits, and a flat on-disk layout that an externally produced corpus of the
same shape can drop into.

Layout: <root>/manifest.json plus one directory per sample holding rgb.png,
depth.pfm, amp.pfm, phase.pfm, and meta.json (scale factor and seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from holoforge import image_io, optics

FORMAT_VERSION = 1


@dataclass
class ImageSet:
    """One sample: RGB scene, its depth, and the hologram pair, all [0,1]."""

    rgb: np.ndarray
    depth: np.ndarray
    amplitude: np.ndarray
    phase: np.ndarray
    scale: float
    id: str

    def validate(self):
        s = self.rgb.shape[-1]
        expect = {"rgb": (3, s, s), "depth": (1, s, s), "amplitude": (1, s, s), "phase": (1, s, s)}
        for name, shape in expect.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"sample {self.id}: {name} has shape {arr.shape}, expected {shape}")
            lo, hi = float(arr.min()), float(arr.max())
            if lo < 0.0 or hi > 1.0:
                raise ValueError(f"sample {self.id}: {name} values outside [0,1] (range [{lo:g},{hi:g}])")
        if self.scale < 0:
            raise ValueError(f"sample {self.id}: negative amplitude scale {self.scale}")
        return self


def synth_scene(seed, size: int, params: optics.PropagationParams = optics.PropagationParams(),
                sample_id: str | None = None) -> ImageSet:
    """Deterministically paint 2 to 6 shapes and compute their hologram.

    Later shapes overwrite earlier ones; the depth map follows the paint
    order. Background pixels stay black at depth 1.0 (farthest). Shape
    colors are snapped to the 8-bit grid so the PNG on disk is lossless.
    """
    if not optics.is_power_of_two(size):
        raise ValueError(f"scene size must be a power of two, got {size}")
    rng = np.random.default_rng(seed)
    rgb = np.zeros((3, size, size), dtype=np.float64)
    depth = np.ones((size, size), dtype=np.float64)

    yy, xx = np.mgrid[0:size, 0:size]
    n_shapes = int(rng.integers(2, 7))
    for _ in range(n_shapes):
        kind = int(rng.integers(0, 2))
        color = np.round(rng.uniform(0.25, 1.0, size=3) * 255.0) / 255.0
        shape_depth = float(rng.uniform(0.0, 0.95))
        cy, cx = rng.uniform(0.15, 0.85, size=2) * size
        ry, rx = rng.uniform(size / 10.0, size / 4.0, size=2)
        if kind == 0:
            mask = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        else:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        rgb[:, mask] = color[:, None]
        depth[mask] = shape_depth

    lum = optics.luminance_of_rgb(rgb)
    amp, phase, scale = optics.synthesize_hologram(lum, depth, params)
    sid = sample_id if sample_id is not None else f"scene-{seed}"
    return ImageSet(
        rgb=rgb.astype(np.float32),
        depth=depth[None].astype(np.float32),
        amplitude=amp[None].astype(np.float32),
        phase=phase[None].astype(np.float32),
        scale=scale,
        id=sid,
    ).validate()


@dataclass
class DatasetManifest:
    root: Path
    ids: list
    split_of: dict
    seed: int
    size: int
    optics_params: optics.PropagationParams
    ratio: tuple = (38, 1, 1)
    format_version: int = FORMAT_VERSION

    def split_ids(self, split: str) -> list:
        if split not in ("train", "val", "test"):
            raise ValueError(f"unknown split '{split}'")
        return [i for i in self.ids if self.split_of[i] == split]

    def to_json(self) -> str:
        p = self.optics_params
        doc = {
            "format_version": self.format_version,
            "seed": self.seed,
            "size": self.size,
            "ratio": list(self.ratio),
            "optics": {
                "wavelength": p.wavelength,
                "pitch": p.pitch,
                "n_layers": p.n_layers,
                "z_range": list(p.z_range),
            },
            "samples": {i: self.split_of[i] for i in self.ids},
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str, root) -> "DatasetManifest":
        doc = json.loads(text)
        if doc.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"manifest format version {doc.get('format_version')} not supported")
        o = doc["optics"]
        params = optics.PropagationParams(
            wavelength=o["wavelength"], pitch=o["pitch"],
            n_layers=o["n_layers"], z_range=tuple(o["z_range"]))
        ids = list(doc["samples"])
        return cls(root=Path(root), ids=ids, split_of=dict(doc["samples"]),
                   seed=doc["seed"], size=doc["size"], optics_params=params,
                   ratio=tuple(doc["ratio"]))


def make_splits(ids, ratio=(38, 1, 1), seed: int = 42) -> dict:
    """Deterministic shuffle-and-partition; remainders go to train."""
    ids = list(ids)
    if len(ids) < 3:
        raise ValueError(f"need at least 3 ids to build 3 splits, got {len(ids)}")
    if len(set(ids)) != len(ids):
        raise ValueError("sample ids must be unique")
    total = sum(ratio)
    n = len(ids)
    n_val = n * ratio[1] // total
    n_test = n * ratio[2] // total
    n_train = n - n_val - n_test
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [ids[i] for i in order]
    split_of = {}
    for sid in shuffled[:n_train]:
        split_of[sid] = "train"
    for sid in shuffled[n_train:n_train + n_val]:
        split_of[sid] = "val"
    for sid in shuffled[n_train + n_val:]:
        split_of[sid] = "test"
    return split_of


def save_sample(root, sample: ImageSet):
    d = Path(root) / sample.id
    d.mkdir(parents=True, exist_ok=True)
    image_io.save_png(sample.rgb, d / "rgb.png")
    image_io.save_pfm(sample.depth[0], d / "depth.pfm")
    image_io.save_pfm(sample.amplitude[0], d / "amp.pfm")
    image_io.save_pfm(sample.phase[0], d / "phase.pfm")
    meta = {"id": sample.id, "scale": sample.scale}
    (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_sample(root, sample_id: str) -> ImageSet:
    d = Path(root) / sample_id
    meta = json.loads((d / "meta.json").read_text())
    sample = ImageSet(
        rgb=image_io.load_png(d / "rgb.png"),
        depth=image_io.load_pfm(d / "depth.pfm")[None],
        amplitude=image_io.load_pfm(d / "amp.pfm")[None],
        phase=image_io.load_pfm(d / "phase.pfm")[None],
        scale=float(meta["scale"]),
        id=sample_id,
    )
    return sample.validate()


def generate_dataset(root, n: int, size: int, seed: int = 42,
                     params: optics.PropagationParams = optics.PropagationParams(),
                     ratio=(38, 1, 1), workers: int = 1) -> DatasetManifest:
    """Write n synthetic samples plus the manifest; fully seed-determined.

    Samples are independent, so `workers > 1` generates them from a thread
    pool; each sample's bytes depend only on (seed, index), never on
    completion order.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    ids = [f"{i:05d}" for i in range(n)]

    def build_one(i: int):
        save_sample(root, synth_scene([seed, i], size, params, sample_id=ids[i]))

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(build_one, range(n)))
    else:
        for i in range(n):
            build_one(i)
    split_of = make_splits(ids, ratio=ratio, seed=seed)
    manifest = DatasetManifest(root=root, ids=ids, split_of=split_of,
                               seed=seed, size=size, optics_params=params, ratio=tuple(ratio))
    (root / "manifest.json").write_text(manifest.to_json())
    return manifest


def load_manifest(root) -> DatasetManifest:
    root = Path(root)
    path = root / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"no manifest at {path}")
    return DatasetManifest.from_json(path.read_text(), root)


def load_split(manifest: DatasetManifest, split: str) -> list:
    ids = manifest.split_ids(split)
    return [load_sample(manifest.root, sid) for sid in ids]
