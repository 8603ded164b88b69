"""Datasets: seeded synthetic textured blobs and IDX file ingestion.

Blob images are class prototypes (smoothed Gaussian fields) plus smoothed
per-sample noise, squashed into [0, 1] and quantized to the u8 grid so that
writing them to IDX and reading them back is lossless.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .tensor import derive_seed

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxParseError(ValueError):
    pass


@dataclass(frozen=True)
class BlobSpec:
    classes: int = 4
    samples: int = 64          # per class
    size: int = 32             # square images
    seed: int = 0
    channels: int = 3
    noise: float = 0.6
    smooth: float = 3.0


def synthetic_blobs(spec: BlobSpec):
    """Deterministic list of (image tensor (C,H,W) in [0,1], label) pairs."""
    if spec.classes < 2 or spec.samples < 1 or spec.size < 4:
        raise ValueError(f"bad blob spec: {spec}")
    protos = []
    for c in range(spec.classes):
        rng = np.random.default_rng(derive_seed(spec.seed, 1, c))
        field = gaussian_filter(
            rng.standard_normal((spec.channels, spec.size, spec.size)),
            sigma=(0, spec.smooth, spec.smooth),
        )
        field /= max(field.std(), 1e-12)
        protos.append(field)

    pairs = []
    for c in range(spec.classes):
        for s in range(spec.samples):
            rng = np.random.default_rng(derive_seed(spec.seed, 2, c, s))
            noise = gaussian_filter(
                rng.standard_normal((spec.channels, spec.size, spec.size)),
                sigma=(0, spec.smooth / 2, spec.smooth / 2),
            )
            noise /= max(noise.std(), 1e-12)
            img = 0.5 + 0.18 * protos[c] + 0.18 * spec.noise * noise
            img = np.clip(img, 0.0, 1.0)
            img = np.round(img * 255.0) / 255.0  # u8 grid, lossless via IDX
            pairs.append((img, c))
    return pairs


def parse_synthetic_source(source: str) -> BlobSpec:
    """Parse 'synthetic:classes=4,samples=64,size=32,seed=0[,noise=..,channels=..]'."""
    body = source.split(":", 1)[1] if ":" in source else ""
    kwargs = {}
    if body:
        for part in body.split(","):
            key, _, value = part.partition("=")
            key = key.strip()
            if key in ("classes", "samples", "size", "seed", "channels"):
                kwargs[key] = int(value)
            elif key in ("noise", "smooth"):
                kwargs[key] = float(value)
            else:
                raise ValueError(f"unknown synthetic dataset key {key!r}")
    return BlobSpec(**kwargs)


def ingest_dataset(source: str, channels: int = 3):
    """Load (tensor, label) pairs from a 'synthetic:' spec or 'idx:images,labels'.

    IDX images come back scaled to [0, 1]; single-channel data is replicated
    to the requested channel count so it can feed the standard models.
    """
    if source.startswith("synthetic:") or source == "synthetic":
        return synthetic_blobs(parse_synthetic_source(source))
    if source.startswith("idx:"):
        paths = source[4:].split(",")
        if len(paths) != 2:
            raise ValueError("idx source needs 'idx:<images path>,<labels path>'")
        images = read_idx_images(paths[0])
        labels = read_idx_labels(paths[1])
        if images.shape[0] != labels.shape[0]:
            raise ValueError(
                f"image/label count mismatch: {images.shape[0]} vs {labels.shape[0]}"
            )
        scaled = images.astype(np.float64) / 255.0
        stacked = np.repeat(scaled[:, None, :, :], channels, axis=1)
        return [(stacked[i], int(labels[i])) for i in range(images.shape[0])]
    raise ValueError(f"unknown dataset source {source!r}")


def class_counts(pairs) -> dict:
    counts = {}
    for _, c in pairs:
        counts[c] = counts.get(c, 0) + 1
    return counts


# --- IDX files ---------------------------------------------------------------
# Big-endian headers per the original format: magic, then one u32 per
# dimension. Images are u8 (N, rows, cols); labels u8 (N,).


def read_idx_images(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16:
        raise IdxParseError(f"{path}: header truncated at byte {len(data)}, need 16")
    magic, n, rows, cols = struct.unpack(">IIII", data[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise IdxParseError(
            f"{path}: bad magic 0x{magic:08x} at byte 0, expected 0x{IDX_IMAGES_MAGIC:08x}"
        )
    expected = 16 + n * rows * cols
    if len(data) != expected:
        raise IdxParseError(
            f"{path}: payload length mismatch at byte {len(data)}: "
            f"expected {expected} bytes for {n}x{rows}x{cols}"
        )
    return np.frombuffer(data, dtype=np.uint8, offset=16).reshape(n, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 8:
        raise IdxParseError(f"{path}: header truncated at byte {len(data)}, need 8")
    magic, n = struct.unpack(">II", data[:8])
    if magic != IDX_LABELS_MAGIC:
        raise IdxParseError(
            f"{path}: bad magic 0x{magic:08x} at byte 0, expected 0x{IDX_LABELS_MAGIC:08x}"
        )
    if len(data) != 8 + n:
        raise IdxParseError(
            f"{path}: payload length mismatch at byte {len(data)}: expected {8 + n}"
        )
    return np.frombuffer(data, dtype=np.uint8, offset=8)


def write_idx_images(path, images: np.ndarray) -> None:
    images = np.asarray(images)
    if images.ndim != 3:
        raise ValueError(f"IDX images must be (n, rows, cols), got {images.shape}")
    if images.dtype != np.uint8:
        if images.min() < 0 or images.max() > 1:
            raise ValueError("float images must lie in [0, 1] for u8 quantization")
        images = np.round(images * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape))
        fh.write(images.tobytes())


def write_idx_labels(path, labels) -> None:
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() > 255:
        raise ValueError("labels must fit in u8")
    labels = labels.astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())
