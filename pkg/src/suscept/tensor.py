"""Dense float64 tensors, the dimension-normalized norm, and seeded Gaussian draws.

Everything downstream (hidden states, perturbations, weights) is carried as a
plain numpy float64 array; this module owns the norm convention and the binary
tensor format shared by checkpoints and perturbation files.
"""
from __future__ import annotations

import struct

import numpy as np

MAGIC = b"SUSC"
FORMAT_VERSION = 1


class ZeroVectorError(ValueError):
    """An operation needed a direction but was handed the zero vector."""


def as_tensor(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def rms_norm(v) -> float:
    """Root-mean-square norm: the euclidean norm divided by sqrt(dim).

    Makes lengths comparable across hidden states of different sizes.
    """
    v = as_tensor(v)
    if v.size == 0:
        raise ValueError("rms_norm of an empty tensor is undefined")
    return float(np.sqrt(np.mean(np.square(v))))


def rms_distance(a, b) -> float:
    """rms_norm of the difference; a and b must have identical shapes."""
    a = as_tensor(a)
    b = as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return rms_norm(a - b)


def project_to_sphere(v, r: float) -> np.ndarray:
    """Rescale v onto the hypersphere of rms radius r."""
    if not r > 0:
        raise ValueError(f"radius must be positive, got {r}")
    v = as_tensor(v)
    n = rms_norm(v)
    if n == 0.0:
        raise ZeroVectorError("cannot project the zero vector: no direction to keep")
    return v * (r / n)


def gaussian_tensor(shape, seed) -> np.ndarray:
    """I.i.d. N(0, 1) entries, reproducible from the seed.

    Uses numpy's PCG64 generator with the ziggurat normal transform; the same
    seed yields a bit-identical tensor on every run.
    """
    if not hasattr(shape, "__iter__"):
        shape = (shape,)
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0 or any(s < 1 for s in shape):
        raise ValueError(f"invalid tensor shape {shape}")
    return np.random.default_rng(seed).standard_normal(shape)


def derive_seed(*parts: int) -> int:
    """Fold integer parts (run seed, input id, radius index, ...) into one u64 seed.

    Built on numpy's SeedSequence so derived streams are independent and the
    mapping is stable across processes.
    """
    ss = np.random.SeedSequence([int(p) for p in parts])
    return int(ss.generate_state(1, np.uint64)[0])


# --- binary tensor format -------------------------------------------------
# magic "SUSC", format version u16, rank u16, dims u64[rank], then the payload
# as little-endian IEEE-754 f64 in row-major order.


def write_tensor(fh, arr) -> None:
    arr = np.ascontiguousarray(np.atleast_1d(as_tensor(arr)))
    fh.write(MAGIC)
    fh.write(struct.pack("<HH", FORMAT_VERSION, arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    fh.write(arr.astype("<f8", copy=False).tobytes())


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ValueError(f"truncated tensor stream: wanted {n} bytes, got {len(data)}")
    return data


def read_tensor(fh) -> np.ndarray:
    magic = _read_exact(fh, 4)
    if magic != MAGIC:
        raise ValueError(f"bad tensor magic {magic!r}, expected {MAGIC!r}")
    version, rank = struct.unpack("<HH", _read_exact(fh, 4))
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported tensor format version {version}")
    dims = struct.unpack(f"<{rank}Q", _read_exact(fh, 8 * rank))
    count = 1
    for d in dims:
        count *= d
    payload = _read_exact(fh, 8 * count)
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(dims)


def save_tensor(path, arr) -> None:
    with open(path, "wb") as fh:
        write_tensor(fh, arr)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_tensor(fh)
