"""Image to categorical-dataset pipeline.

Grayscale images are binarized, cut into overlapping square patches, and
each patch position gets its own alphabet by a single-pass Hamming-ball
quantizer.  The result is a :class:`DiscreteDataset` with one variable per
patch position.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Alphabet, DiscreteDataset, write_csv
from .errors import EmptyInputError, FormatError, ValidationError

RAW_MAGIC = b"CSIMG1\x00\x00"


@dataclass(frozen=True)
class PatchGrid:
    """Square patches placed every ``stride`` pixels from the top-left corner.

    Positions per axis are ``round((H - patch) / stride) + 1``; a trailing
    strip narrower than half a stride is left uncovered, and an image that
    this grid would overrun is rejected.  28x28 gives an 8x8 grid.
    """

    image_size: tuple = (28, 28)
    patch_size: int = 6
    stride: int = 3

    def __post_init__(self):
        object.__setattr__(self, "image_size", tuple(int(n) for n in self.image_size))
        if self.patch_size < 1 or self.stride < 1:
            raise ValidationError("patch_size and stride must be >= 1")
        for n, count in zip(self.image_size, self.grid):
            if n < self.patch_size or (count - 1) * self.stride + self.patch_size > n:
                raise FormatError(
                    f"image size {self.image_size} is not tiled by patch {self.patch_size}, stride {self.stride}"
                )

    @property
    def grid(self) -> tuple:
        # floor(x + 1/2) rather than round() so that exact halves round up
        return tuple(
            int(np.floor((n - self.patch_size) / self.stride + 0.5)) + 1 for n in self.image_size
        )

    @property
    def n_patches(self) -> int:
        r, c = self.grid
        return r * c

    @property
    def patch_length(self) -> int:
        return self.patch_size**2


def binarize(image, threshold: int = 40) -> np.ndarray:
    """``1`` where the pixel is at least ``threshold``, else ``0``."""
    img = np.asarray(image)
    if img.size and (img.min() < 0 or img.max() > 255):
        raise FormatError("pixel values must lie in 0..255")
    return (img >= threshold).astype(np.uint8)


def patchify(binary, grid: PatchGrid) -> np.ndarray:
    """``n_patches x patch_size^2`` array; patches in row-major grid order, pixels row-major."""
    img = np.asarray(binary)
    if img.shape != tuple(grid.image_size):
        raise FormatError(f"image shape {img.shape} does not match grid {tuple(grid.image_size)}")
    p, s = grid.patch_size, grid.stride
    rows, cols = grid.grid
    windows = np.lib.stride_tricks.sliding_window_view(img, (p, p))[::s, ::s][:rows, :cols]
    return windows.reshape(grid.n_patches, p * p).copy()


def _pack(vectors: np.ndarray) -> np.ndarray:
    """Pack 0/1 rows into ``uint64`` words for fast Hamming distances."""
    bits = np.packbits(vectors.astype(np.uint8), axis=1)
    pad = (-bits.shape[1]) % 8
    if pad:
        bits = np.pad(bits, ((0, 0), (0, pad)))
    return bits.view(">u8")


def _hamming(packed_reps: np.ndarray, packed_vec: np.ndarray) -> np.ndarray:
    return np.bitwise_count(packed_reps ^ packed_vec).sum(axis=1)


def quantize_alphabet(vectors, radius: int = 3):
    """Greedy single-pass quantization.

    Each vector joins the first representative (in creation order) within
    Hamming distance ``radius``; otherwise it becomes a new representative.
    Returns ``(representatives, codes)`` with representatives as a
    ``K x L`` 0/1 array and codes as integer indices.
    """
    vecs = np.asarray(vectors)
    if vecs.ndim != 2:
        raise FormatError("vectors must be a 2-D array of equal-length rows")
    if radius < 0:
        raise ValidationError("radius must be >= 0")
    packed = _pack(vecs)
    reps_idx = []
    reps_packed = np.empty((0, packed.shape[1]), dtype=packed.dtype)
    codes = np.empty(len(vecs), dtype=np.int64)
    for n in range(len(vecs)):
        if reps_idx:
            hit = np.flatnonzero(_hamming(reps_packed, packed[n]) <= radius)
            if hit.size:
                codes[n] = hit[0]
                continue
        codes[n] = len(reps_idx)
        reps_idx.append(n)
        reps_packed = np.vstack([reps_packed, packed[n : n + 1]])
    return vecs[reps_idx].astype(np.uint8), codes


def encode_with_alphabet(vectors, representatives, radius: int = 3):
    """Map vectors to the nearest frozen representative (ties go to the lowest index).

    Returns ``(codes, distances, outside)`` where ``outside`` marks vectors
    farther than ``radius`` from every representative.
    """
    vecs = np.asarray(vectors)
    reps = _pack(np.asarray(representatives))
    packed = _pack(vecs)
    codes = np.empty(len(vecs), dtype=np.int64)
    dist = np.empty(len(vecs), dtype=np.int64)
    for n in range(len(vecs)):
        h = _hamming(reps, packed[n])
        codes[n] = int(np.argmin(h))
        dist[n] = h[codes[n]]
    return codes, dist, dist > radius


def pattern_symbol(bits) -> str:
    return "".join(str(int(b)) for b in bits)


@dataclass(frozen=True)
class PatchDataset:
    dataset: DiscreteDataset
    representatives: tuple
    grid: PatchGrid
    threshold: int
    radius: int

    def sidecar(self) -> dict:
        return {
            "schema": "patch-alphabets/1",
            "grid": {
                "image_size": list(self.grid.image_size),
                "patch_size": self.grid.patch_size,
                "stride": self.grid.stride,
            },
            "threshold": self.threshold,
            "radius": self.radius,
            "alphabets": [
                {str(k): pattern_symbol(r) for k, r in enumerate(reps)} for reps in self.representatives
            ],
        }


def build_patch_dataset(images, grid: PatchGrid | None = None, threshold: int = 40, radius: int = 3) -> PatchDataset:
    """Quantize every patch position independently; symbols are representative IDs."""
    images = list(images)
    if not images:
        raise EmptyInputError("no images given")
    grid = grid or PatchGrid(tuple(np.asarray(images[0]).shape))
    patches = np.stack([patchify(binarize(img, threshold), grid) for img in images])
    alphabets, reps, cols = [], [], []
    for j in range(grid.n_patches):
        r, codes = quantize_alphabet(patches[:, j, :], radius)
        reps.append(r)
        alphabets.append(Alphabet(tuple(str(k) for k in range(len(r)))))
        cols.append(codes)
    samples = np.stack(cols, axis=1)
    names = tuple(f"patch_{j // grid.grid[1]}_{j % grid.grid[1]}" for j in range(grid.n_patches))
    ds = DiscreteDataset(tuple(alphabets), samples, names)
    return PatchDataset(ds, tuple(reps), grid, threshold, radius)


def encode_images(images, patch_data: PatchDataset):
    """Encode new images against frozen per-position alphabets.

    Returns ``(samples, metadata)``; the metadata counts vectors that fell
    outside every representative's radius.
    """
    grid = patch_data.grid
    rows, outside = [], np.zeros(grid.n_patches, dtype=int)
    patches = np.stack([patchify(binarize(img, patch_data.threshold), grid) for img in images])
    for j in range(grid.n_patches):
        codes, _, far = encode_with_alphabet(patches[:, j, :], patch_data.representatives[j], patch_data.radius)
        rows.append(codes)
        outside[j] = int(far.sum())
    return np.stack(rows, axis=1), {"outside_radius": outside.tolist(), "total_outside": int(outside.sum())}


# raster input/output


def _pgm_tokens(data: bytes, count: int, start: int = 0):
    out, pos = [], start
    while len(out) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        end = pos
        while end < len(data) and not data[end : end + 1].isspace():
            end += 1
        if end == pos:
            raise FormatError("truncated PGM header")
        out.append(data[pos:end])
        pos = end
    return out, pos


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) or ASCII (P2) 8-bit portable graymap."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P5", b"P2"):
        raise FormatError(f"{path}: not a P5/P2 graymap")
    (w, h, maxval), pos = _pgm_tokens(data, 3, 2)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise FormatError(f"{path}: bad PGM header") from exc
    if maxval > 255:
        raise FormatError(f"{path}: only 8-bit graymaps are supported")
    if magic == b"P5":
        body = data[pos + 1 : pos + 1 + w * h]
        if len(body) != w * h:
            raise FormatError(f"{path}: truncated pixel data")
        return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()
    vals, _ = _pgm_tokens(data, w * h, pos)
    return np.array([int(v) for v in vals], dtype=np.uint8).reshape(h, w)


def write_pgm(path, image) -> None:
    img = np.asarray(image, dtype=np.uint8)
    h, w = img.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + img.tobytes())


def read_raw(path) -> np.ndarray:
    """Read ``magic, uint32 H, uint32 W, uint32 n`` then ``n*H*W`` bytes; returns ``n x H x W``."""
    data = Path(path).read_bytes()
    head = len(RAW_MAGIC) + 12
    if data[: len(RAW_MAGIC)] != RAW_MAGIC or len(data) < head:
        raise FormatError(f"{path}: not a raw image stack")
    h, w, n = struct.unpack("<III", data[len(RAW_MAGIC) : head])
    body = data[head:]
    if len(body) != n * h * w:
        raise FormatError(f"{path}: expected {n * h * w} pixel bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(n, h, w).copy()


def write_raw(path, images) -> None:
    arr = np.asarray(images, dtype=np.uint8)
    n, h, w = arr.shape
    Path(path).write_bytes(RAW_MAGIC + struct.pack("<III", h, w, n) + arr.tobytes())


def load_images(paths) -> list:
    """Load PGM files and raw stacks, in the order given."""
    out = []
    for p in paths:
        head = Path(p).read_bytes()[:8]
        if head == RAW_MAGIC:
            out.extend(read_raw(p))
        else:
            out.append(read_pgm(p))
    return out


def write_patch_dataset(pd: PatchDataset, csv_path) -> Path:
    """Write the dataset CSV and an alphabet sidecar ``<csv>.alphabets.json``; returns the sidecar path."""
    write_csv(pd.dataset, csv_path)
    side = Path(str(csv_path) + ".alphabets.json")
    side.write_text(json.dumps(pd.sidecar(), indent=1), encoding="utf-8")
    return side
